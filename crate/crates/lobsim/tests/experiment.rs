mod support {
    pub mod l3_oracle;
}

use lobsim::book::{BookState, OrderId, Price, Qty, Side};
use lobsim::event::{DepthEvent, MarketEvent, MICROS_PER_SEC};
use lobsim::experiment::{
    drift_instant, drift_tau, markout_1s, run_experiment, ExperimentConfig, ExperimentError, QuotingMode, Terminal,
    TrackedOrder,
};
use lobsim::synth::{generate_synth_flow, SynthFlowConfig};
use support::l3_oracle::check_queue_positions;

const S: i64 = MICROS_PER_SEC;

fn book(bid: (i64, u64), ask: (i64, u64)) -> BookState {
    let mut b = BookState::new();
    for (side, (p, q)) in [(Side::Bid, bid), (Side::Ask, ask)] {
        let d = DepthEvent {
            side,
            price: Price(p),
            new_total: Qty(q),
        };
        b.apply_depth(0, &d).unwrap();
    }
    b
}

fn order(side: Side, limit: i64, filled: bool) -> TrackedOrder {
    let terminal = if filled {
        Terminal::Filled {
            ts: S,
            seq: 1,
            qp: 0.0,
            la: Qty(0),
            lb: Qty(0),
            qnear: Qty(1),
            qopp: Qty(1),
        }
    } else {
        Terminal::Canceled { ts: S, seq: 1 }
    };
    TrackedOrder {
        id: OrderId(1),
        side,
        limit_price: Price(limit),
        qty: Qty(1),
        t0: 0,
        seq0: 0,
        qnear0: Qty(1),
        qopp0: Qty(1),
        imb0: 0.0,
        terminal,
        mid_move: 0,
        drift_instant: None,
        drift_tau: vec![],
        markout_1s: None,
        forward_ret: None,
        reversal_ret: None,
        features: None,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[test]
fn instantaneous_drift_uses_microprice_when_mid_is_unchanged() {
    let o = order(Side::Bid, 1000, true);
    let t0 = book((1000, 5), (1001, 5));
    let after = book((1000, 2), (1001, 5));
    assert!(after.microprice().unwrap() < t0.microprice().unwrap());
    let want = ((2.0 * 1001.0 + 5.0 * 1000.0) / 7.0 / 1000.0 - 1.0) * 1e4;
    assert!(close(drift_instant(&o, &after, &t0).unwrap(), want));
}

#[test]
fn instantaneous_drift_uses_midprice_after_the_queue_clears() {
    let o = order(Side::Bid, 1000, true);
    let t0 = book((1000, 5), (1001, 5));
    // next bid one tick down: the mid lands on the limit price
    assert_eq!(drift_instant(&o, &book((999, 4), (1001, 5)), &t0).unwrap(), 0.0);
    // a gap below: the mid falls under it
    let d = drift_instant(&o, &book((998, 4), (1001, 5)), &t0).unwrap();
    assert!(close(d, (999.5 / 1000.0 - 1.0) * 1e4));
    assert!(d < 0.0);
    assert_eq!(
        drift_instant(&order(Side::Bid, 1000, false), &t0, &t0),
        Err(ExperimentError::NotFilled)
    );
}

#[test]
fn drift_after_tau() {
    let flat = book((1000, 5), (1001, 5));
    let buy = order(Side::Bid, 1000, true);
    let d = drift_tau(&buy, &flat, 5.0).unwrap();
    assert!(close(d, (1000.5 / 1000.0 - 1.0) * 1e4));

    // sell filled at 1001; the microprice then sits one tick higher
    let sell = order(Side::Ask, 1001, true);
    let up = book((1001, 5), (1003, 5));
    assert!(close(drift_tau(&sell, &up, 5.0).unwrap(), -1.0 / 1001.0 * 1e4));

    // a horizon at the fill time reads the same microprice as the instantaneous branch
    let at_fill = book((1000, 2), (1001, 5));
    let t0 = book((1000, 5), (1001, 5));
    assert_eq!(drift_tau(&buy, &at_fill, 1.0).unwrap(), drift_instant(&buy, &at_fill, &t0).unwrap());
    assert_eq!(drift_tau(&buy, &at_fill, 0.5), Err(ExperimentError::NotFilled));
}

#[test]
fn one_second_markout() {
    let buy = order(Side::Bid, 1000, true);
    assert!(close(markout_1s(&buy, &book((1000, 5), (1001, 5))).unwrap(), 5.0));
    assert!(close(markout_1s(&buy, &book((1000, 1), (1002, 1))).unwrap(), 10.0));
    assert!(close(markout_1s(&buy, &book((998, 1), (999, 1))).unwrap(), -15.0));
    assert_eq!(
        markout_1s(&order(Side::Bid, 1000, false), &book((1000, 1), (1001, 1))),
        Err(ExperimentError::NotFilled)
    );
}

fn d(ts: i64, side: Side, p: i64, q: u64) -> MarketEvent {
    MarketEvent::depth(ts, side, p, q)
}

#[test]
fn exhausting_the_queue_fills_the_order() {
    let events = vec![
        d(0, Side::Bid, 1000, 5),
        d(0, Side::Ask, 1001, 5),
        MarketEvent::trade(S, Side::Ask, 1000, 5),
        d(S, Side::Bid, 999, 4),
        d(3 * S, Side::Ask, 1001, 6),
    ];
    let ds = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    let bid = ds.orders.iter().find(|o| o.side == Side::Bid).unwrap();
    assert_eq!(bid.limit_price, Price(1000));
    assert_eq!(bid.qnear0, Qty(5));
    match bid.terminal {
        Terminal::Filled { ts, qp, la, lb, .. } => {
            assert_eq!(ts, S);
            assert_eq!((la, lb), (Qty(5), Qty(0)));
            assert_eq!(qp, 1.0);
        }
        t => panic!("{t:?}"),
    }
    // mid after the terminal event: bid gone, ask 1001
    assert!(bid.mid_move <= 0);
    // one second later the book is bid 999 / ask 1001
    assert!(close(bid.markout_1s.unwrap(), 0.0));
    assert_eq!(ds.submitted, ds.filled + ds.canceled);
}

#[test]
fn better_price_cancels_the_order() {
    let events = vec![
        d(0, Side::Bid, 1000, 5),
        d(0, Side::Ask, 1002, 5),
        d(S, Side::Bid, 1001, 3),
        d(2 * S, Side::Ask, 1002, 4),
    ];
    let ds = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    let first = &ds.orders[0];
    assert_eq!(first.side, Side::Bid);
    assert_eq!(first.terminal, Terminal::Canceled { ts: S, seq: 2 });
    assert!(first.mid_move > 0);
    assert_eq!(ds.open_at_end, 2);
}

#[test]
fn empty_stream_gives_empty_outcomes() {
    let ds = run_experiment(&[], &ExperimentConfig::default()).unwrap();
    assert!(ds.orders.is_empty());
    assert_eq!((ds.submitted, ds.filled, ds.canceled), (0, 0, 0));
    let bad = ExperimentConfig::with_mode(QuotingMode::Periodic { interval_s: 0.0 });
    assert_eq!(run_experiment(&[], &bad), Err(ExperimentError::BadInterval(0.0)));
}

fn synth(seed: u64, duration_s: f64) -> Vec<MarketEvent> {
    generate_synth_flow(&SynthFlowConfig {
        seed,
        duration_s,
        ..SynthFlowConfig::default()
    })
    .unwrap()
}

#[test]
fn fills_and_cancels_follow_the_mid_move() {
    for seed in [11, 12] {
        let events = synth(seed, 1200.0);
        for mode in [QuotingMode::Continuous, QuotingMode::Periodic { interval_s: 10.0 }] {
            let ds = run_experiment(&events, &ExperimentConfig::with_mode(mode)).unwrap();
            assert!(ds.filled > 0 && ds.canceled > 0);
            for o in &ds.orders {
                assert_eq!(o.is_filled(), o.mid_move <= 0, "{o:?}");
            }
            assert_eq!(ds.submitted, ds.filled + ds.canceled);
        }
    }
}

#[test]
fn continuous_mode_keeps_one_order_per_side() {
    let events = synth(5, 900.0);
    let ds = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    for side in [Side::Bid, Side::Ask] {
        let mine: Vec<_> = ds.orders.iter().filter(|o| o.side == side).collect();
        for w in mine.windows(2) {
            assert_eq!(w[1].t0, w[0].terminal.ts());
            assert_eq!(w[1].seq0, terminal_seq(w[0]) + 1);
        }
    }
}

fn terminal_seq(o: &TrackedOrder) -> u64 {
    match o.terminal {
        Terminal::Filled { seq, .. } | Terminal::Canceled { seq, .. } => seq,
    }
}

#[test]
fn periodic_mode_submits_on_the_grid() {
    let events = synth(6, 900.0);
    let start = events[0].ts;
    let iv = 10 * S;
    let ds = run_experiment(&events, &ExperimentConfig::with_mode(QuotingMode::Periodic { interval_s: 10.0 })).unwrap();
    let cont = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    assert_ne!(ds.submitted, cont.submitted);
    for o in &ds.orders {
        assert_eq!((o.t0 - start) % iv, 0);
        assert!(o.t0 > start);
    }
    let bids = ds.orders.iter().filter(|o| o.side == Side::Bid).count() as u64;
    assert!(bids + ds.open_at_end / 2 + 1 >= 89, "{bids} bid submissions");
}

#[test]
fn queue_positions_match_the_l3_oracle() {
    let events = synth(21, 1800.0);
    for mode in [QuotingMode::Continuous, QuotingMode::Periodic { interval_s: 10.0 }] {
        let ds = run_experiment(&events, &ExperimentConfig::with_mode(mode)).unwrap();
        let r = check_queue_positions(&events, &ds);
        assert_eq!(r.fills_checked as u64, ds.filled);
        assert_eq!(r.qp_mismatches, 0, "{r:?}");
        assert_eq!(r.fill_set_mismatches, 0, "{r:?}");
        for o in ds.orders.iter().filter_map(|o| o.qp()) {
            assert!((0.0..=1.0).contains(&o));
        }
    }
}

#[test]
fn horizon_values_present_when_stream_extends_past_them() {
    let events = synth(7, 600.0);
    let end = events.last().unwrap().ts;
    let ds = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    for o in ds.orders.iter().filter(|o| o.is_filled()) {
        let t = o.terminal.ts();
        assert!(o.drift_instant.is_some());
        assert_eq!(o.markout_1s.is_some(), t + S <= end, "{o:?}");
        assert_eq!(o.forward_ret.is_some(), t + 5 * S <= end);
    }
}

#[test]
fn reversal_return_reads_near_top_at_next_mid_change() {
    let events = vec![
        d(0, Side::Bid, 1000, 5),
        d(0, Side::Ask, 1001, 5),
        MarketEvent::trade(S, Side::Ask, 1000, 5),
        d(S, Side::Bid, 1000, 4),
        // a size change alone leaves the mid where it is
        d(2 * S, Side::Ask, 1001, 8),
        // ask steps back a tick: first mid change, bid still 1000
        d(3 * S, Side::Ask, 1002, 3),
        d(3 * S, Side::Ask, 1001, 0),
        d(4 * S, Side::Bid, 1001, 2),
    ];
    let ds = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    let o = ds.orders.iter().find(|o| o.side == Side::Bid && o.is_filled()).unwrap();
    assert_eq!(o.reversal_ret, Some(0.0));
    assert_eq!(lobsim::reversal::label(o), 0);
}
