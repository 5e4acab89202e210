use lobsim::book::{OrderId, Price, Qty, Side};
use lobsim::event::{MarketEvent, MICROS_PER_SEC};
use lobsim::experiment::{Terminal, TrackedOrder};
use lobsim::reversal::features::{FeatureConfig, FeatureVector};
use lobsim::reversal::{LogisticModel, ModelFile, Standardizer, TTestResult, TrainConfig, N_FEATURES};
use lobsim::strategy::{
    format_undirectional_row, hourly_returns, reportable, run_basic_mm, run_imbalance_maker, run_imbalance_taker,
    run_reversal_balanced, run_reversal_undirectional, sharpe_annualized, FeeSchedule, StrategyError, StrategyReport,
    UndirectionalRow,
};
use lobsim::synth::{generate_synth_flow, SynthFlowConfig};

const S: i64 = MICROS_PER_SEC;

fn d(ts: i64, side: Side, p: i64, q: u64) -> MarketEvent {
    MarketEvent::depth(ts, side, p, q)
}

fn t(ts: i64, aggressor: Side, p: i64, q: u64) -> MarketEvent {
    MarketEvent::trade(ts, aggressor, p, q)
}

#[test]
fn both_quotes_fill_at_an_unchanged_mid() {
    let events = vec![
        d(0, Side::Bid, 1000, 5),
        d(0, Side::Ask, 1001, 5),
        t(S, Side::Ask, 1000, 5),
        d(S, Side::Bid, 1000, 5),
        t(2 * S, Side::Bid, 1001, 5),
        d(2 * S, Side::Ask, 1001, 5),
    ];
    let r = run_basic_mm(&events, &FeeSchedule::default()).unwrap();
    assert_eq!(r.roundtrips.len(), 1);
    assert_eq!(r.trades, 2);
    let rt = &r.roundtrips[0];
    assert_eq!((rt.open.side, rt.open.price, rt.close.price), (Side::Bid, Price(1000), Price(1001)));
    assert!((rt.gross_bp - 10.0).abs() < 1e-9);
    assert!((rt.realized_bp - 11.0).abs() < 1e-9);
    assert_eq!(rt.holding_s, 1.0);
}

#[test]
fn adverse_move_closes_one_tick_lower() {
    let events = vec![
        d(0, Side::Bid, 1000, 5),
        d(0, Side::Ask, 1001, 5),
        t(S, Side::Ask, 1000, 5),
        d(S, Side::Bid, 999, 4),
        d(S, Side::Ask, 1000, 3),
        t(2 * S, Side::Bid, 1000, 3),
    ];
    let r = run_basic_mm(&events, &FeeSchedule::default()).unwrap();
    assert_eq!(r.roundtrips.len(), 1);
    let rt = &r.roundtrips[0];
    assert_eq!((rt.open.price, rt.close.price, rt.close.side), (Price(1000), Price(1000), Side::Ask));
    // the spread was given back: no price gain, only the two rebates
    assert_eq!(rt.gross_bp, 0.0);
    assert!((rt.realized_bp - 1.0).abs() < 1e-12);
}

#[test]
fn balanced_book_never_opens_the_imbalance_gate() {
    let mut events = vec![d(0, Side::Bid, 1000, 5), d(0, Side::Ask, 1001, 5)];
    for k in 1..50 {
        let q = 3 + (k % 4) as u64;
        events.push(d(k * S, Side::Bid, 1000, q));
        events.push(d(k * S, Side::Ask, 1001, q));
    }
    for cancel in [None, Some(0.0)] {
        let r = run_imbalance_maker(&events, 0.5, cancel, &FeeSchedule::default()).unwrap();
        assert_eq!((r.trades, r.open_at_end), (0, false));
    }
    assert_eq!(
        run_imbalance_maker(&events, 1.0, None, &FeeSchedule::default()).unwrap_err(),
        StrategyError::BadThreshold(1.0)
    );
}

#[test]
fn cancel_threshold_avoids_the_adverse_fill() {
    let events = vec![
        d(0, Side::Bid, 1000, 9),
        d(0, Side::Ask, 1001, 1),
        // bid support fades over several seconds
        d(S, Side::Bid, 1000, 4),
        d(2 * S, Side::Bid, 1000, 1),
        d(3 * S, Side::Ask, 1001, 3),
        t(4 * S, Side::Ask, 1000, 1),
        d(4 * S, Side::Bid, 999, 5),
    ];
    let fees = FeeSchedule::default();
    let keep = run_imbalance_maker(&events, 0.5, None, &fees).unwrap();
    assert!(keep.open_at_end);
    let cancel = run_imbalance_maker(&events, 0.5, Some(0.0), &fees).unwrap();
    assert!(!cancel.open_at_end);
    assert_eq!(cancel.trades, 0);
}

fn flow(seed: u64, coupling: f64, duration_s: f64) -> Vec<MarketEvent> {
    generate_synth_flow(&SynthFlowConfig {
        seed,
        duration_s,
        imbalance_coupling: coupling,
        ..SynthFlowConfig::default()
    })
    .unwrap()
}

fn check_roundtrips(r: &StrategyReport) {
    for rt in &r.roundtrips {
        assert_eq!(rt.open.side, rt.close.side.opposite());
        assert!(rt.open.ts <= rt.close.ts);
        assert!((rt.realized_bp - (rt.gross_bp - rt.fees_bp)).abs() <= 1e-12);
    }
    // inventory stays in {-1, 0, 1}: roundtrips never overlap
    for w in r.roundtrips.windows(2) {
        assert!(w[0].close.ts <= w[1].open.ts);
    }
    assert_eq!(r.trades, 2 * r.roundtrips.len());
}

#[test]
fn maker_strategies_on_coupled_flow() {
    let events = flow(31, 0.8, 3.0 * 3600.0);
    let fees = FeeSchedule::default();
    let mm = run_basic_mm(&events, &fees).unwrap();
    let imb = run_imbalance_maker(&events, 0.5, None, &fees).unwrap();
    let imbc = run_imbalance_maker(&events, 0.5, Some(0.0), &fees).unwrap();
    for r in [&mm, &imb, &imbc] {
        check_roundtrips(r);
        for rt in &r.roundtrips {
            assert_eq!(rt.fees_bp, -1.0);
            assert_eq!(rt.spread_cost_bp, 0.0);
        }
    }
    assert!(mm.mean_ret_bp < 0.0, "{}", mm.mean_ret_bp);
    assert!(imb.trades < mm.trades);
    assert!(mm.sharpe_annualized.is_some());
}

#[test]
fn taker_accounting() {
    let events = flow(32, 0.8, 3600.0);
    let r = run_imbalance_taker(&events, 0.5, &FeeSchedule::default()).unwrap();
    check_roundtrips(&r);
    assert!(!r.roundtrips.is_empty());
    for rt in &r.roundtrips {
        assert!((rt.realized_bp - (rt.pre_fee_bp - 3.0 - rt.spread_cost_bp)).abs() <= 1e-12);
        assert!(rt.spread_cost_bp > 0.0);
    }
    let free = FeeSchedule {
        maker_bp: 0.0,
        taker_bp: 0.0,
    };
    let r0 = run_imbalance_taker(&events, 0.5, &free).unwrap();
    assert!(r0.mean_pre_fee_bp > 0.0);
    assert_eq!(r0.mean_pre_fee_bp, r.mean_pre_fee_bp);
}

fn stub_model(alpha0: f64) -> ModelFile {
    let st = Standardizer {
        mean: vec![0.0; N_FEATURES],
        std: vec![1.0; N_FEATURES],
        kept: vec![],
    };
    let m = LogisticModel {
        alpha0,
        alphas: vec![],
    };
    ModelFile::new(&st, &m, &TrainConfig::default(), 0, true, &[], &[])
}

#[test]
fn balanced_reversal_at_zero_threshold_is_the_basic_market_maker() {
    let events = flow(33, 0.8, 1800.0);
    let fees = FeeSchedule::default();
    let mm = run_basic_mm(&events, &fees).unwrap();
    let rb = run_reversal_balanced(&events, &stub_model(0.0), &FeatureConfig::default(), 0.0, &fees).unwrap();
    assert_eq!(rb.roundtrips, mm.roundtrips);
    assert_eq!(rb.open_at_end, mm.open_at_end);
    let never = run_reversal_balanced(&events, &stub_model(-800.0), &FeatureConfig::default(), 0.3, &fees).unwrap();
    assert_eq!(never.trades, 0);
}

#[test]
fn sharpe_examples() {
    let k = (24.0f64 * 365.0).sqrt();
    assert_eq!(sharpe_annualized(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 0.0);
    let s = sharpe_annualized(&[3.0, 1.0, 3.0, 1.0]).unwrap();
    assert!((s - 2.0 / (4.0f64 / 3.0).sqrt() * k).abs() < 1e-9);
    assert_eq!(sharpe_annualized(&[2.0, 2.0]), Err(StrategyError::DegenerateVariance));
    assert_eq!(sharpe_annualized(&[2.0]), Err(StrategyError::DegenerateVariance));
}

#[test]
fn hourly_buckets_include_quiet_hours() {
    let events = vec![
        d(0, Side::Bid, 1000, 5),
        d(0, Side::Ask, 1001, 5),
        t(S, Side::Ask, 1000, 5),
        d(S, Side::Bid, 1000, 5),
        t(2 * S, Side::Bid, 1001, 5),
        d(2 * S, Side::Ask, 1001, 5),
        d(3 * 3600 * S, Side::Ask, 1001, 6),
    ];
    let r = run_basic_mm(&events, &FeeSchedule::default()).unwrap();
    let h = hourly_returns(&r.roundtrips, 0, 3 * 3600 * S);
    assert_eq!(h.len(), 4);
    assert!((h[0] - 11.0).abs() < 1e-9);
    assert_eq!(&h[1..], &[0.0, 0.0, 0.0]);
}

fn candidate(k: usize, filled: bool, ret: f64) -> TrackedOrder {
    let mut values = vec![0.0; N_FEATURES];
    values[0] = k as f64;
    TrackedOrder {
        id: OrderId(k as u64),
        side: Side::Bid,
        limit_price: Price(1000),
        qty: Qty(1),
        t0: k as i64,
        seq0: k as u64,
        qnear0: Qty(1),
        qopp0: Qty(1),
        imb0: 0.0,
        terminal: if filled {
            Terminal::Filled {
                ts: k as i64 + 1,
                seq: k as u64 + 1,
                qp: 0.0,
                la: Qty(0),
                lb: Qty(0),
                qnear: Qty(1),
                qopp: Qty(1),
            }
        } else {
            Terminal::Canceled {
                ts: k as i64 + 1,
                seq: k as u64 + 1,
            }
        },
        mid_move: 0,
        drift_instant: None,
        drift_tau: vec![],
        markout_1s: None,
        forward_ret: Some(ret),
        reversal_ret: None,
        features: Some(FeatureVector {
            values,
            flagged: vec![],
        }),
    }
}

#[test]
fn undirectional_thresholds() {
    let orders: Vec<TrackedOrder> = (0..40).map(|k| candidate(k, k % 3 != 0, (k % 7) as f64 - 3.0)).collect();
    let refs: Vec<&TrackedOrder> = orders.iter().collect();
    let model = stub_model(0.3);
    let all = run_reversal_undirectional(&refs, &model, 0.0, 1.0);
    assert_eq!(all.orders, 40);
    assert!((all.fill_prob - 26.0 / 40.0).abs() < 1e-12);
    // gate open everywhere: same population as the baseline
    let tt = all.ttest.unwrap();
    assert!(tt.t_stat.abs() < 1e-12);
    let none = run_reversal_undirectional(&refs, &model, 1.0, 1.0);
    assert_eq!(none.orders, 0);
    assert!(none.ttest.is_none());
}

#[test]
fn undirectional_row_layout() {
    let row = UndirectionalRow {
        p: 0.3,
        orders: 233,
        orders_per_day: 233.0,
        fill_prob: 0.8545,
        mean_ret_bp: -0.32,
        std_ret_bp: 3.78,
        ttest: Some(TTestResult {
            t_stat: 3.062602,
            df: 1e9,
            p_value: 0.0011,
            n_a: 200,
            n_b: 1000,
        }),
    };
    assert_eq!(format_undirectional_row(&row), "0.30 | 233 | 0.8545 | -0.32 | 3.78 | 0.0011");
}

#[test]
fn long_holding_rows_are_not_reportable() {
    let events = flow(34, 0.8, 600.0);
    let mut a = run_basic_mm(&events, &FeeSchedule::default()).unwrap();
    let mut b = a.clone();
    a.avg_holding_s = 120.0;
    b.avg_holding_s = 601.0;
    let rows = vec![(0.1, a), (0.2, b)];
    let kept = reportable(&rows);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].0, 0.1);
}
