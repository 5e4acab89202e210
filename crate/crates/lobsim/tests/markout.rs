use lobsim::book::{OrderId, Price, Qty, Side};
use lobsim::experiment::{run_experiment, ExperimentConfig, OutcomeDataset, QuotingMode, Terminal, TrackedOrder};
use lobsim::markout::{
    fillprob_vs_forward_return, hist_bin, markout_table_csv, summarize_markouts, QpBin, SizeBin, HIST_BINS,
};
use lobsim::synth::{generate_synth_flow, SynthFlowConfig};
use proptest::prelude::*;

fn filled(qnear: u64, qopp: u64, qp: f64, markout: f64) -> TrackedOrder {
    TrackedOrder {
        id: OrderId(1),
        side: Side::Bid,
        limit_price: Price(1000),
        qty: Qty(1),
        t0: 0,
        seq0: 0,
        qnear0: Qty(qnear),
        qopp0: Qty(qopp),
        imb0: 0.0,
        terminal: Terminal::Filled {
            ts: 1,
            seq: 1,
            qp,
            la: Qty(0),
            lb: Qty(0),
            qnear: Qty(qnear),
            qopp: Qty(qopp),
        },
        mid_move: 0,
        drift_instant: None,
        drift_tau: vec![],
        markout_1s: Some(markout),
        forward_ret: None,
        reversal_ret: None,
        features: None,
    }
}

fn dataset(orders: Vec<TrackedOrder>) -> OutcomeDataset {
    let n = orders.len() as u64;
    let f = orders.iter().filter(|o| o.is_filled()).count() as u64;
    OutcomeDataset {
        mode: QuotingMode::Continuous,
        drift_horizons_s: vec![],
        orders,
        submitted: n,
        filled: f,
        canceled: n - f,
        open_at_end: 0,
        skipped_events: 0,
    }
}

#[test]
fn queue_position_bins_partition_the_unit_interval() {
    let cases = [
        (0.0, QpBin::Front),
        (0.0999, QpBin::Front),
        (0.1, QpBin::Early),
        (0.4, QpBin::Late),
        (0.7499, QpBin::Late),
        (0.75, QpBin::Back),
        (1.0, QpBin::Back),
    ];
    for (qp, bin) in cases {
        assert_eq!(QpBin::of(qp), bin, "{qp}");
    }
    assert_eq!(hist_bin(-100.0), 0);
    assert_eq!(hist_bin(0.0), 140);
    assert_eq!(hist_bin(0.24), 140);
    assert_eq!(hist_bin(99.0), HIST_BINS - 1);
}

#[test]
fn single_fill_fills_one_cell() {
    let t = summarize_markouts(&dataset(vec![filled(1, 1, 0.0, -0.058)]));
    assert_eq!(t.total(), 1);
    // with one observation every size sits on both cuts
    let c = t.cell(SizeBin::Small, SizeBin::Small, QpBin::Front);
    assert_eq!((c.n, c.avg_bp, c.min_bp, c.max_bp, c.std_bp), (1, -0.058, -0.058, -0.058, 0.0));
}

#[test]
fn table_row_layout() {
    // one large-near / small-opposite front fill among otherwise medium queues
    let mut orders: Vec<_> = (0..9).map(|k| filled(5 + k % 3, 5 + k % 3, 0.5, 1.0)).collect();
    orders.push(filled(100, 1, 0.05, -0.058));
    let csv = markout_table_csv(&summarize_markouts(&dataset(orders)));
    assert!(
        csv.lines().any(|l| l == "large,small,0-0.1,1,-0.058,-0.058,-0.058,0.000"),
        "{csv}"
    );
    assert_eq!(csv.lines().count(), 1 + 36);
}

fn arb_order() -> impl Strategy<Value = TrackedOrder> {
    (1u64..60, 1u64..60, 0.0f64..=1.0, -40.0f64..30.0, any::<bool>(), prop::option::of(-20.0f64..20.0)).prop_map(
        |(n, o, qp, m, fill, fwd)| {
            let mut x = filled(n, o, qp, m);
            if !fill {
                x.terminal = Terminal::Canceled { ts: 1, seq: 1 };
                x.markout_1s = None;
            }
            x.forward_ret = fwd;
            x
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cells_partition_the_filled_orders(orders in prop::collection::vec(arb_order(), 0..300)) {
        let n_filled = orders.iter().filter(|o| o.is_filled()).count() as u64;
        let t = summarize_markouts(&dataset(orders));
        prop_assert_eq!(t.total(), n_filled);
        for c in t.cells.iter().flatten().flatten() {
            prop_assert_eq!(c.histogram.iter().sum::<u64>(), c.n);
            if c.n > 0 {
                prop_assert!(c.min_bp <= c.avg_bp && c.avg_bp <= c.max_bp);
                prop_assert!(c.std_bp >= 0.0);
            }
        }
    }

    #[test]
    fn curve_frequencies_are_proportions(orders in prop::collection::vec(arb_order(), 0..300), bin in 0.5f64..5.0) {
        let c = fillprob_vs_forward_return(&orders, bin);
        let with_ret = orders.iter().filter(|o| o.forward_ret.is_some()).count() as u64;
        prop_assert_eq!(c.points.iter().map(|p| p.n).sum::<u64>(), with_ret);
        for p in &c.points {
            prop_assert!(p.n > 0);
            prop_assert!((0.0..=1.0).contains(&p.fill_freq));
        }
    }
}

#[test]
fn adverse_only_stream_fills_everything() {
    let orders: Vec<_> = (0..40)
        .map(|k| {
            let mut o = filled(3, 3, 0.0, -1.0);
            o.forward_ret = Some(-(k as f64) * 0.7);
            o
        })
        .collect();
    let c = fillprob_vs_forward_return(&orders, 1.0);
    assert!(!c.points.is_empty());
    assert!(c.points.iter().all(|p| p.fill_freq == 1.0));
}

#[test]
fn fill_frequency_falls_with_forward_return() {
    let events = generate_synth_flow(&SynthFlowConfig {
        seed: 9,
        duration_s: 3600.0,
        ..SynthFlowConfig::default()
    })
    .unwrap();
    let ds = run_experiment(&events, &ExperimentConfig::default()).unwrap();
    let c = fillprob_vs_forward_return(&ds.orders, 1.0);
    assert!(c.spearman(20) < -0.5, "{}", c.spearman(20));
    assert!(c.filled_mean_ret < 0.0);
    assert_eq!(summarize_markouts(&ds).total(), ds.orders.iter().filter(|o| o.markout_1s.is_some()).count() as u64);
}
