//! Pipeline stages. Each reads its inputs from the output directory (or the
//! configured event log) and writes CSV/JSON/SVG artifacts next to them.

use std::fs;
use std::path::{Path, PathBuf};

use lobsim::data::{parse_stream, write_stream_with_header};
use lobsim::event::MarketEvent;
use lobsim::experiment::{outcomes_csv, run_experiment, ExperimentConfig, OutcomeDataset};
use lobsim::fill_prob::{build_surface, fit_ols, surface_csv, FillSurface, BINS};
use lobsim::markout::{
    curve_csv, fillprob_vs_forward_return, markout_table_csv, summarize_markouts, QpBin, SizeBin, HIST_BINS,
};
use lobsim::reversal::logistic::log_likelihood;
use lobsim::reversal::{
    chronological_split, coefficient_csv, design, feature_group, feature_names, permutation_importance,
    select_candidates, train_logistic, ImportanceMetric, ModelFile, Standardizer, TrainConfig, TrainError,
};
use lobsim::strategy::{
    blotter_csv, format_undirectional_row, run_basic_mm, run_imbalance_maker, run_imbalance_taker,
    run_reversal_balanced, run_reversal_undirectional, stream_days, StrategyReport,
};
use lobsim::venue::Venue;
use serde_json::json;

use crate::config::{component_seed, Component, RunConfig};
use crate::svg;
use crate::CliError;

pub const EVENTS: &str = "events.jsonl";
pub const OUTCOMES: &str = "outcomes.json";
pub const MODEL: &str = "model.json";

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(p, bytes)?;
        Ok(())
    }

    fn read(&self, p: &Path) -> Result<Vec<u8>, CliError> {
        fs::read(p).map_err(|_| CliError::MissingArtifact(p.to_path_buf()))
    }

    fn events(&self) -> Result<Vec<MarketEvent>, CliError> {
        let p = self.cfg.input.clone().unwrap_or_else(|| self.path(EVENTS));
        let bytes = self.read(&p)?;
        Ok(parse_stream(&bytes).map_err(|e| CliError::Data(e.to_string()))?.events)
    }

    fn outcomes(&self) -> Result<OutcomeDataset, CliError> {
        let bytes = self.read(&self.path(OUTCOMES))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{OUTCOMES}: {e}")))
    }

    fn model(&self) -> Result<ModelFile, CliError> {
        let bytes = self.read(&self.path(MODEL))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{MODEL}: {e}")))
    }

    fn surface(&self, ds: &OutcomeDataset) -> Result<FillSurface, CliError> {
        build_surface(ds).map_err(|e| CliError::Data(e.to_string()))
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("in-memory serialization");
    s.push('\n');
    s
}

pub fn synth(ctx: &Ctx) -> Result<(), CliError> {
    let sc = ctx.cfg.synth_config();
    let events = lobsim::synth::generate_synth_flow(&sc).map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.write(EVENTS, write_stream_with_header(&sc.header(), &events))?;
    let mut venue = Venue::new();
    let (mut sum, mut n) = (0.0, 0u64);
    for ev in &events {
        venue
            .apply(ev)
            .map_err(|e| CliError::Invariant(format!("generator produced an invalid event: {e}")))?;
        if let Ok(i) = venue.book().imbalance() {
            sum += i;
            n += 1;
        }
    }
    let duration = match (events.first(), events.last()) {
        (Some(a), Some(b)) => (b.ts - a.ts) as f64 / 1e6,
        _ => 0.0,
    };
    println!(
        "synth: events={} duration_s={duration:.3} mean_imbalance={:.4}",
        events.len(),
        sum / n.max(1) as f64
    );
    Ok(())
}

pub fn experiment(ctx: &Ctx) -> Result<(), CliError> {
    let events = ctx.events()?;
    let cfg = ExperimentConfig {
        mode: ctx.cfg.mode,
        features: ctx.cfg.features.then(|| ctx.cfg.feature_config()),
        ..ExperimentConfig::default()
    };
    let ds = run_experiment(&events, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    let violations = ds
        .orders
        .iter()
        .filter(|o| o.is_filled() != (o.mid_move <= 0))
        .count();
    if violations > 0 {
        return Err(CliError::Invariant(format!(
            "{violations} orders break the fill/mid-move correspondence"
        )));
    }
    ctx.write("outcomes.csv", outcomes_csv(&ds))?;
    ctx.write(OUTCOMES, serde_json::to_vec(&ds).expect("in-memory serialization"))?;
    println!(
        "experiment: submitted={} filled={} canceled={} open_at_end={} fill_rate={:.4}",
        ds.submitted,
        ds.filled,
        ds.canceled,
        ds.open_at_end,
        ds.fill_rate()
    );
    Ok(())
}

pub fn fit_surface(ctx: &Ctx) -> Result<(), CliError> {
    let ds = ctx.outcomes()?;
    let s = ctx.surface(&ds)?;
    ctx.write("surface.csv", surface_csv(&s))?;
    let fit = fit_ols(&s);
    let fit_json = match &fit {
        Ok(f) => json!({
            "betas": f.beta.map(finite),
            "r2": f.r2,
            "r2_degenerate": f.r2_degenerate,
            "pvalues": f.pvalues.map(finite),
            "cells": f.n_cells,
            "low_count_cells": f.low_count_cells,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let summary = json!({
        "fit": fit_json,
        "percentiles": { "near_p99": s.p99_near, "opp_p99": s.p99_opp },
        "defined_cells": s.defined_cells(),
        "edges_near": s.grid.edges_near,
        "edges_opp": s.grid.edges_opp,
    });
    ctx.write("surface.json", pretty(&summary))?;
    match fit {
        Ok(f) => println!("fit-surface: {}", lobsim::fill_prob::format_fit(&f)),
        Err(e) => println!("fit-surface: {} defined cells, no fit ({e})", s.defined_cells()),
    }
    Ok(())
}

pub fn markouts(ctx: &Ctx) -> Result<(), CliError> {
    let ds = ctx.outcomes()?;
    let t = summarize_markouts(&ds);
    ctx.write("markouts.csv", markout_table_csv(&t))?;
    let c = fillprob_vs_forward_return(&ds.orders, ctx.cfg.return_bin_bp);
    ctx.write("markout_curve.csv", curve_csv(&c))?;
    let summary = json!({
        "near_cuts": [t.near_cuts.lo, t.near_cuts.hi],
        "opp_cuts": [t.opp_cuts.lo, t.opp_cuts.hi],
        "filled": t.total(),
        "filled_mean_forward_ret_bp": finite(c.filled_mean_ret),
        "curve_spearman": finite(c.spearman(1)),
    });
    ctx.write("markouts.json", pretty(&summary))?;
    println!(
        "markouts: filled={} curve_bins={} filled_mean_forward_ret_bp={:.4}",
        t.total(),
        c.points.len(),
        c.filled_mean_ret
    );
    Ok(())
}

fn report_row(r: &StrategyReport) -> serde_json::Value {
    json!({
        "name": r.name,
        "roundtrips": r.roundtrips.len(),
        "trades": r.trades,
        "mean_ret_bp": finite(r.mean_ret_bp),
        "std_ret_bp": finite(r.std_ret_bp),
        "mean_pre_fee_bp": finite(r.mean_pre_fee_bp),
        "avg_holding_s": finite(r.avg_holding_s),
        "sharpe_annualized": r.sharpe_annualized,
        "open_at_end": r.open_at_end,
    })
}

fn pnl_csv(r: &StrategyReport) -> String {
    let mut s = String::from("ts,cum_bp\n");
    for (ts, v) in &r.cum_pnl {
        s.push_str(&format!("{ts},{v:.6}\n"));
    }
    s
}

pub fn backtest(ctx: &Ctx) -> Result<(), CliError> {
    let events = ctx.events()?;
    let c = &ctx.cfg;
    let err = |e: lobsim::strategy::StrategyError| CliError::Data(e.to_string());
    let reports = vec![
        run_basic_mm(&events, &c.fees).map_err(err)?,
        run_imbalance_maker(&events, c.imb_post_thr, None, &c.fees).map_err(err)?,
        run_imbalance_maker(&events, c.imb_post_thr, Some(c.imb_cancel_thr), &c.fees).map_err(err)?,
        run_imbalance_taker(&events, c.taker_thr, &c.fees).map_err(err)?,
    ];
    let mut table = String::from("strategy,roundtrips,mean_ret_bp,std_ret_bp,mean_pre_fee_bp,avg_holding_s,sharpe\n");
    for r in &reports {
        ctx.write(&format!("blotter_{}.csv", r.name), blotter_csv(r))?;
        ctx.write(&format!("pnl_{}.csv", r.name), pnl_csv(r))?;
        table.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.3},{}\n",
            r.name,
            r.roundtrips.len(),
            r.mean_ret_bp,
            r.std_ret_bp,
            r.mean_pre_fee_bp,
            r.avg_holding_s,
            r.sharpe_annualized.map_or(String::new(), |s| format!("{s:.2}"))
        ));
        println!(
            "backtest: {} roundtrips={} mean_ret_bp={:.4} pre_fee_bp={:.4}",
            r.name,
            r.roundtrips.len(),
            r.mean_ret_bp,
            r.mean_pre_fee_bp
        );
    }
    ctx.write("backtest.csv", table)?;
    let rows: Vec<_> = reports.iter().map(report_row).collect();
    ctx.write("backtest.json", pretty(&json!(rows)))?;
    Ok(())
}

pub fn train(ctx: &Ctx) -> Result<(), CliError> {
    let ds = ctx.outcomes()?;
    let surface = ctx.surface(&ds)?;
    let cands = select_candidates(&ds, &surface, ctx.cfg.candidate_threshold);
    let (tr, te) = chronological_split(&cands);
    let (xtr, ytr) = design(&tr);
    let (xte, yte) = design(&te);
    if xtr.is_empty() || xte.is_empty() {
        return Err(CliError::Data(format!(
            "{} candidates carry features; need both a training and a test half",
            cands.len()
        )));
    }
    let st = Standardizer::fit(&xtr);
    let ztr = st.transform_all(&xtr);
    let zte = st.transform_all(&xte);
    let tc = TrainConfig {
        l2: ctx.cfg.l2,
        max_iter: ctx.cfg.max_iter,
        ..TrainConfig::default()
    };
    let (model, iterations, converged) = match train_logistic(&ztr, &ytr, &tc) {
        Ok(o) => (o.model, o.iterations, true),
        Err(TrainError::NonConvergence {
            model,
            iterations,
            grad_norm,
        }) => {
            eprintln!("train: warning: gradient max-norm {grad_norm:.3e} after {iterations} iterations");
            (*model, iterations, false)
        }
        Err(e) => return Err(CliError::Data(e.to_string())),
    };
    let file = ModelFile::new(&st, &model, &tc, iterations, converged, &xtr, &ytr);
    ctx.write(MODEL, pretty(&serde_json::to_value(&file).expect("serializable")))?;
    ctx.write("coefficients.csv", coefficient_csv(&st, &model))?;
    let imp = permutation_importance(
        &model,
        &zte,
        &yte,
        ImportanceMetric::LogLoss,
        component_seed(ctx.cfg.seed, Component::Importance),
        ctx.cfg.importance_repeats,
    );
    let names = feature_names();
    let mut ranked: Vec<(usize, f64)> = st.kept.iter().copied().zip(imp).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut csv = String::from("rank,feature,group,importance\n");
    for (r, (k, v)) in ranked.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{v:.6}\n", r + 1, names[*k], feature_group(*k).label()));
    }
    ctx.write("importance.csv", csv)?;
    let correct = zte
        .iter()
        .zip(&yte)
        .filter(|(z, &y)| (model.prob(z) >= 0.5) == (y == 1))
        .count();
    let summary = json!({
        "candidates": cands.len(),
        "n_train": ztr.len(),
        "n_test": zte.len(),
        "train_positive_rate": ytr.iter().map(|&y| f64::from(y)).sum::<f64>() / ytr.len() as f64,
        "test_positive_rate": yte.iter().map(|&y| f64::from(y)).sum::<f64>() / yte.len() as f64,
        "test_log_loss": finite(-log_likelihood(&model, &zte, &yte, 0.0)),
        "test_accuracy": correct as f64 / zte.len() as f64,
        "iterations": iterations,
        "converged": converged,
        "dropped_features": file.dropped.len(),
    });
    ctx.write("train.json", pretty(&summary))?;
    println!(
        "train: n_train={} n_test={} iterations={iterations} converged={converged} test_accuracy={:.4}",
        ztr.len(),
        zte.len(),
        correct as f64 / zte.len() as f64
    );
    Ok(())
}

pub fn sweep(ctx: &Ctx) -> Result<(), CliError> {
    let events = ctx.events()?;
    let ds = ctx.outcomes()?;
    let model = ctx.model()?;
    let surface = ctx.surface(&ds)?;
    let cands = select_candidates(&ds, &surface, ctx.cfg.candidate_threshold);
    let (_, test) = chronological_split(&cands);
    let days = match (test.first(), test.last()) {
        (Some(a), Some(b)) => ((b.t0 - a.t0) as f64 / 86_400e6).max(1.0 / 86_400.0),
        _ => stream_days(&events),
    };
    let mut und = String::from("threshold,orders,orders_per_day,fill_prob,mean_ret_bp,std_ret_bp,t_stat,p_value\n");
    let mut und_rows = Vec::new();
    for &p in &ctx.cfg.thresholds {
        let r = run_reversal_undirectional(&test, &model, p, days);
        und.push_str(&format!(
            "{:.2},{},{:.2},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            p,
            r.orders,
            r.orders_per_day,
            r.fill_prob,
            r.mean_ret_bp,
            r.std_ret_bp,
            r.ttest.map_or(f64::NAN, |t| t.t_stat),
            r.ttest.map_or(f64::NAN, |t| t.p_value)
        ));
        und_rows.push(format_undirectional_row(&r));
    }
    ctx.write("sweep_undirectional.csv", und)?;
    let fc = ctx.cfg.feature_config();
    let fees = ctx.cfg.fees;
    let thresholds = &ctx.cfg.thresholds;
    let threads = ctx.threads.max(1);
    let mut results: Vec<Option<Result<StrategyReport, String>>> = vec![None; thresholds.len()];
    std::thread::scope(|s| {
        for (chunk_t, chunk_r) in thresholds.chunks(thresholds.len().div_ceil(threads).max(1)).zip(
            results.chunks_mut(thresholds.len().div_ceil(threads).max(1)),
        ) {
            let (events, model, fc) = (&events, &model, &fc);
            s.spawn(move || {
                for (p, slot) in chunk_t.iter().zip(chunk_r.iter_mut()) {
                    *slot = Some(run_reversal_balanced(events, model, fc, *p, &fees).map_err(|e| e.to_string()));
                }
            });
        }
    });
    let mut bal = String::from("threshold,trades,mean_ret_bp,std_ret_bp,avg_holding_s,sharpe,suppressed\n");
    for (p, r) in thresholds.iter().zip(results) {
        let r = r.expect("every threshold ran").map_err(CliError::Data)?;
        bal.push_str(&format!(
            "{:.2},{},{:.4},{:.4},{:.3},{},{}\n",
            p,
            r.trades,
            r.mean_ret_bp,
            r.std_ret_bp,
            r.avg_holding_s,
            r.sharpe_annualized.map_or(String::new(), |s| format!("{s:.2}")),
            r.avg_holding_s.is_nan() || r.avg_holding_s >= 600.0
        ));
    }
    ctx.write("sweep_balanced.csv", bal)?;
    for row in &und_rows {
        println!("sweep: {row}");
    }
    Ok(())
}

/// Rows of one of our own CSV files, header dropped.
fn csv_rows(ctx: &Ctx, name: &str) -> Result<Vec<Vec<String>>, CliError> {
    let bytes = ctx.read(&ctx.path(name))?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

pub fn report(ctx: &Ctx) -> Result<(), CliError> {
    let ds = ctx.outcomes()?;
    let s = ctx.surface(&ds)?;
    ctx.write(
        "report/fill_surface.svg",
        svg::heatmap(
            "Fill probability by touch sizes",
            &s.probs,
            &format!("opposite-side size bin (0..{BINS})"),
            "near-side size bin",
        ),
    )?;
    let t = summarize_markouts(&ds);
    let mut panels = Vec::new();
    let mut rows = Vec::new();
    for near in SizeBin::ALL {
        for opp in SizeBin::ALL {
            for qp in QpBin::ALL {
                let c = t.cell(near, opp, qp);
                panels.push((format!("{}/{} qp {}", near.label(), opp.label(), qp.label()), c.histogram.clone()));
                rows.push(vec![
                    near.label().to_string(),
                    opp.label().to_string(),
                    qp.label().to_string(),
                    c.n.to_string(),
                    format!("{:.3}", c.avg_bp),
                    format!("{:.3}", c.min_bp),
                    format!("{:.3}", c.max_bp),
                    format!("{:.3}", c.std_bp),
                ]);
            }
        }
    }
    debug_assert!(panels.iter().all(|p| p.1.len() == HIST_BINS));
    ctx.write("report/markout_histograms.svg", svg::histograms("One-second markouts (bp)", &panels, 4))?;
    ctx.write(
        "report/markout_table.svg",
        svg::table(
            "Markouts by queue sizes and position",
            &["near", "opp", "qp", "n", "avg", "min", "max", "std"],
            &rows,
        ),
    )?;
    let c = fillprob_vs_forward_return(&ds.orders, ctx.cfg.return_bin_bp);
    let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.center(), p.fill_freq)).collect();
    ctx.write(
        "report/fill_vs_return.svg",
        svg::line_chart(
            "Fill frequency against 5 s forward return",
            &[("fill frequency".to_string(), pts)],
            "forward return (bp)",
            "fill frequency",
        ),
    )?;
    let mut series = Vec::new();
    for name in ["basic_mm", "imbalance_maker", "imbalance_maker_cancel", "imbalance_taker"] {
        let rows = csv_rows(ctx, &format!("pnl_{name}.csv"))?;
        let pts = rows.iter().enumerate().map(|(i, r)| ((i + 1) as f64, num(&r[1]))).collect();
        series.push((name.to_string(), pts));
    }
    ctx.write(
        "report/cumulative_pnl.svg",
        svg::line_chart("Cumulative realized return", &series, "roundtrip", "bp"),
    )?;
    let und = csv_rows(ctx, "sweep_undirectional.csv")?;
    ctx.write(
        "report/sweep_undirectional.svg",
        svg::table(
            "Reversal-gated quoting without inventory limits",
            &["threshold", "orders", "orders/day", "fill prob", "ret (bp)", "std (bp)", "t", "p"],
            &und,
        ),
    )?;
    let bal: Vec<Vec<String>> = csv_rows(ctx, "sweep_balanced.csv")?
        .into_iter()
        .filter(|r| r.last().map(String::as_str) != Some("true"))
        .collect();
    ctx.write(
        "report/sweep_balanced.svg",
        svg::table(
            "Reversal-gated market making",
            &["threshold", "trades", "mean (bp)", "std (bp)", "holding (s)", "sharpe", "suppressed"],
            &bal,
        ),
    )?;
    let coefs: Vec<(String, f64)> = csv_rows(ctx, "coefficients.csv")?
        .into_iter()
        .map(|r| (format!("{} / {}", r[0], r[1]), num(&r[2])))
        .collect();
    ctx.write("report/coefficients.svg", svg::bar_chart("Standardized coefficients", &coefs))?;
    println!("report: wrote 8 figures to {}", ctx.path("report").display());
    Ok(())
}
