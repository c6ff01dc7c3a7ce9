//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! a criterion outside `KNOWN_FAILURES` fails or one inside it passes.

use std::process::Command;
use std::time::{Duration, Instant};

use coad::categorical::{scan_thresholds_with, supervised_scan, GridSpec, ScanOptions};
use coad::continuous::{
    final_layer_fbeta_grads, joint_flags, loss_and_grads, predict, train, Mlp, MlpPair, TrainConfig,
};
use coad::dataset::PairedDataset;
use coad::metric::{Beta, FalsePositiveEstimate, MetricParams};
use coad::synth::{
    gen_gaussian_outliers, log_betas, regime_sweep, GaussianOutlierConfig, NormalBlur,
    SimplifiedMnistModel,
};
use coad::theory::{candidate_solutions, verify_bounds, LabeledStats};
use coad::{Exact, Scalar};
use coad_cli::commands::{beta_sweep, supervised_at};
use coad_cli::config::paper_train_config;
use coad_cli::io::{dataset_csv, export_curves, parse_curves, parse_dataset, CurveRow};
use coad_cli::verify::{
    exact_scenario, gradient_data, random_scenarios, run_suites, sampled_grid, Check,
};

const SEED: u64 = 7;
const ALPHA: f64 = 0.05;

const C1_F1_GAP: f64 = 0.03;
const C1_TIME: Duration = Duration::from_secs(60);
const C2_SAMPLED_SLACK: f64 = 0.02;
const C2_GRID: usize = 20;
const C2_SCENARIOS: usize = 5;
const C4_GRID: usize = 200;
const C4_SWEEP: (f64, f64, usize) = (0.01, 100.0, 13);
const C5_CLOSED_FORM_TOL: f64 = 1e-10;
const C5_TIME: Duration = Duration::from_secs(10);
const C7_MIN_SCENARIOS: usize = 5;
const C9_F1_GAP: f64 = 0.05;
const C9_MU_MAX: f64 = 0.52;
const C9_TIME: Duration = Duration::from_secs(300);

/// Criteria that fail for a mathematical reason rather than an
/// implementation one. Criterion 2 asks for F_hat <= F on all eight
/// candidate labelings, but the labeling that flags only the normal-only
/// regions is positively correlated while each detector prefers normal
/// examples, so the bound does not cover it and it is violated.
const KNOWN_FAILURES: [usize; 1] = [2];

type Outcome = Result<String, String>;

fn paper_data() -> coad::synth::ScoredDataset {
    gen_gaussian_outliers(&GaussianOutlierConfig::paper(), SEED).expect("generator")
}

fn f1() -> Beta<f64> {
    Beta::one()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let data = paper_data();
    let params = MetricParams::new(ALPHA, f1()).map_err(|e| e.to_string())?;
    let grid = GridSpec::AllMidpoints;
    let options = ScanOptions {
        record_grid: false,
        parallel: true,
        estimate: FalsePositiveEstimate::Disagreement,
    };
    let res = scan_thresholds_with(&data.s_scores, &data.q_scores, &params, &grid, options)
        .map_err(|e| e.to_string())?;
    let (_, _, f_at_hat) = supervised_at(
        &data.s_scores,
        &data.q_scores,
        &data.labels,
        &res.best,
        &f1(),
    )
    .map_err(|e| e.to_string())?;
    let opt = supervised_scan(&data.s_scores, &data.q_scores, &data.labels, &f1(), &grid)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let gap = opt.best_f_beta - f_at_hat;
    let detail = format!(
        "F1 at F_hat-optimal pair {f_at_hat:.4}, grid optimum {:.4}, gap {gap:.4} (<= {C1_F1_GAP}), {:.1}s (<= {}s)",
        opt.best_f_beta,
        elapsed.as_secs_f64(),
        C1_TIME.as_secs()
    );
    if gap <= C1_F1_GAP && elapsed <= C1_TIME {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exact_betas() -> Vec<Beta<Exact>> {
    let l = Exact::lit;
    vec![
        Beta::Finite(l(0.0)),
        Beta::Finite(l(0.5)),
        Beta::Finite(l(1.0)),
        Beta::Finite(l(2.0)),
        Beta::Infinity,
    ]
}

struct ExactSweep {
    records: usize,
    /// F̂ > F, with the labeling names involved.
    f_bad: usize,
    f_bad_names: Vec<String>,
    /// Records whose detectors each flag anomalies at least as often as normals.
    per_class: usize,
    per_class_bad: usize,
    /// Records with μ_sq ≥ μ_s·μ_q.
    btr: usize,
    d_bad: usize,
}

fn exact_sweep() -> Result<ExactSweep, String> {
    let mut out = ExactSweep {
        records: 0,
        f_bad: 0,
        f_bad_names: Vec::new(),
        per_class: 0,
        per_class_bad: 0,
        btr: 0,
        d_bad: 0,
    };
    for m in random_scenarios(C2_SCENARIOS, SEED) {
        let s = exact_scenario(&m).map_err(|e| e.to_string())?;
        let table = s.cell_table();
        let labelings = candidate_solutions(&s)
            .into_iter()
            .map(|c| LabeledStats::from_table(&table, &c.labeling).map(|st| (c.name, st)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        if labelings.len() != 8 {
            return Err(format!("{} candidates instead of 8", labelings.len()));
        }
        let report = verify_bounds(&labelings, &exact_betas(), Exact::from_count(0))
            .map_err(|e| e.to_string())?;
        for r in &report.records {
            out.records += 1;
            let (_, stats) = labelings.iter().find(|(n, _)| n == &r.name).unwrap();
            if !r.f_hat_le_f {
                out.f_bad += 1;
                if !out.f_bad_names.contains(&r.name) {
                    out.f_bad_names.push(r.name.clone());
                }
            }
            if stats.no_worse_than_random() {
                out.per_class += 1;
                out.per_class_bad += usize::from(!r.f_hat_le_f);
            }
            if stats.rates.better_than_random() {
                out.btr += 1;
                out.d_bad += usize::from(r.d > r.d_naive);
            }
        }
    }
    Ok(out)
}

fn criterion_2() -> Outcome {
    let x = exact_sweep()?;
    let pairs = sampled_grid(SEED, C2_GRID, ALPHA).map_err(|e| e.to_string())?;
    let worst = pairs
        .iter()
        .map(|p| p.f_hat - p.f)
        .fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "exact, all 8 labelings: F_hat > F on {} of {} (labeling, beta) records [{}]; with per-class no-worse-than-random detectors: {} of {}; sampled {C2_GRID}x{C2_GRID}: {} feasible pairs, max F_hat - F = {worst:.4} (<= {C2_SAMPLED_SLACK})",
        x.f_bad,
        x.records,
        x.f_bad_names.join(", "),
        x.per_class_bad,
        x.per_class,
        pairs.len()
    );
    if x.f_bad == 0 && x.records > 0 && !pairs.is_empty() && worst <= C2_SAMPLED_SLACK {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let ExactSweep { btr, d_bad, .. } = exact_sweep()?;
    let pairs = sampled_grid(SEED, C2_GRID, ALPHA).map_err(|e| e.to_string())?;
    let sampled: Vec<_> = pairs
        .iter()
        .filter(|p| p.rates.better_than_random())
        .collect();
    let s_bad = sampled
        .iter()
        .filter(|p| p.rates.d > p.rates.d_naive)
        .count();
    let detail = format!(
        "D > D_naive on {d_bad} of {btr} exact records and {s_bad} of {} sampled pairs (exact rational arithmetic)",
        sampled.len()
    );
    if d_bad == 0 && s_bad == 0 && btr > 0 && !sampled.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let data = paper_data();
    let grid = GridSpec::Downsampled(C4_GRID);
    let (lo, hi, count) = C4_SWEEP;
    let max_err = |estimate| -> Result<f64, String> {
        let rows = beta_sweep(
            &data.s_scores,
            &data.q_scores,
            Some(&data.labels),
            ALPHA,
            &grid,
            estimate,
            lo,
            hi,
            count,
        )
        .map_err(|e| e.to_string())?;
        Ok(rows
            .iter()
            .map(|r| (r.f_hat - r.supervised.unwrap().2).abs())
            .fold(0.0, f64::max))
    };
    let d = max_err(FalsePositiveEstimate::Disagreement)?;
    let naive = max_err(FalsePositiveEstimate::Naive)?;
    let detail = format!(
        "max over {count} betas in [{lo}, {hi}] of |F_hat - F|: D {d:.4}, D_naive {naive:.4}"
    );
    if d < naive {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let ok = checks.iter().all(|c| c.passed);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| match &c.detail {
            Some(d) if !c.passed => format!("{} FAILED: {d}", c.invariant),
            _ => format!("{} ({} cases)", c.invariant, c.cases),
        })
        .collect();
    (ok, parts.join("; "))
}

/// Worst `|closed form − backprop|` over the output-layer F̂ gradients.
fn final_layer_gap(seed: u64) -> Result<f64, String> {
    let data: PairedDataset<f64> = gradient_data(32, 3, 2, 50 + seed).map_err(|e| e.to_string())?;
    let pair = MlpPair::new(&[3, 5, 4, 1], &[2, 3, 1], seed).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        alpha: 0.1,
        beta: Beta::Finite(1.5),
        lambda_wall: 0.0,
        lambda_mag: 0.0,
        ..TrainConfig::default()
    };
    let rows: Vec<usize> = (0..data.len()).collect();
    let out = loss_and_grads(&pair, &data, &rows, &config).map_err(|e| e.to_string())?;
    let params = config.metric_params().map_err(|e| e.to_string())?;
    let (ws, bs, wq, bq) =
        final_layer_fbeta_grads(&pair, &data, &rows, &params).map_err(|e| e.to_string())?;
    // with both penalties off the loss is −F̂
    let last = |net: &Mlp<f64>, grad: &[f64]| {
        let at = *net.offsets().last().unwrap();
        let n_in = net.layers().last().unwrap().n_in;
        let w: Vec<f64> = grad[at..at + n_in].iter().map(|g| -g).collect();
        (w, -grad[at + n_in])
    };
    let (gws, gbs) = last(&pair.net_s, &out.grad_s);
    let (gwq, gbq) = last(&pair.net_q, &out.grad_q);
    let mut worst = (bs - gbs).abs().max((bq - gbq).abs());
    for (a, b) in ws.iter().zip(&gws).chain(wq.iter().zip(&gwq)) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let report = run_suites(&["gradients".to_string()], SEED).map_err(|e| e.to_string())?;
    let (fd_ok, fd_detail) = summarize(&report.checks);
    let enough = report.checks.iter().all(|c| c.cases >= 20);
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        worst = worst.max(final_layer_gap(seed)?);
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "{fd_detail}; final-layer closed form vs backprop max gap {worst:.2e} (<= {C5_CLOSED_FORM_TOL:e}); {:.2}s (<= {}s)",
        elapsed.as_secs_f64(),
        C5_TIME.as_secs()
    );
    if fd_ok && enough && worst <= C5_CLOSED_FORM_TOL && elapsed <= C5_TIME {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let suites = ["inner", "concavity"].map(String::from).to_vec();
    let report = run_suites(&suites, SEED).map_err(|e| e.to_string())?;
    let (ok, detail) = summarize(&report.checks);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let report = run_suites(&["critical".to_string()], SEED).map_err(|e| e.to_string())?;
    let (ok, detail) = summarize(&report.checks);
    let flips = report
        .checks
        .iter()
        .find(|c| c.invariant.starts_with("beta^2_crit"))
        .map_or(0, |c| c.cases);
    if ok && flips >= C7_MIN_SCENARIOS {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let expected = [
        [false, true, false, false],
        [false, true, true, false],
        [false, true, true, true],
    ];
    let betas = log_betas(1e-3, 1e3, 601);
    let mut parts = Vec::new();
    let mut ok = true;
    for blur in [NormalBlur::None, NormalBlur::Symmetric] {
        let model = SimplifiedMnistModel {
            normal_blur: blur,
            ..SimplifiedMnistModel::<f64>::paper()
        };
        let regimes = regime_sweep(&model, 0.15, &betas).map_err(|e| e.to_string())?;
        let seen: Vec<[bool; 4]> = regimes.iter().map(|r| r.labeling).collect();
        ok &= seen == expected;
        let text: Vec<String> = regimes
            .iter()
            .map(|r| {
                format!(
                    "{} [{:.3}, {:.3}]",
                    coad_cli::commands::labeling_code(&r.labeling),
                    r.beta_start,
                    r.beta_end
                )
            })
            .collect();
        parts.push(format!("{blur:?}: {}", text.join(" -> ")));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let scored = paper_data();
    let data = scored.to_paired();
    let config = paper_train_config();
    let (pair, history) = train(&data, &config).map_err(|e| e.to_string())?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let (ps, pq) = predict(&pair, &data, &rows).map_err(|e| e.to_string())?;
    let flags = joint_flags(&ps, &pq);
    let mut c = coad::metric::Confusion::default();
    for (&f, &y) in flags.iter().zip(&scored.labels) {
        match (f, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let trained = c.f_beta(&f1());
    let scan = supervised_scan(
        &scored.s_scores,
        &scored.q_scores,
        &scored.labels,
        &f1(),
        &GridSpec::AllMidpoints,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let best = history.best();
    let (mu_s, mu_q) = best.map_or((f64::NAN, f64::NAN), |b| (b.val_mu_s, b.val_mu_q));
    let detail = format!(
        "trained F1 {trained:.4} vs best scan F1 {:.4} (gap <= {C9_F1_GAP}); restored epoch {:?}, validation mu_s {mu_s:.3}, mu_q {mu_q:.3} (<= {C9_MU_MAX}); {:.0}s (<= {}s)",
        scan.best_f_beta,
        history.best_epoch,
        elapsed.as_secs_f64(),
        C9_TIME.as_secs()
    );
    if trained >= scan.best_f_beta - C9_F1_GAP
        && mu_s <= C9_MU_MAX
        && mu_q <= C9_MU_MAX
        && elapsed <= C9_TIME
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Hand-written CSV in the style of an exported sensor table: no comment
/// line, padded fields, mixed number notation, a label column.
const EXTERNAL_CSV: &str = "\
s_0, q_0, label
0.12, 0.3, 0
1.5e0, 2.25, 1
0.4, +0.1, 0
3, 2.9, 1
0.05, 0.45, 0
0.33, 0.2, 0
0.7, 0.15, 0
0.21, 0.61, 0
2.2, 0.05, 0
0.08, 0.09, 0
";

fn criterion_10() -> Outcome {
    let data = paper_data().to_paired();
    let text = dataset_csv(&data, Some("# coad {}\n"));
    let back = parse_dataset(&text, "round trip").map_err(|e| e.to_string())?;
    let again = dataset_csv(&back, Some("# coad {}\n"));
    let value_identical = (0..data.len()).all(|i| {
        back.s_row(i)
            .iter()
            .zip(data.s_row(i))
            .all(|(a, b)| (a - b).abs() <= 1e-11 * b.abs().max(1.0))
            && back
                .q_row(i)
                .iter()
                .zip(data.q_row(i))
                .all(|(a, b)| (a - b).abs() <= 1e-11 * b.abs().max(1.0))
    }) && back.labels() == data.labels();
    let byte_identical = again == text;

    let rows = vec![
        CurveRow {
            key: vec![0.5, 1.5],
            r_hat: 0.25,
            p_hat: 1.0 / 3.0,
            f_hat: 0.2,
            supervised: Some((0.3, 0.4, 0.5)),
        },
        CurveRow {
            key: vec![1.0, 2.0],
            r_hat: 0.75,
            p_hat: 0.5,
            f_hat: 0.6,
            supervised: Some((0.7, 0.6, 0.65)),
        },
        CurveRow {
            key: vec![3.0, 0.0],
            r_hat: 0.0,
            p_hat: 1.0,
            f_hat: 0.0,
            supervised: Some((0.0, 0.0, 0.0)),
        },
    ];
    let curve = export_curves(&["tau_s", "tau_q"], &rows, None);
    let parsed = parse_curves(&curve, 2).map_err(|e| e.to_string())?;
    let curve_ok = parsed.len() == 3
        && parsed.iter().zip(&rows).all(|(a, b)| {
            a.key == b.key && (a.p_hat - b.p_hat).abs() < 1e-12 && a.supervised == b.supervised
        });

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("external.csv");
    let out = dir.path().join("scan.json");
    std::fs::write(&input, EXTERNAL_CSV).map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_coad"))
        .args(["scan", "--alpha", "0.2", "--beta", "1", "--grid", "all"])
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .status()
        .map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&out).map_err(|e| format!("no scan output: {e}"))?,
    )
    .map_err(|e| e.to_string())?;
    let ext = parse_dataset(EXTERNAL_CSV, "external").map_err(|e| e.to_string())?;
    let lib = scan_thresholds_with(
        &ext.s_column(0),
        &ext.q_column(0),
        &MetricParams::new(0.2, f1()).unwrap(),
        &GridSpec::AllMidpoints,
        ScanOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let cli_score = report["best_score"].as_f64().unwrap_or(f64::NAN);
    let scan_ok = status.success()
        && report["n"] == 10
        && (cli_score - lib.best_score).abs() < 1e-12
        && report["best"]["tau_s"].as_f64() == Some(lib.best.tau_s)
        && report["best"]["tau_q"].as_f64() == Some(lib.best.tau_q);

    let detail = format!(
        "{}-row dataset value-identical: {value_identical}, byte-identical rewrite: {byte_identical}; 3-point curve round trip: {curve_ok}; `coad scan` on external CSV: exit {:?}, best F_hat {cli_score:.4} (library {:.4})",
        data.len(),
        status.code(),
        lib.best_score
    );
    if value_identical && byte_identical && curve_ok && scan_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("scan replicates the supervised optimum", criterion_1),
        ("F_hat is a lower bound of F", criterion_2),
        ("D <= D_naive on better-than-random pairs", criterion_3),
        ("D beats D_naive across a beta sweep", criterion_4),
        ("analytic gradients", criterion_5),
        ("near-categorical inner solution", criterion_6),
        ("critical beta", criterion_7),
        ("simplified MNIST regimes", criterion_8),
        ("continuous training", criterion_9),
        ("CSV ingestion", criterion_10),
    ];
    let mut failed = 0;
    let mut unexpected = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let known = KNOWN_FAILURES.contains(&(k + 1));
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => {
                unexpected += usize::from(known);
                let tag = if known {
                    " (listed as a known failure)"
                } else {
                    ""
                };
                println!("criterion {:>2} PASS  {name}{tag}: {d}", k + 1);
            }
            Err(d) => {
                failed += 1;
                unexpected += usize::from(!known);
                let tag = if known { " (known failure)" } else { "" };
                println!("criterion {:>2} FAIL  {name}{tag}: {d}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({} known)",
        criteria.len() - failed,
        KNOWN_FAILURES.len()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
