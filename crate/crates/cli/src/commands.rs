//! Subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use coad::categorical::{
    apply_thresholds, pr_frontier, scan_thresholds_with, supervised_scan, GridSpec, ScanOptions,
    ThresholdPair,
};
use coad::continuous::{
    joint_flags, predict, train, MlpPair, SavedModel, TrainConfig, TrainHistory,
};
use coad::dataset::PairedDataset;
use coad::metric::{
    compute_rates, f_beta_hat, Beta, Confusion, FalsePositiveEstimate, MetricParams,
    PredictionVector, RateSummary,
};
use coad::synth::{
    gen_gaussian_outliers, log_betas, regime_sweep, sample_mnist, sample_overlap, Region,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, ExperimentConfig, GeneratorConfig, MetricConfig, MnistToyConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    config_comment, csv_table, export_curves, fmt12, read_dataset, read_text, write_dataset,
    write_text, CurveRow,
};
use crate::verify::{run_suites, SUITES};

#[derive(Debug, Parser)]
#[command(name = "coad", version, about = "Coincident anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dataset as CSV.
    Gen(GenArgs),
    /// Threshold scan for the F̂_β maximiser.
    Scan(ScanArgs),
    /// P̂-R̂ frontier of a threshold grid.
    Frontier(FrontierArgs),
    /// Fit a network pair on F̂_β.
    Train(TrainArgs),
    /// Apply a saved model or a threshold pair to a dataset.
    Eval(EvalArgs),
    /// Run the theory suites.
    Verify(VerifyArgs),
    /// β sweep of the simplified digit model.
    MnistToy(MnistToyArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Built-in configuration.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(config::PRESETS))]
    pub preset: Option<String>,
    /// JSON config, merged over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> CliResult<ExperimentConfig> {
        config::load(self.preset.as_deref(), self.config.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct MetricFlags {
    /// Assumed anomaly fraction.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// A number or "inf".
    #[arg(long, value_parser = parse_beta)]
    pub beta: Option<Beta<f64>>,
}

impl MetricFlags {
    /// Flags override the config; β defaults to 1, α has no default.
    fn resolve(&self, cfg: &ExperimentConfig) -> CliResult<MetricConfig> {
        let alpha = self
            .alpha
            .or(cfg.metric.as_ref().map(|m| m.alpha))
            .ok_or_else(|| {
                CliError::Usage("missing --alpha (or a metric section in the config)".into())
            })?;
        let beta = self
            .beta
            .clone()
            .or(cfg.metric.as_ref().map(|m| m.beta.clone()))
            .unwrap_or(Beta::Finite(1.0));
        let m = MetricConfig { alpha, beta };
        m.params()?;
        Ok(m)
    }
}

pub fn parse_beta(s: &str) -> Result<Beta<f64>, String> {
    match s.trim() {
        "inf" | "infinity" | "Infinity" => Ok(Beta::Infinity),
        t => match t.parse::<f64>() {
            Ok(b) if b >= 0.0 && b.is_finite() => Ok(Beta::Finite(b)),
            _ => Err(format!(
                "beta must be a non-negative number or \"inf\", got {s:?}"
            )),
        },
    }
}

pub fn parse_grid(s: &str) -> Result<GridSpec<f64>, String> {
    match s.trim() {
        "all" => Ok(GridSpec::AllMidpoints),
        t => match t.parse::<usize>() {
            Ok(k) if k >= 2 => Ok(GridSpec::Downsampled(k)),
            _ => Err(format!("grid must be \"all\" or a count >= 2, got {s:?}")),
        },
    }
}

fn parse_estimate(s: &str) -> Result<FalsePositiveEstimate, String> {
    match s {
        "disagreement" => Ok(FalsePositiveEstimate::Disagreement),
        "naive" => Ok(FalsePositiveEstimate::Naive),
        _ => Err(format!(
            "estimate must be \"disagreement\" or \"naive\", got {s:?}"
        )),
    }
}

/// `LO,HI,COUNT` for a log-spaced β sweep.
fn parse_sweep(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let err = || format!("sweep must be LO,HI,COUNT with 0 < LO < HI, got {s:?}");
    let [lo, hi, count] = parts.as_slice() else {
        return Err(err());
    };
    let (lo, hi, count): (f64, f64, usize) = (
        lo.parse().map_err(|_| err())?,
        hi.parse().map_err(|_| err())?,
        count.parse().map_err(|_| err())?,
    );
    if !(lo > 0.0 && hi > lo && hi.is_finite() && count >= 2) {
        return Err(err());
    }
    Ok((lo, hi, count))
}

fn parse_pair(s: &str) -> Result<ThresholdPair<f64>, String> {
    let err = || format!("thresholds must be TAU_S,TAU_Q, got {s:?}");
    let (a, b) = s.split_once(',').ok_or_else(err)?;
    Ok(ThresholdPair::new(
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    ))
}

fn require_seed(flag: Option<u64>, cfg: &ExperimentConfig) -> CliResult<u64> {
    flag.or(cfg.seed).ok_or_else(|| {
        CliError::Usage("missing --seed (every random draw is seeded explicitly)".into())
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of rows, overriding the generator config.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Region code used as the feature of an overlap-scenario view.
fn region_score(r: Region) -> f64 {
    match r {
        Region::AnomalousOnly => 2.0,
        Region::Overlap => 1.0,
        Region::NormalOnly => 0.0,
    }
}

fn one_hot(digits: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; digits.len() * 4];
    for (i, &d) in digits.iter().enumerate() {
        v[i * 4 + d] = 1.0;
    }
    v
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let mut cfg = args.source.load()?;
    let seed = require_seed(args.seed, &cfg)?;
    cfg.seed = Some(seed);
    let mut generator = cfg.generator.clone().ok_or_else(|| {
        CliError::Usage("no generator: pass --preset or a config with a generator section".into())
    })?;
    if let Some(n) = args.n {
        match &mut generator {
            GeneratorConfig::Gaussian(g) => g.n = n,
            GeneratorConfig::Overlap(o) => o.n = n,
            GeneratorConfig::Mnist(m) => m.n = n,
        }
    }
    cfg.generator = Some(generator.clone());
    let data = match &generator {
        GeneratorConfig::Gaussian(g) => gen_gaussian_outliers(g, seed)?.to_paired(),
        GeneratorConfig::Overlap(o) => {
            let sample = sample_overlap(&o.scenario()?, o.n, seed)?;
            PairedDataset::from_scores(
                sample.s_region.iter().map(|&r| region_score(r)).collect(),
                sample.q_region.iter().map(|&r| region_score(r)).collect(),
                Some(sample.labels),
                "overlap",
            )?
        }
        GeneratorConfig::Mnist(m) => {
            let model = coad::synth::SimplifiedMnistModel::new(m.w, m.b, m.normal_blur)?;
            let sample = sample_mnist(&model, m.n, seed)?;
            PairedDataset::new(
                one_hot(&sample.s_digit),
                4,
                one_hot(&sample.q_digit),
                4,
                Some(sample.labels()),
                "mnist",
            )?
        }
    };
    write_dataset(&args.out, &data, Some(&config_comment(&cfg)))?;
    let positives = data
        .labels()
        .map_or(0, |l| l.iter().filter(|&&y| y).count());
    eprintln!(
        "wrote {} rows ({} anomalous) to {}",
        data.len(),
        positives,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub metric: MetricFlags,
    /// "all" for every midpoint, or a per-view count.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridSpec<f64>>,
    /// False-positive estimate in F̂: "disagreement" (D) or "naive" (μ_s·μ_q).
    #[arg(long, value_parser = parse_estimate, default_value = "disagreement")]
    pub estimate: FalsePositiveEstimate,
    /// JSON result; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Every evaluated pair as CSV.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    /// β sweep `LO,HI,COUNT` (log-spaced), written to --sweep-out.
    #[arg(long, value_parser = parse_sweep, requires = "sweep_out")]
    pub sweep: Option<(f64, f64, usize)>,
    #[arg(long, requires = "sweep")]
    pub sweep_out: Option<PathBuf>,
}

/// Scores of a one-feature-per-view dataset.
fn score_columns(data: &PairedDataset<f64>) -> CliResult<(Vec<f64>, Vec<f64>)> {
    if data.d_s() != 1 || data.d_q() != 1 {
        return Err(CliError::Input(format!(
            "threshold commands need one score column per view (s_0, q_0), found {} and {}",
            data.d_s(),
            data.d_q()
        )));
    }
    Ok((data.s_column(0), data.q_column(0)))
}

fn grid_of(flag: &Option<GridSpec<f64>>, cfg: &ExperimentConfig) -> GridSpec<f64> {
    flag.clone()
        .or(cfg.grid.clone())
        .unwrap_or(GridSpec::AllMidpoints)
}

/// Supervised `(R, P, F_β)` of a threshold pair.
pub fn supervised_at(
    s: &[f64],
    q: &[f64],
    labels: &[bool],
    pair: &ThresholdPair<f64>,
    beta: &Beta<f64>,
) -> CliResult<(f64, f64, f64)> {
    let (ps, pq) = apply_thresholds(s, q, pair)?;
    let c = coad::metric::confusion(&ps, &pq, labels)?;
    Ok((
        c.f_beta(&Beta::Infinity),
        c.f_beta(&Beta::Finite(0.0)),
        c.f_beta(beta),
    ))
}

/// `(R̂, P̂)` with the chosen false-positive estimate.
pub fn hat_pair(
    rates: &RateSummary<f64>,
    alpha: f64,
    estimate: FalsePositiveEstimate,
) -> (f64, f64) {
    if rates.j == 0.0 {
        return (0.0, 0.0);
    }
    let tp = rates.j - rates.false_positive_estimate(estimate);
    (tp / alpha, tp / rates.j)
}

fn cmd_scan(args: &ScanArgs) -> CliResult<()> {
    let cfg = args.source.load()?;
    let metric = args.metric.resolve(&cfg)?;
    let params = metric.params()?;
    let grid = grid_of(&args.grid, &cfg);
    let data = read_dataset(&args.input)?;
    let (s, q) = score_columns(&data)?;
    let echo = ExperimentConfig {
        metric: Some(metric.clone()),
        grid: Some(grid.clone()),
        ..cfg.clone()
    };
    let options = ScanOptions {
        record_grid: args.grid_out.is_some(),
        parallel: true,
        estimate: args.estimate,
    };
    let res = scan_thresholds_with(&s, &q, &params, &grid, options)?;
    let (r_hat, p_hat) = hat_pair(&res.best_rates, metric.alpha, args.estimate);
    let supervised = match data.labels() {
        Some(labels) => {
            let (r, p, f) = supervised_at(&s, &q, labels, &res.best, &metric.beta)?;
            let opt = supervised_scan(&s, &q, labels, &metric.beta, &grid)?;
            Some(json!({
                "recall": r,
                "precision": p,
                "f_beta": f,
                "grid_optimum": opt.best,
                "grid_optimum_f_beta": opt.best_f_beta,
            }))
        }
        None => None,
    };
    let report = json!({
        "config": echo,
        "input": args.input.display().to_string(),
        "n": data.len(),
        "estimate": args.estimate,
        "grid": {
            "spec": grid,
            "s_thresholds": res.s_thresholds.len(),
            "q_thresholds": res.q_thresholds.len(),
            "evaluated": res.evaluated,
            "skipped": res.skipped,
        },
        "best": res.best,
        "best_score": res.best_score,
        "best_rates": res.best_rates,
        "r_hat": r_hat,
        "p_hat": p_hat,
        "supervised": supervised,
    });
    if let Some(path) = &args.grid_out {
        let header: Vec<String> = [
            "tau_s", "tau_q", "mu_s", "mu_q", "mu_sq", "D", "D_naive", "F_hat",
        ]
        .map(String::from)
        .to_vec();
        let opt = |v: Option<f64>| v.map(fmt12).unwrap_or_default();
        let rows: Vec<Vec<String>> = res
            .grid
            .iter()
            .map(|e| {
                let r = e.rates.as_ref();
                vec![
                    fmt12(e.pair.tau_s),
                    fmt12(e.pair.tau_q),
                    opt(r.map(|r| r.mu_s)),
                    opt(r.map(|r| r.mu_q)),
                    opt(r.map(|r| r.mu_sq)),
                    opt(r.map(|r| r.d)),
                    opt(r.map(|r| r.d_naive)),
                    opt(e.score),
                ]
            })
            .collect();
        write_text(
            path,
            &csv_table(Some(&config_comment(&echo)), &header, &rows),
        )?;
    }
    if let (Some((lo, hi, count)), Some(path)) = (args.sweep, &args.sweep_out) {
        let rows = beta_sweep(
            &s,
            &q,
            data.labels(),
            metric.alpha,
            &grid,
            args.estimate,
            lo,
            hi,
            count,
        )?;
        write_text(
            path,
            &export_curves(&["beta"], &rows, Some(&config_comment(&echo))),
        )?;
    }
    emit_json(&report, args.out.as_deref())
}

/// Best pair at each β of a log sweep: `(R̂, P̂, F̂_β)` there, plus the
/// supervised `(R, P, F_β)` of the same pair when labels exist.
#[allow(clippy::too_many_arguments)]
pub fn beta_sweep(
    s: &[f64],
    q: &[f64],
    labels: Option<&[bool]>,
    alpha: f64,
    grid: &GridSpec<f64>,
    estimate: FalsePositiveEstimate,
    lo: f64,
    hi: f64,
    count: usize,
) -> CliResult<Vec<CurveRow>> {
    let options = ScanOptions {
        record_grid: false,
        parallel: true,
        estimate,
    };
    log_betas(lo, hi, count)
        .into_iter()
        .map(|b| {
            let beta = Beta::Finite(b);
            let params = MetricParams::new(alpha, beta.clone())?;
            let res = scan_thresholds_with(s, q, &params, grid, options)?;
            let (r_hat, p_hat) = hat_pair(&res.best_rates, alpha, estimate);
            let supervised = labels
                .map(|l| supervised_at(s, q, l, &res.best, &beta))
                .transpose()?;
            Ok(CurveRow {
                key: vec![b],
                r_hat,
                p_hat,
                f_hat: res.best_score,
                supervised,
            })
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub metric: MetricFlags,
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridSpec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_frontier(args: &FrontierArgs) -> CliResult<()> {
    let cfg = args.source.load()?;
    let metric = args.metric.resolve(&cfg)?;
    let grid = grid_of(&args.grid, &cfg);
    let data = read_dataset(&args.input)?;
    let (s, q) = score_columns(&data)?;
    let front = pr_frontier(&s, &q, &metric.params()?, &grid, data.labels())?;
    let rows: Vec<CurveRow> = front.iter().map(CurveRow::from_frontier).collect();
    let echo = ExperimentConfig {
        metric: Some(metric),
        grid: Some(grid),
        ..cfg
    };
    write_text(
        &args.out,
        &export_curves(&["tau_s", "tau_q"], &rows, Some(&config_comment(&echo))),
    )?;
    eprintln!(
        "wrote {} frontier points to {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub metric: MetricFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Supervised counts of the hard joint prediction.
fn joint_confusion(flags: &[bool], labels: &[bool]) -> Confusion {
    let mut c = Confusion::default();
    for (&f, &y) in flags.iter().zip(labels) {
        match (f, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

fn history_csv(history: &TrainHistory, comment: &str) -> String {
    let header: Vec<String> = [
        "epoch",
        "train_loss",
        "val_f_hat",
        "val_mu_s",
        "val_mu_q",
        "val_mu_sq",
        "feasible",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = history
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                fmt12(e.train_loss),
                fmt12(e.val_f_hat),
                fmt12(e.val_mu_s),
                fmt12(e.val_mu_q),
                fmt12(e.val_mu_sq),
                (e.feasible as u8).to_string(),
            ]
        })
        .collect();
    csv_table(Some(comment), &header, &rows)
}

/// Training settings after applying the command-line overrides.
pub fn train_config(args: &TrainArgs, cfg: &ExperimentConfig) -> CliResult<TrainConfig> {
    let mut tc = cfg.train.clone().unwrap_or_default();
    tc.seed = require_seed(args.seed, cfg)?;
    if let Some(a) = args.metric.alpha.or(cfg.metric.as_ref().map(|m| m.alpha)) {
        tc.alpha = a;
    }
    if let Some(b) = args
        .metric
        .beta
        .clone()
        .or(cfg.metric.as_ref().map(|m| m.beta.clone()))
    {
        tc.beta = b;
    }
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(r) = args.restarts {
        tc.restarts = r;
    }
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(tc)
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = args.source.load()?;
    let tc = train_config(args, &cfg)?;
    let data = read_dataset(&args.input)?;
    let (pair, history) = train(&data, &tc)?;
    let echo = ExperimentConfig {
        seed: Some(tc.seed),
        train: Some(tc.clone()),
        ..cfg
    };
    let mut saved = pair.to_saved();
    saved.config = Some(tc.clone());
    write_text(
        &args.model_out,
        &(serde_json::to_string_pretty(&saved).expect("model serializes") + "\n"),
    )?;
    if let Some(path) = &args.history_out {
        write_text(path, &history_csv(&history, &config_comment(&echo)))?;
    }
    let supervised = match data.labels() {
        Some(labels) => {
            let rows: Vec<usize> = (0..data.len()).collect();
            let (ps, pq) = predict(&pair, &data, &rows)?;
            let c = joint_confusion(&joint_flags(&ps, &pq), labels);
            Some(json!({
                "f1": c.f_beta(&Beta::<f64>::one()),
                "precision": c.f_beta(&Beta::Finite(0.0f64)),
                "recall": c.f_beta(&Beta::<f64>::Infinity),
            }))
        }
        None => None,
    };
    let report = json!({
        "config": echo,
        "best_epoch": history.best_epoch,
        "best": history.best(),
        "stop": history.stop,
        "epochs_run": history.epochs.len(),
        "restart": history.restart,
        "restart_scores": history.restart_scores,
        "train_rows": history.train_rows,
        "val_rows": history.val_rows,
        "supervised": supervised,
    });
    emit_json(&report, args.report.as_deref())?;
    if history.best_epoch.is_none() {
        return Err(CliError::Failure(
            "no epoch met mu_s, mu_q <= 0.5 on validation; final parameters were saved".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Saved model JSON.
    #[arg(
        long,
        conflicts_with = "thresholds",
        required_unless_present = "thresholds"
    )]
    pub model: Option<PathBuf>,
    /// `TAU_S,TAU_Q`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub thresholds: Option<ThresholdPair<f64>>,
    #[command(flatten)]
    pub metric: MetricFlags,
    /// Predictions CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let cfg = args.source.load()?;
    let data = read_dataset(&args.input)?;
    let (ps, pq, flags, source, metric) = match (&args.model, &args.thresholds) {
        (Some(path), _) => {
            let text = read_text(path)?;
            let saved: SavedModel = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: invalid model: {e}", path.display())))?;
            let pair = MlpPair::<f64>::from_saved(&saved)?;
            let (ds, dq) = (pair.net_s.input_dim(), pair.net_q.input_dim());
            if (ds, dq) != (data.d_s(), data.d_q()) {
                return Err(CliError::Input(format!(
                    "model expects {ds} s and {dq} q features, dataset has {} and {}",
                    data.d_s(),
                    data.d_q()
                )));
            }
            // the model's own α and β unless overridden
            let fallback = saved.config.as_ref().map(|c| MetricConfig {
                alpha: c.alpha,
                beta: c.beta.clone(),
            });
            let with_model = ExperimentConfig {
                metric: cfg.metric.clone().or(fallback),
                ..cfg.clone()
            };
            let metric = args.metric.resolve(&with_model)?;
            let rows: Vec<usize> = (0..data.len()).collect();
            let (ps, pq) = predict(&pair, &data, &rows)?;
            let flags = joint_flags(&ps, &pq);
            (
                ps,
                pq,
                flags,
                json!({ "model": path.display().to_string() }),
                metric,
            )
        }
        (None, Some(pair)) => {
            let metric = args.metric.resolve(&cfg)?;
            let (s, q) = score_columns(&data)?;
            let (ps, pq) = apply_thresholds(&s, &q, pair)?;
            let (ps, pq) = (ps.into_inner(), pq.into_inner());
            let flags = ps
                .iter()
                .zip(&pq)
                .map(|(a, b)| *a == 1.0 && *b == 1.0)
                .collect();
            (ps, pq, flags, json!({ "thresholds": pair }), metric)
        }
        (None, None) => return Err(CliError::Usage("pass --model or --thresholds".into())),
    };
    let params = metric.params()?;
    let rates = compute_rates(
        &PredictionVector::new(ps.clone())?,
        &PredictionVector::new(pq.clone())?,
    )?;
    let f_hat = f_beta_hat(&rates, &params);
    let supervised = data.labels().map(|labels| {
        let c = joint_confusion(&flags, labels);
        json!({
            "f_beta": c.f_beta(&metric.beta),
            "precision": c.f_beta(&Beta::Finite(0.0f64)),
            "recall": c.f_beta(&Beta::<f64>::Infinity),
            "confusion": c,
        })
    });
    let echo = ExperimentConfig {
        metric: Some(metric.clone()),
        ..cfg
    };
    if let Some(path) = &args.out {
        let mut header: Vec<String> = ["p_s", "p_q", "joint"].map(String::from).to_vec();
        let labels = data.labels();
        if labels.is_some() {
            header.push("label".into());
        }
        let rows: Vec<Vec<String>> = (0..data.len())
            .map(|i| {
                let mut r = vec![fmt12(ps[i]), fmt12(pq[i]), (flags[i] as u8).to_string()];
                if let Some(l) = labels {
                    r.push((l[i] as u8).to_string());
                }
                r
            })
            .collect();
        write_text(
            path,
            &csv_table(Some(&config_comment(&echo)), &header, &rows),
        )?;
    }
    let report = json!({
        "config": echo,
        "source": source,
        "n": data.len(),
        "rates": rates,
        "f_hat": f_hat.as_ref().ok(),
        "r_hat": coad::metric::recall_hat(&rates, &metric.alpha),
        "p_hat": coad::metric::precision_hat(&rates),
        "supervised": supervised,
    });
    emit_json(&report, args.report.as_deref())?;
    f_hat?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: u64,
    /// Suite to run (repeatable); all when absent.
    #[arg(long = "suite", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    pub suites: Vec<String>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let suites = if args.suites.is_empty() {
        SUITES.map(String::from).to_vec()
    } else {
        args.suites.clone()
    };
    let report = run_suites(&suites, args.seed)?;
    for c in &report.checks {
        eprintln!(
            "{} {}/{} ({} cases)",
            if c.passed { "ok  " } else { "FAIL" },
            c.suite,
            c.invariant,
            c.cases
        );
    }
    emit_json(&report, args.out.as_deref())?;
    report.into_result()
}

#[derive(Debug, Args)]
pub struct MnistToyArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// β sweep `LO,HI,COUNT` (log-spaced).
    #[arg(long, value_parser = parse_sweep)]
    pub sweep: Option<(f64, f64, usize)>,
    /// Observation of normal examples: "none" or "symmetric".
    #[arg(long)]
    pub blur: Option<String>,
    /// Regime CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn labeling_code(l: &[bool; 4]) -> String {
    l.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn cmd_mnist_toy(args: &MnistToyArgs) -> CliResult<()> {
    let mut cfg = args.source.load()?;
    let mut toy = cfg.mnist.clone().unwrap_or_else(|| {
        let m = coad::synth::SimplifiedMnistModel::<f64>::paper();
        MnistToyConfig {
            w: m.w,
            b: m.b,
            normal_blur: m.normal_blur,
            alpha: 0.15,
            beta_min: 1e-3,
            beta_max: 1e3,
            beta_count: 601,
        }
    });
    if let Some(a) = args.alpha {
        toy.alpha = a;
    }
    if let Some((lo, hi, count)) = args.sweep {
        (toy.beta_min, toy.beta_max, toy.beta_count) = (lo, hi, count);
    }
    if let Some(b) = &args.blur {
        toy.normal_blur = match b.as_str() {
            "none" => coad::synth::NormalBlur::None,
            "symmetric" => coad::synth::NormalBlur::Symmetric,
            other => {
                return Err(CliError::Usage(format!(
                    "blur must be \"none\" or \"symmetric\", got {other:?}"
                )))
            }
        };
    }
    let model = toy.model()?;
    let betas = log_betas(toy.beta_min, toy.beta_max, toy.beta_count);
    let regimes = regime_sweep(&model, toy.alpha, &betas)?;
    cfg.mnist = Some(toy);
    let header: Vec<String> = ["labeling", "beta_start", "beta_end"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = regimes
        .iter()
        .map(|r| {
            vec![
                labeling_code(&r.labeling),
                fmt12(r.beta_start),
                fmt12(r.beta_end),
            ]
        })
        .collect();
    let text = csv_table(Some(&config_comment(&cfg)), &header, &rows);
    match &args.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Frontier(a) => cmd_frontier(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Verify(a) => cmd_verify(a),
        Command::MnistToy(a) => cmd_mnist_toy(a),
    }
}
