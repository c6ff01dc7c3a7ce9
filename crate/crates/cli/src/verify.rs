//! Theory suites behind `coad verify`.

use coad::categorical::{apply_thresholds, grid_thresholds, GridSpec, ThresholdPair};
use coad::continuous::{loss_and_grads, MlpPair, TrainConfig};
use coad::dataset::PairedDataset;
use coad::metric::PredictionVector;
use coad::metric::{
    compute_rates, f_beta_from_joint, f_beta_hat, supervised_f_beta, Beta, MetricParams,
    RateSummary,
};
use coad::synth::{gen_gaussian_outliers, GaussianOutlierConfig, OverlapScenario};
use coad::theory::{
    best_candidate, best_response, beta_crit, candidate_solutions, compare_solutions,
    empirical_flip, inner_f_hat, mu_sq_star_curve, optimal_pq_given_ps, verify_bounds,
    CategoricalSolution, LabeledStats, Verdict,
};
use coad::{Exact, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SUITES: [&str; 7] = [
    "bounds",
    "sampled-bounds",
    "inner",
    "concavity",
    "lemma",
    "critical",
    "gradients",
];

pub const SAMPLED_SLACK: f64 = 0.02;
pub const INNER_TOL: f64 = 1e-9;
pub const CONCAVITY_TOL: f64 = 1e-12;
pub const FLIP_REL_TOL: f64 = 0.01;
pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub invariant: String,
    pub cases: usize,
    pub passed: bool,
    /// First counterexample, when any.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// `Failure` naming every failed invariant.
    pub fn into_result(&self) -> CliResult<()> {
        let failed = self.failures();
        if failed.is_empty() {
            return Ok(());
        }
        let names: Vec<String> = failed
            .iter()
            .map(|c| match &c.detail {
                Some(d) => format!("{}/{}: {d}", c.suite, c.invariant),
                None => format!("{}/{}", c.suite, c.invariant),
            })
            .collect();
        Err(CliError::Failure(format!(
            "verification failed: {}",
            names.join("; ")
        )))
    }
}

/// Accumulates cases of one invariant, keeping the first counterexample.
struct Tally {
    suite: &'static str,
    invariant: &'static str,
    cases: usize,
    detail: Option<String>,
}

impl Tally {
    fn new(suite: &'static str, invariant: &'static str) -> Self {
        Self {
            suite,
            invariant,
            cases: 0,
            detail: None,
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.detail.is_none() {
            self.detail = Some(detail());
        }
    }

    fn fail(&mut self, detail: String) {
        self.check(false, || detail);
    }

    fn finish(self) -> Check {
        Check {
            suite: self.suite.into(),
            invariant: self.invariant.into(),
            cases: self.cases,
            // a check that never ran proves nothing
            passed: self.detail.is_none() && self.cases > 0,
            detail: self
                .detail
                .or_else(|| (self.cases == 0).then(|| "no cases".into())),
        }
    }
}

pub fn run_suites(names: &[String], seed: u64) -> CliResult<VerifyReport> {
    let mut checks = Vec::new();
    for name in names {
        let mut found = match name.as_str() {
            "bounds" => suite_bounds(seed)?,
            "sampled-bounds" => suite_sampled_bounds(seed)?,
            "inner" => suite_inner(seed)?,
            "concavity" => suite_concavity(seed)?,
            "lemma" => suite_lemma(seed)?,
            "critical" => suite_critical(seed)?,
            "gradients" => suite_gradients(seed)?,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown suite '{other}' (available: {})",
                    SUITES.join(", ")
                )))
            }
        };
        checks.append(&mut found);
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        suites: names.to_vec(),
        checks,
        passed,
    })
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Valid overlap scenarios on a 0.001 parameter grid, as
/// `(p_a, ba, ca, bn, cn)` marginals.
pub fn random_scenarios(count: usize, seed: u64) -> Vec<[f64; 5]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let p_a = round3(rng.gen_range(0.05..0.2));
        let ba = round3(rng.gen_range(0.05..0.4));
        let ca = round3(rng.gen_range(ba..0.5));
        let bn = round3(rng.gen_range(0.02..0.2));
        let cn = round3(rng.gen_range(0.02..0.2));
        let Ok(s) = OverlapScenario::from_marginals(p_a, ba, ca, bn, cn) else {
            continue;
        };
        if s.validate().is_ok() && beta_crit(&s, &p_a).is_ok() {
            out.push([p_a, ba, ca, bn, cn]);
        }
    }
    out
}

pub fn exact_scenario(m: &[f64; 5]) -> CliResult<OverlapScenario<Exact>> {
    let l = Exact::lit;
    Ok(OverlapScenario::from_marginals(
        l(m[0]),
        l(m[1]),
        l(m[2]),
        l(m[3]),
        l(m[4]),
    )?)
}

fn bound_betas() -> Vec<Beta<Exact>> {
    let l = Exact::lit;
    vec![
        Beta::Finite(l(0.0)),
        Beta::Finite(l(0.5)),
        Beta::Finite(l(1.0)),
        Beta::Finite(l(2.0)),
        Beta::Infinity,
    ]
}

fn suite_bounds(seed: u64) -> CliResult<Vec<Check>> {
    let mut f_le = Tally::new("bounds", "F_hat <= F (exact, zero slack)");
    let mut d_fp = Tally::new("bounds", "D >= FP (exact)");
    let mut d_naive = Tally::new("bounds", "D <= D_naive (exact)");
    for m in random_scenarios(5, seed) {
        let s = exact_scenario(&m)?;
        let table = s.cell_table();
        let labelings = candidate_solutions(&s)
            .into_iter()
            .map(|c| Ok((c.name, LabeledStats::from_table(&table, &c.labeling)?)))
            .collect::<CliResult<Vec<_>>>()?;
        let report = verify_bounds(&labelings, &bound_betas(), Exact::from_count(0))?;
        for r in report.records.iter().filter(|r| r.in_scope) {
            let tag = || {
                format!(
                    "scenario {m:?}, labeling {}, beta {:?}",
                    r.name,
                    r.beta.approx()
                )
            };
            f_le.check(r.f_hat_le_f, || {
                format!("{}: F_hat {} > F {}", tag(), r.f_hat.approx(), r.f.approx())
            });
            d_fp.check(r.d_ge_fp, tag);
            d_naive.check(r.d_le_naive, tag);
        }
    }
    Ok(vec![f_le.finish(), d_fp.finish(), d_naive.finish()])
}

/// Pairs of a `k × k` grid on the seeded paper dataset with their exact
/// rates, F̂₁ and supervised F₁.
pub struct SampledPair {
    pub pair: ThresholdPair<f64>,
    pub rates: RateSummary<Exact>,
    pub f_hat: f64,
    pub f: f64,
}

pub fn sampled_grid(seed: u64, k: usize, alpha: f64) -> CliResult<Vec<SampledPair>> {
    let data = gen_gaussian_outliers(&GaussianOutlierConfig::paper(), seed)?;
    let (s_thr, q_thr) =
        grid_thresholds(&data.s_scores, &data.q_scores, &GridSpec::Downsampled(k))?;
    let params = MetricParams::new(alpha, Beta::one())?;
    let n = data.len();
    let mut out = Vec::new();
    for ts in &s_thr {
        for tq in &q_thr {
            let pair = ThresholdPair::new(*ts, *tq);
            let (ps, pq) = apply_thresholds(&data.s_scores, &data.q_scores, &pair)?;
            let count =
                |v: &PredictionVector<f64>| v.values().iter().filter(|&&x| x == 1.0).count();
            let n_sq = ps
                .values()
                .iter()
                .zip(pq.values())
                .filter(|(a, b)| **a == 1.0 && **b == 1.0)
                .count();
            let Ok(rates) = RateSummary::<Exact>::from_counts(count(&ps), count(&pq), n_sq, n)
            else {
                continue;
            };
            let Ok(f_hat) = f_beta_hat(&compute_rates(&ps, &pq)?, &params) else {
                continue;
            };
            let f = supervised_f_beta(&ps, &pq, &data.labels, &Beta::one())?;
            out.push(SampledPair {
                pair,
                rates,
                f_hat,
                f,
            });
        }
    }
    Ok(out)
}

fn suite_sampled_bounds(seed: u64) -> CliResult<Vec<Check>> {
    let mut f_le = Tally::new("sampled-bounds", "F_hat_1 <= F_1 + 0.02 (20x20 grid)");
    let mut d_naive = Tally::new("sampled-bounds", "D <= D_naive on better-than-random pairs");
    for p in sampled_grid(seed, 20, 0.05)? {
        let at = || format!("({}, {})", p.pair.tau_s, p.pair.tau_q);
        f_le.check(p.f_hat <= p.f + SAMPLED_SLACK, || {
            format!("{}: F_hat {} vs F {}", at(), p.f_hat, p.f)
        });
        if p.rates.better_than_random() {
            d_naive.check(p.rates.d <= p.rates.d_naive, at);
        }
    }
    Ok(vec![f_le.finish(), d_naive.finish()])
}

/// Uniform draw pushed towards mean `gamma` while staying inside `[0, 1]`.
pub fn random_feasible(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    for _ in 0..60 {
        let mean = v.iter().sum::<f64>() / n as f64;
        let gap = gamma - mean;
        if gap.abs() < 1e-15 {
            break;
        }
        let room: f64 = v
            .iter()
            .map(|&x| if gap > 0.0 { 1.0 - x } else { x })
            .sum::<f64>()
            / n as f64;
        let t = (gap.abs() / room).min(1.0);
        for x in &mut v {
            *x += if gap > 0.0 { t * (1.0 - *x) } else { -t * *x };
        }
    }
    v
}

/// A random `p_s` with mean ≤ 0.45 and a random pairing.
pub struct InnerInstance {
    pub p_s: PredictionVector<f64>,
    pub pairing: Vec<usize>,
    pub gamma: f64,
}

pub fn inner_instances(count: usize, seed: u64) -> CliResult<Vec<InnerInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(4..=12);
            let mut p_s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mean = p_s.iter().sum::<f64>() / n as f64;
            if mean > 0.45 {
                p_s.iter_mut().for_each(|x| *x *= 0.45 / mean);
            }
            let mut pairing: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                pairing.swap(i, rng.gen_range(0..=i));
            }
            let gamma = (rng.gen_range(0.05..0.5f64) * 100.0).round() / 100.0;
            Ok(InnerInstance {
                p_s: PredictionVector::new(p_s)?,
                pairing,
                gamma,
            })
        })
        .collect()
}

/// Greedy μ_sq vs the best of `draws` random feasible `p_q`; returns the
/// largest excess of a random draw over the greedy value.
pub fn inner_excess(inst: &InnerInstance, draws: usize, rng: &mut ChaCha8Rng) -> CliResult<f64> {
    let sol = optimal_pq_given_ps(&inst.p_s, &inst.pairing, inst.gamma)?;
    let p_s = inst.p_s.values();
    let w: Vec<f64> = inst.pairing.iter().map(|&j| p_s[j]).collect();
    let n = w.len();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..draws {
        let pq = random_feasible(rng, n, inst.gamma);
        let mu_sq = w.iter().zip(&pq).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        worst = worst.max(mu_sq - sol.mu_sq);
    }
    Ok(worst)
}

fn suite_inner(seed: u64) -> CliResult<Vec<Check>> {
    let mut greedy = Tally::new(
        "inner",
        "greedy p_q is never beaten by random feasible vectors",
    );
    let mut boundary = Tally::new("inner", "non-categorical best response sits at mu_q = 0.5");
    let mut argmax = Tally::new("inner", "best response dominates every gamma on the grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let gammas: Vec<f64> = (0..=50).map(|k| k as f64 / 100.0).collect();
    for (k, inst) in inner_instances(10, seed)?.iter().enumerate() {
        let excess = inner_excess(inst, 10_000, &mut rng)?;
        greedy.check(excess <= INNER_TOL, || {
            format!("instance {k}: excess {excess}")
        });
        for beta in [0.5, 1.0, 2.0] {
            let params = MetricParams::new(0.1, Beta::Finite(beta))?;
            let br = best_response(&inst.p_s, &inst.pairing, &params)?;
            if !br.inner.is_categorical() {
                let mq = br.inner.p_q_star.mean();
                boundary.check((mq - 0.5).abs() <= INNER_TOL, || {
                    format!(
                        "instance {k}, beta {beta}: rho {} at mu_q {mq}",
                        br.inner.rho
                    )
                });
            }
            for &g in &gammas {
                let f = inner_f_hat(&inst.p_s, &inst.pairing, g, &params)?;
                argmax.check(f <= br.f_hat + 1e-12, || {
                    format!(
                        "instance {k}, beta {beta}: gamma {g} gives {f} > {}",
                        br.f_hat
                    )
                });
            }
        }
    }
    let mut out = vec![greedy.finish()];
    // no instance may land on a split boundary group; only report when one did
    let b = boundary.finish();
    if b.cases > 0 {
        out.push(b);
    }
    out.push(argmax.finish());
    Ok(out)
}

fn suite_concavity(seed: u64) -> CliResult<Vec<Check>> {
    let mut mono = Tally::new("concavity", "mu*_sq(gamma) is non-decreasing");
    let mut conc = Tally::new("concavity", "mu*_sq(gamma) second differences <= 1e-12");
    let gammas: Vec<f64> = (0..=50).map(|k| k as f64 / 100.0).collect();
    for (k, inst) in inner_instances(10, seed)?.iter().enumerate() {
        let curve = mu_sq_star_curve(&inst.p_s, &inst.pairing, &gammas)?;
        for (i, c) in curve.windows(3).enumerate() {
            mono.check(c[1] >= c[0] - 1e-15, || format!("instance {k}, step {i}"));
            let second = c[2] - 2.0 * c[1] + c[0];
            conc.check(second <= CONCAVITY_TOL, || {
                format!("instance {k}, gamma {}: {second}", gammas[i + 1])
            });
        }
    }
    Ok(vec![mono.finish(), conc.finish()])
}

fn suite_lemma(seed: u64) -> CliResult<Vec<Check>> {
    let mut t = Tally::new(
        "lemma",
        "closed-form flip point separates the two solutions",
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = Exact::lit;
    let mut made = 0;
    while made < 10 {
        let ma = round3(rng.gen_range(0.1..0.45));
        let mb = round3(rng.gen_range(0.02..ma));
        let da = round3(rng.gen_range(0.0..ma * 0.5));
        let db = round3(rng.gen_range(0.0..mb * 0.5));
        let alpha = round3(rng.gen_range(0.05..0.3));
        let a = CategoricalSolution::new(l(ma), l(da), "a")?;
        let b = CategoricalSolution::new(l(mb), l(db), "b")?;
        let Verdict::FlipAt { beta_sq_crit } = compare_solutions(&a, &b, &l(alpha))? else {
            continue;
        };
        made += 1;
        let crit = beta_sq_crit.approx();
        for k in 0..20 {
            let b2 = crit * 10f64.powf(-1.0 + k as f64 * 2.0 / 19.0);
            if ((b2 - crit) / crit).abs() < 1e-9 {
                continue;
            }
            let params = MetricParams::new(alpha, Beta::Finite(b2.sqrt()))?;
            let fa = f_beta_from_joint(&ma, &da, &params);
            let fb = f_beta_from_joint(&mb, &db, &params);
            t.check((fa > fb) == (b2 > crit), || {
                format!(
                    "a = ({ma}, {da}), b = ({mb}, {db}), alpha {alpha}, beta^2 {b2} vs crit {crit}"
                )
            });
        }
    }
    Ok(vec![t.finish()])
}

fn suite_critical(seed: u64) -> CliResult<Vec<Check>> {
    let mut flip = Tally::new("critical", "beta^2_crit within 1% of the enumerated flip");
    let mut c_one = Tally::new("critical", "C is labelled anomalous at every beta");
    for m in random_scenarios(5, seed) {
        let s = OverlapScenario::from_marginals(m[0], m[1], m[2], m[3], m[4])?;
        let crit = beta_crit(&s, &m[0])?.beta_sq_crit;
        match empirical_flip(&s, m[0], crit / 100.0, crit * 100.0, 1e-9)? {
            Some(found) => {
                let rel = ((found - crit) / crit).abs();
                flip.check(rel < FLIP_REL_TOL, || {
                    format!("{m:?}: closed form {crit}, enumeration {found}")
                });
            }
            None => flip.fail(format!("{m:?}: no flip within [crit/100, 100 crit]")),
        }
        let cands = candidate_solutions(&s);
        for k in 0..=40 {
            let b2 = crit * 10f64.powf(-2.0 + k as f64 * 0.1);
            let params = MetricParams::new(m[0], Beta::Finite(b2.sqrt()))?;
            let best = best_candidate(&s, &cands, &params)?;
            let lab = &cands[best.index];
            c_one.check(*lab.labeling.labels_c() == 1.0, || {
                format!("{m:?} at beta^2 {b2}: best is {}", lab.name)
            });
        }
    }
    Ok(vec![flip.finish(), c_one.finish()])
}

/// Correlated random features for gradient checks.
pub fn gradient_data(n: usize, d_s: usize, d_q: usize, seed: u64) -> CliResult<PairedDataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Vec::with_capacity(n * d_s);
    let mut q = Vec::with_capacity(n * d_q);
    for _ in 0..n {
        let z: f64 = rng.gen_range(-1.0..1.0);
        s.extend((0..d_s).map(|_| z + rng.gen_range(-0.7..0.7)));
        q.extend((0..d_q).map(|_| z + rng.gen_range(-0.7..0.7)));
    }
    Ok(PairedDataset::new(s, d_s, q, d_q, None, "gradient check")?)
}

/// Largest `|analytic − fd| − FD_REL_TOL·scale − FD_ABS_FLOOR` over all
/// parameters; positive means a mismatch.
pub fn fd_violation(
    pair: &MlpPair<f64>,
    data: &PairedDataset<f64>,
    config: &TrainConfig,
) -> CliResult<f64> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let out = loss_and_grads(pair, data, &rows, config)?;
    let (ps, pq) = pair.params();
    let loss_at = |s: &[f64], q: &[f64]| -> CliResult<f64> {
        let mut p = pair.clone();
        p.set_params(s, q)?;
        Ok(loss_and_grads(&p, data, &rows, config)?.loss)
    };
    let mut worst = f64::NEG_INFINITY;
    for view in 0..2 {
        let (base, analytic) = if view == 0 {
            (&ps, &out.grad_s)
        } else {
            (&pq, &out.grad_q)
        };
        for k in 0..base.len() {
            let (mut up, mut down) = (base.clone(), base.clone());
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            let (lu, ld) = if view == 0 {
                (loss_at(&up, &pq)?, loss_at(&down, &pq)?)
            } else {
                (loss_at(&ps, &up)?, loss_at(&ps, &down)?)
            };
            let fd = (lu - ld) / (2.0 * FD_STEP);
            let a = analytic[k];
            let scale = a.abs().max(fd.abs());
            worst = worst.max((a - fd).abs() - FD_REL_TOL * scale - FD_ABS_FLOOR);
        }
    }
    Ok(worst)
}

/// Random micro-configuration `k`: architecture, data, loss weights and a
/// pair with biases moved off the ReLU kinks.
pub fn micro_config(
    k: u64,
    seed: u64,
) -> CliResult<(MlpPair<f64>, PairedDataset<f64>, TrainConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(k));
    let d_s = rng.gen_range(1..=3);
    let d_q = rng.gen_range(1..=3);
    let depth = rng.gen_range(0..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=5)).collect();
    let n = rng.gen_range(8..=24);
    let data = gradient_data(n, d_s, d_q, rng.gen())?;
    let beta = match k % 4 {
        0 => Beta::Finite(0.5),
        1 => Beta::Finite(1.0),
        2 => Beta::Finite(2.0),
        _ => Beta::Infinity,
    };
    let config = TrainConfig {
        alpha: rng.gen_range(0.05..0.3),
        beta,
        hidden: hidden.clone(),
        lambda_wall: rng.gen_range(0.0..2.0),
        lambda_mag: rng.gen_range(0.0..1e-2),
        wall_temperature: rng.gen_range(5.0..50.0),
        ..TrainConfig::default()
    };
    let mut pair = MlpPair::new(
        &config.layer_sizes(d_s),
        &config.layer_sizes(d_q),
        rng.gen(),
    )?;
    for net in [&mut pair.net_s, &mut pair.net_q] {
        for l in net.layers_mut() {
            for b in &mut l.bias {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
    }
    Ok((pair, data, config))
}

fn suite_gradients(seed: u64) -> CliResult<Vec<Check>> {
    let mut t = Tally::new("gradients", "backprop matches central finite differences");
    let mut k = 0;
    while t.cases < 20 && k < 200 {
        let (pair, data, config) = micro_config(k, seed)?;
        k += 1;
        let rows: Vec<usize> = (0..data.len()).collect();
        // singular batches have no F̂ gradient to check
        if loss_and_grads(&pair, &data, &rows, &config)?
            .constants
            .is_none()
        {
            continue;
        }
        let v = fd_violation(&pair, &data, &config)?;
        t.check(v <= 0.0, || format!("configuration {}: excess {v}", k - 1));
    }
    Ok(vec![t.finish()])
}
