//! Two-threshold detectors over scalar scores.
//!
//! A [`ThresholdPair`] flags an example in a view when its score is strictly
//! greater than the cutoff. A joint event is an example flagged in both
//! views. [`scan_thresholds`] evaluates F̂_β over a Cartesian grid of cutoffs
//! and returns the maximiser; [`pr_frontier`] returns the Pareto set of
//! (R̂, P̂) over the same grid.
//!
//! Scans sort the scores once and sweep cumulative counts, so a `G × G`
//! grid over `n` examples costs `O(G² + n log G)`. Rows of the grid are
//! processed in fixed chunks; the parallel and serial paths visit the same
//! chunks and reduce in the same order, so they return identical results.

use std::cmp::Ordering;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metric::{
    f_beta_from_fractions, f_beta_hat_dual, f_beta_hat_unconstrained, precision_hat, recall_hat,
    Beta, FalsePositiveEstimate, MetricParams, PredictionVector, RateSummary,
};
use crate::{CoadError, Result, Scalar};

/// Cutoffs for the two views. A score strictly greater than its cutoff is anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair<T> {
    pub tau_s: T,
    pub tau_q: T,
}

impl<T> ThresholdPair<T> {
    pub fn new(tau_s: T, tau_q: T) -> Self {
        Self { tau_s, tau_q }
    }
}

/// Threshold grid for a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec<T> {
    /// Midpoints between consecutive sorted unique scores, plus one
    /// sentinel below the minimum and one above the maximum.
    AllMidpoints,
    /// `k` thresholds per view taken at evenly spaced ranks of the
    /// all-midpoints list (both sentinels included).
    Downsampled(usize),
    /// Caller-supplied cutoffs; sorted and deduplicated before use.
    Explicit { s: Vec<T>, q: Vec<T> },
}

fn sorted_unique<T: Scalar>(values: &[T], what: &'static str) -> Result<Vec<T>> {
    if let Some(i) = values.iter().position(|v| v.partial_cmp(v).is_none()) {
        return Err(CoadError::OutOfRange(format!("{what}[{i}] is NaN")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v.dedup();
    Ok(v)
}

/// All-midpoints thresholds for one view, ascending.
pub fn midpoint_thresholds<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    let u = sorted_unique(scores, "scores")?;
    let (first, last) = match (u.first(), u.last()) {
        (Some(f), Some(l)) => (f.clone(), l.clone()),
        _ => return Err(CoadError::Empty("scores")),
    };
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push(first - T::one());
    out.extend(
        u.windows(2)
            .map(|w| (w[0].clone() + w[1].clone()) * T::half()),
    );
    out.push(last + T::one());
    Ok(out)
}

fn downsample<T: Clone>(all: Vec<T>, k: usize) -> Result<Vec<T>> {
    if k < 2 {
        return Err(CoadError::OutOfRange(format!(
            "downsampled grid needs at least 2 thresholds per view, got {k}"
        )));
    }
    if k >= all.len() {
        return Ok(all);
    }
    let last = all.len() - 1;
    let mut picked: Vec<usize> = (0..k)
        .map(|i| ((i as f64) * last as f64 / (k - 1) as f64).round() as usize)
        .collect();
    picked.dedup();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

/// Resolves a grid spec into ascending threshold lists for both views.
pub fn grid_thresholds<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    spec: &GridSpec<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    match spec {
        GridSpec::AllMidpoints => Ok((
            midpoint_thresholds(s_scores)?,
            midpoint_thresholds(q_scores)?,
        )),
        GridSpec::Downsampled(k) => Ok((
            downsample(midpoint_thresholds(s_scores)?, *k)?,
            downsample(midpoint_thresholds(q_scores)?, *k)?,
        )),
        GridSpec::Explicit { s, q } => {
            let s = sorted_unique(s, "explicit s thresholds")?;
            let q = sorted_unique(q, "explicit q thresholds")?;
            if s.is_empty() || q.is_empty() {
                return Err(CoadError::Empty("explicit threshold list"));
            }
            Ok((s, q))
        }
    }
}

fn check_lengths<T>(s: &[T], q: &[T]) -> Result<()> {
    if s.len() != q.len() {
        return Err(CoadError::LengthMismatch {
            what: "s scores vs q scores",
            left: s.len(),
            right: q.len(),
        });
    }
    if s.is_empty() {
        return Err(CoadError::Empty("scores"));
    }
    Ok(())
}

/// Flags scores strictly above a cutoff.
pub fn threshold_view<T: Scalar>(scores: &[T], tau: &T) -> Vec<bool> {
    scores.iter().map(|x| x > tau).collect()
}

/// Applies a threshold pair, producing categorical predictions for both views.
pub fn apply_thresholds<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    pair: &ThresholdPair<T>,
) -> Result<(PredictionVector<T>, PredictionVector<T>)> {
    check_lengths(s_scores, q_scores)?;
    Ok((
        PredictionVector::from_flags(&threshold_view(s_scores, &pair.tau_s))?,
        PredictionVector::from_flags(&threshold_view(q_scores, &pair.tau_q))?,
    ))
}

/// Raw counts for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PairCounts {
    n_s: usize,
    n_q: usize,
    n_sq: usize,
    /// Joint events that carry a positive label (0 without labels).
    n_sq_pos: usize,
}

/// Cumulative-count engine behind every scan.
struct PairCounter {
    n: usize,
    gs: usize,
    gq: usize,
    /// `buckets[r]` holds (q-rank, label) of examples whose s-rank is `r`.
    buckets: Vec<Vec<(u32, bool)>>,
    count_s: Vec<usize>,
    count_q: Vec<usize>,
}

/// Number of thresholds strictly below `x`: the example is flagged for
/// exactly the thresholds with index `< rank`.
fn rank<T: Scalar>(sorted: &[T], x: &T) -> usize {
    sorted.partition_point(|t| t < x)
}

fn suffix_counts(hist: &[usize], g: usize) -> Vec<usize> {
    // count[i] = #examples with rank > i
    let mut out = vec![0usize; g];
    let mut acc = 0;
    for i in (0..g).rev() {
        acc += hist[i + 1];
        out[i] = acc;
    }
    out
}

impl PairCounter {
    fn new<T: Scalar>(
        s_scores: &[T],
        q_scores: &[T],
        labels: Option<&[bool]>,
        s_thr: &[T],
        q_thr: &[T],
    ) -> Result<Self> {
        check_lengths(s_scores, q_scores)?;
        if let Some(l) = labels {
            if l.len() != s_scores.len() {
                return Err(CoadError::LengthMismatch {
                    what: "labels vs scores",
                    left: l.len(),
                    right: s_scores.len(),
                });
            }
        }
        for (what, v) in [("s scores", s_scores), ("q scores", q_scores)] {
            if let Some(i) = v.iter().position(|x| x.partial_cmp(x).is_none()) {
                return Err(CoadError::OutOfRange(format!("{what}[{i}] is NaN")));
            }
        }
        let (gs, gq) = (s_thr.len(), q_thr.len());
        let mut buckets = vec![Vec::new(); gs + 1];
        let mut hist_s = vec![0usize; gs + 1];
        let mut hist_q = vec![0usize; gq + 1];
        for (i, (x, y)) in s_scores.iter().zip(q_scores).enumerate() {
            let rs = rank(s_thr, x);
            let rq = rank(q_thr, y);
            hist_s[rs] += 1;
            hist_q[rq] += 1;
            let lab = labels.map(|l| l[i]).unwrap_or(false);
            buckets[rs].push((rq as u32, lab));
        }
        Ok(Self {
            n: s_scores.len(),
            gs,
            gq,
            buckets,
            count_s: suffix_counts(&hist_s, gs),
            count_q: suffix_counts(&hist_q, gq),
        })
    }

    /// Visits every cell of the given rows, rows descending and columns
    /// descending within a row.
    fn sweep(&self, rows: Range<usize>, mut visit: impl FnMut(usize, usize, PairCounts)) {
        let mut col = vec![0usize; self.gq + 1];
        let mut col_pos = vec![0usize; self.gq + 1];
        let add = |bucket: &[(u32, bool)], col: &mut [usize], col_pos: &mut [usize]| {
            for &(rq, lab) in bucket {
                col[rq as usize] += 1;
                if lab {
                    col_pos[rq as usize] += 1;
                }
            }
        };
        for r in rows.end + 1..=self.gs {
            add(&self.buckets[r], &mut col, &mut col_pos);
        }
        for i in rows.rev() {
            add(&self.buckets[i + 1], &mut col, &mut col_pos);
            let (mut acc, mut acc_pos) = (0usize, 0usize);
            for j in (0..self.gq).rev() {
                acc += col[j + 1];
                acc_pos += col_pos[j + 1];
                visit(
                    i,
                    j,
                    PairCounts {
                        n_s: self.count_s[i],
                        n_q: self.count_q[j],
                        n_sq: acc,
                        n_sq_pos: acc_pos,
                    },
                );
            }
        }
    }

    fn chunks(&self) -> Vec<Range<usize>> {
        const ROWS_PER_CHUNK: usize = 64;
        (0..self.gs)
            .step_by(ROWS_PER_CHUNK)
            .map(|lo| lo..(lo + ROWS_PER_CHUNK).min(self.gs))
            .collect()
    }

    /// Runs `work` on every chunk and returns the outputs in chunk order.
    fn map_chunks<R: Send>(
        &self,
        parallel: bool,
        work: impl Fn(Range<usize>) -> R + Sync + Send,
    ) -> Vec<R> {
        let chunks = self.chunks();
        if parallel {
            chunks.into_par_iter().map(work).collect()
        } else {
            chunks.into_iter().map(work).collect()
        }
    }
}

/// One evaluated cell of a scan grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry<T> {
    pub pair: ThresholdPair<T>,
    /// `None` when a view flags every example (D undefined).
    pub rates: Option<RateSummary<T>>,
    /// `None` for pairs rejected by the `μ ≤ 0.5` constraint.
    pub score: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult<T> {
    pub best: ThresholdPair<T>,
    pub best_score: T,
    pub best_rates: RateSummary<T>,
    /// Every evaluated pair, ordered by (s index, q index). Empty unless
    /// grid recording was requested.
    pub grid: Vec<GridEntry<T>>,
    pub skipped: usize,
    pub evaluated: usize,
    pub s_thresholds: Vec<T>,
    pub q_thresholds: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    pub record_grid: bool,
    pub parallel: bool,
    pub estimate: FalsePositiveEstimate,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            record_grid: true,
            parallel: true,
            estimate: FalsePositiveEstimate::Disagreement,
        }
    }
}

/// Running argmax with the scan tie-break: at equal score the larger
/// (s index, q index) wins, i.e. the higher thresholds.
#[derive(Clone)]
struct Best<T> {
    score: T,
    i: usize,
    j: usize,
    rates: RateSummary<T>,
}

fn offer<T: Scalar>(slot: &mut Option<Best<T>>, cand: Best<T>) {
    let replace = match slot {
        None => true,
        Some(b) => match cand.score.partial_cmp(&b.score) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => (cand.i, cand.j) > (b.i, b.j),
            _ => false,
        },
    };
    if replace {
        *slot = Some(cand);
    }
}

fn feasible_rates<T: Scalar>(c: PairCounts, n: usize) -> (Option<RateSummary<T>>, bool) {
    let rates = RateSummary::<T>::from_counts(c.n_s, c.n_q, c.n_sq, n).ok();
    let feasible = 2 * c.n_s <= n && 2 * c.n_q <= n;
    (rates, feasible)
}

/// Scans the threshold grid for the F̂_β maximiser, recording every pair.
pub fn scan_thresholds<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    params: &MetricParams<T>,
    grid: &GridSpec<T>,
) -> Result<ScanResult<T>> {
    scan_thresholds_with(s_scores, q_scores, params, grid, ScanOptions::default())
}

pub fn scan_thresholds_with<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    params: &MetricParams<T>,
    grid: &GridSpec<T>,
    options: ScanOptions,
) -> Result<ScanResult<T>> {
    check_lengths(s_scores, q_scores)?;
    let (s_thr, q_thr) = grid_thresholds(s_scores, q_scores, grid)?;
    let counter = PairCounter::new(s_scores, q_scores, None, &s_thr, &q_thr)?;
    let n = counter.n;

    struct ChunkOut<T> {
        best: Option<Best<T>>,
        skipped: usize,
        entries: Vec<(usize, usize, Option<RateSummary<T>>, Option<T>)>,
    }

    let outs = counter.map_chunks(options.parallel, |rows| {
        let mut out = ChunkOut {
            best: None,
            skipped: 0,
            entries: Vec::new(),
        };
        counter.sweep(rows, |i, j, c| {
            let (rates, feasible) = feasible_rates::<T>(c, n);
            let score = match (&rates, feasible) {
                (Some(r), true) => Some(match options.estimate {
                    FalsePositiveEstimate::Disagreement => f_beta_hat_unconstrained(r, params),
                    FalsePositiveEstimate::Naive => {
                        f_beta_hat_dual(r, params, FalsePositiveEstimate::Naive)
                    }
                }),
                _ => None,
            };
            match (&score, &rates) {
                (Some(sc), Some(r)) => offer(
                    &mut out.best,
                    Best {
                        score: sc.clone(),
                        i,
                        j,
                        rates: r.clone(),
                    },
                ),
                _ => out.skipped += 1,
            }
            if options.record_grid {
                out.entries.push((i, j, rates, score));
            }
        });
        out
    });

    let mut best = None;
    let mut skipped = 0;
    let mut grid_entries = Vec::new();
    for out in outs {
        skipped += out.skipped;
        if let Some(b) = out.best {
            offer(&mut best, b);
        }
        if options.record_grid {
            grid_entries.extend(out.entries);
        }
    }
    let best = best.ok_or(CoadError::NoFeasiblePair)?;
    grid_entries.sort_by_key(|e| (e.0, e.1));
    let grid_entries = grid_entries
        .into_iter()
        .map(|(i, j, rates, score)| GridEntry {
            pair: ThresholdPair::new(s_thr[i].clone(), q_thr[j].clone()),
            rates,
            score,
        })
        .collect();
    Ok(ScanResult {
        best: ThresholdPair::new(s_thr[best.i].clone(), q_thr[best.j].clone()),
        best_score: best.score,
        best_rates: best.rates,
        grid: grid_entries,
        skipped,
        evaluated: s_thr.len() * q_thr.len(),
        s_thresholds: s_thr,
        q_thresholds: q_thr,
    })
}

/// Result of a labelled scan: the pair that maximises the true F_β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedScan<T> {
    pub best: ThresholdPair<T>,
    pub best_f_beta: T,
}

/// Supervised counterpart of [`scan_thresholds`], over every pair of the
/// grid with the same tie-break. Used for evaluation only.
pub fn supervised_scan<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    labels: &[bool],
    beta: &Beta<T>,
    grid: &GridSpec<T>,
) -> Result<SupervisedScan<T>> {
    let (s_thr, q_thr) = grid_thresholds(s_scores, q_scores, grid)?;
    let counter = PairCounter::new(s_scores, q_scores, Some(labels), &s_thr, &q_thr)?;
    let positives = T::from_count(labels.iter().filter(|&&y| y).count());
    let outs = counter.map_chunks(true, |rows| {
        let mut best: Option<(T, usize, usize)> = None;
        counter.sweep(rows, |i, j, c| {
            let f = f_beta_from_fractions(
                &T::from_count(c.n_sq_pos),
                &T::from_count(c.n_sq),
                &positives,
                beta,
            );
            let better = match &best {
                None => true,
                Some((b, bi, bj)) => match f.partial_cmp(b) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Equal) => (i, j) > (*bi, *bj),
                    _ => false,
                },
            };
            if better {
                best = Some((f, i, j));
            }
        });
        best
    });
    let mut best: Option<(T, usize, usize)> = None;
    for (f, i, j) in outs.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some((b, bi, bj)) => f > *b || (f == *b && (i, j) > (*bi, *bj)),
        };
        if better {
            best = Some((f, i, j));
        }
    }
    let (f, i, j) = best.ok_or(CoadError::Empty("threshold grid"))?;
    Ok(SupervisedScan {
        best: ThresholdPair::new(s_thr[i].clone(), q_thr[j].clone()),
        best_f_beta: f,
    })
}

/// Supervised precision, recall and F_β of one threshold pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedPoint<T> {
    pub recall: T,
    pub precision: T,
    pub f_beta: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint<T> {
    pub pair: ThresholdPair<T>,
    pub r_hat: T,
    pub p_hat: T,
    /// F̂_β at the β of the scan parameters.
    pub f_hat: T,
    pub rates: RateSummary<T>,
    pub supervised: Option<SupervisedPoint<T>>,
}

struct Candidate<T> {
    r_hat: T,
    p_hat: T,
    i: usize,
    j: usize,
    counts: PairCounts,
    rates: RateSummary<T>,
}

/// Keeps the non-dominated points (maximising both R̂ and P̂). Among exact
/// duplicates the one with the larger thresholds survives.
fn pareto_filter<T: Scalar>(mut pts: Vec<Candidate<T>>) -> Vec<Candidate<T>> {
    pts.sort_by(|a, b| {
        b.r_hat
            .partial_cmp(&a.r_hat)
            .unwrap_or(Ordering::Equal)
            .then(b.p_hat.partial_cmp(&a.p_hat).unwrap_or(Ordering::Equal))
            .then((b.i, b.j).cmp(&(a.i, a.j)))
    });
    let mut out: Vec<Candidate<T>> = Vec::new();
    for p in pts {
        let keep = match out.last() {
            None => true,
            Some(last) => p.p_hat > last.p_hat,
        };
        if keep {
            out.push(p);
        }
    }
    out
}

/// Pareto frontier of (R̂, P̂) over all feasible pairs of the grid, ordered
/// by decreasing R̂. With labels, each point also carries the supervised
/// (R, P, F_β) of the same pair.
pub fn pr_frontier<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    params: &MetricParams<T>,
    grid: &GridSpec<T>,
    labels: Option<&[bool]>,
) -> Result<Vec<FrontierPoint<T>>> {
    pr_frontier_with(s_scores, q_scores, params, grid, labels, true)
}

pub fn pr_frontier_with<T: Scalar>(
    s_scores: &[T],
    q_scores: &[T],
    params: &MetricParams<T>,
    grid: &GridSpec<T>,
    labels: Option<&[bool]>,
    parallel: bool,
) -> Result<Vec<FrontierPoint<T>>> {
    check_lengths(s_scores, q_scores)?;
    let (s_thr, q_thr) = grid_thresholds(s_scores, q_scores, grid)?;
    let counter = PairCounter::new(s_scores, q_scores, labels, &s_thr, &q_thr)?;
    let n = counter.n;
    let alpha = params.alpha().clone();

    let outs = counter.map_chunks(parallel, |rows| {
        let mut chunk = Vec::new();
        let mut row: Vec<Candidate<T>> = Vec::new();
        let mut current_row = usize::MAX;
        counter.sweep(rows, |i, j, c| {
            if i != current_row {
                chunk.extend(pareto_filter(std::mem::take(&mut row)));
                current_row = i;
            }
            if let (Some(rates), true) = feasible_rates::<T>(c, n) {
                row.push(Candidate {
                    r_hat: recall_hat(&rates, &alpha),
                    p_hat: precision_hat(&rates),
                    i,
                    j,
                    counts: c,
                    rates,
                });
            }
        });
        chunk.extend(pareto_filter(row));
        pareto_filter(chunk)
    });
    let front = pareto_filter(outs.into_iter().flatten().collect());
    if front.is_empty() {
        return Err(CoadError::NoFeasiblePair);
    }
    let positives = labels.map(|l| T::from_count(l.iter().filter(|&&y| y).count()));
    Ok(front
        .into_iter()
        .map(|c| {
            let supervised = positives.as_ref().map(|pos| {
                let tp = T::from_count(c.counts.n_sq_pos);
                let pred = T::from_count(c.counts.n_sq);
                SupervisedPoint {
                    recall: f_beta_from_fractions(&tp, &pred, pos, &Beta::Infinity),
                    precision: f_beta_from_fractions(&tp, &pred, pos, &Beta::Finite(T::zero())),
                    f_beta: f_beta_from_fractions(&tp, &pred, pos, params.beta()),
                }
            });
            FrontierPoint {
                pair: ThresholdPair::new(s_thr[c.i].clone(), q_thr[c.j].clone()),
                f_hat: f_beta_hat_unconstrained(&c.rates, params),
                r_hat: c.r_hat,
                p_hat: c.p_hat,
                rates: c.rates,
                supervised,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{compute_rates, f_beta_hat};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64) -> MetricParams<f64> {
        MetricParams::new(alpha, Beta::Finite(1.0)).unwrap()
    }

    /// 10% anomalies, all above 1 in both views; normals below 1.
    fn separable(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Vec::new();
        let mut q = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let anom = i % 10 == 0;
            let base = if anom { 1.5 } else { 0.0 };
            s.push(base + rng.gen::<f64>() * 0.9);
            q.push(base + rng.gen::<f64>() * 0.9);
            y.push(anom);
        }
        (s, q, y)
    }

    fn random_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
        let s = y
            .iter()
            .map(|&a| rng.gen::<f64>() + if a { 0.7 } else { 0.0 })
            .collect();
        let q = y
            .iter()
            .map(|&a| rng.gen::<f64>() + if a { 0.5 } else { 0.0 })
            .collect();
        (s, q, y)
    }

    #[test]
    fn thresholding_is_strict() {
        let (p, _) = apply_thresholds(
            &[0.5, 2.5, 1.0],
            &[0.0, 0.0, 0.0],
            &ThresholdPair::new(1.0, 0.0),
        )
        .unwrap();
        assert_eq!(p.values(), &[0.0, 1.0, 0.0]);
        let (p, q) =
            apply_thresholds(&[0.5, 2.5], &[0.1, 0.2], &ThresholdPair::new(3.5, 3.5)).unwrap();
        assert!(p.values().iter().chain(q.values()).all(|&v| v == 0.0));
        assert!(apply_thresholds(&[0.5], &[0.1, 0.2], &ThresholdPair::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn midpoints_include_sentinels() {
        let t = midpoint_thresholds(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(t, vec![0.0, 1.5, 2.5, 4.0]);
        assert!(midpoint_thresholds::<f64>(&[]).is_err());
        assert!(midpoint_thresholds(&[1.0, f64::NAN]).is_err());
        let d = downsample((0..11).collect::<Vec<_>>(), 3).unwrap();
        assert_eq!(d, vec![0, 5, 10]);
    }

    #[test]
    fn separable_data_reaches_one() {
        let (s, q, y) = separable(200, 1);
        let p = params(0.1);
        let split = ThresholdPair::new(1.2, 1.2);
        let (ps, pq) = apply_thresholds(&s, &q, &split).unwrap();
        let r = crate::metric::compute_rates(&ps, &pq).unwrap();
        assert!((crate::metric::f_beta_hat(&r, &p).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            crate::metric::supervised_f_beta(&ps, &pq, &y, &Beta::one()).unwrap(),
            1.0
        );

        // finite-sample coincidences among normals can push the estimate past 1
        let scan = scan_thresholds(&s, &q, &p, &GridSpec::AllMidpoints).unwrap();
        assert!(scan.best_score >= 1.0 - 1e-12, "{}", scan.best_score);

        let front = pr_frontier(&s, &q, &p, &GridSpec::AllMidpoints, Some(&y)).unwrap();
        assert!(front
            .iter()
            .any(|p| p.r_hat >= 1.0 - 1e-12 && p.p_hat >= 1.0 - 1e-12));
    }

    #[test]
    fn scan_matches_exhaustive_evaluation() {
        let (s, q, _) = random_scores(300, 5);
        let p = params(0.1);
        let grid = GridSpec::Downsampled(25);
        let scan = scan_thresholds(&s, &q, &p, &grid).unwrap();
        let (st, qt) = grid_thresholds(&s, &q, &grid).unwrap();
        let mut best: Option<(f64, usize, usize)> = None;
        let mut skipped = 0;
        for (i, ts) in st.iter().enumerate() {
            for (j, tq) in qt.iter().enumerate() {
                let (ps, pq) = apply_thresholds(&s, &q, &ThresholdPair::new(*ts, *tq)).unwrap();
                let score = compute_rates(&ps, &pq)
                    .ok()
                    .and_then(|r| f_beta_hat(&r, &p).ok());
                let entry = &scan.grid[i * qt.len() + j];
                assert_eq!(entry.score, score);
                match score {
                    None => skipped += 1,
                    Some(v) => {
                        if best.is_none_or(|(b, bi, bj)| v > b || (v == b && (i, j) > (bi, bj))) {
                            best = Some((v, i, j));
                        }
                    }
                }
            }
        }
        let (b, i, j) = best.unwrap();
        assert_eq!(scan.best_score, b);
        assert_eq!(scan.best, ThresholdPair::new(st[i], qt[j]));
        assert_eq!(scan.skipped, skipped);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let (s, q, y) = random_scores(2000, 9);
        let p = params(0.1);
        let par = scan_thresholds_with(
            &s,
            &q,
            &p,
            &GridSpec::Downsampled(150),
            ScanOptions::default(),
        )
        .unwrap();
        let ser = scan_thresholds_with(
            &s,
            &q,
            &p,
            &GridSpec::Downsampled(150),
            ScanOptions {
                parallel: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(par, ser);
        let a = pr_frontier_with(&s, &q, &p, &GridSpec::Downsampled(150), Some(&y), true).unwrap();
        let b = pr_frontier_with(&s, &q, &p, &GridSpec::Downsampled(150), Some(&y), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frontier_matches_brute_force_pareto() {
        let (s, q, y) = random_scores(200, 3);
        let p = params(0.1);
        let front = pr_frontier(&s, &q, &p, &GridSpec::AllMidpoints, Some(&y)).unwrap();
        let (st, qt) = grid_thresholds(&s, &q, &GridSpec::AllMidpoints).unwrap();
        let mut pts = Vec::new();
        for ts in &st {
            for tq in &qt {
                let (ps, pq) = apply_thresholds(&s, &q, &ThresholdPair::new(*ts, *tq)).unwrap();
                if let Ok(r) = compute_rates(&ps, &pq) {
                    if r.within_constraint() {
                        pts.push((recall_hat(&r, &0.1), precision_hat(&r)));
                    }
                }
            }
        }
        let mut oracle: Vec<(f64, f64)> = pts
            .iter()
            .filter(|a| {
                !pts.iter()
                    .any(|b| b.0 >= a.0 && b.1 >= a.1 && (b.0 > a.0 || b.1 > a.1))
            })
            .cloned()
            .collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        oracle.dedup();
        let got: Vec<(f64, f64)> = front.iter().map(|f| (f.r_hat, f.p_hat)).collect();
        assert_eq!(got, oracle);
        for f in &front {
            let (ps, pq) = apply_thresholds(&s, &q, &f.pair).unwrap();
            let sup = f.supervised.as_ref().unwrap();
            let prec = crate::metric::supervised_f_beta(&ps, &pq, &y, &Beta::Finite(0.0)).unwrap();
            let rec = crate::metric::supervised_f_beta(&ps, &pq, &y, &Beta::Infinity).unwrap();
            assert_eq!((sup.precision, sup.recall), (prec, rec));
        }
    }

    #[test]
    fn no_feasible_pair() {
        // every explicit threshold flags everything in both views
        let grid = GridSpec::Explicit {
            s: vec![-1.0],
            q: vec![-1.0, -2.0],
        };
        let r = scan_thresholds(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], &params(0.1), &grid);
        assert_eq!(r.unwrap_err(), CoadError::NoFeasiblePair);
    }

    #[test]
    fn exact_rationals_scan() {
        use crate::Exact;
        let s: Vec<Exact> = [0.1, 0.2, 0.9, 0.3, 0.95]
            .iter()
            .map(|&x| Exact::lit(x))
            .collect();
        let q: Vec<Exact> = [0.3, 0.1, 0.8, 0.2, 0.9]
            .iter()
            .map(|&x| Exact::lit(x))
            .collect();
        let p = MetricParams::new(Exact::lit(0.4), Beta::one()).unwrap();
        let scan = scan_thresholds(&s, &q, &p, &GridSpec::AllMidpoints).unwrap();
        assert_eq!(scan.best_score, Exact::lit(1.0));
    }

    proptest! {
        #[test]
        fn raising_tau_s_never_adds_positives(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..60),
            a in -6.0f64..6.0,
            b in -6.0f64..6.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let n_lo = threshold_view(&scores, &lo).iter().filter(|&&f| f).count();
            let n_hi = threshold_view(&scores, &hi).iter().filter(|&&f| f).count();
            prop_assert!(n_hi <= n_lo);
        }

        #[test]
        fn scan_is_deterministic(seed in 0u64..1000) {
            let (s, q, _) = random_scores(120, seed);
            let a = scan_thresholds(&s, &q, &params(0.1), &GridSpec::AllMidpoints);
            let b = scan_thresholds(&s, &q, &params(0.1), &GridSpec::AllMidpoints);
            prop_assert_eq!(a, b);
        }
    }
}
