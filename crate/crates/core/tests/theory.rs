use coad::metric::{f_beta_hat, Beta, MetricParams, PredictionVector, RateSummary};
use coad::synth::OverlapScenario;
use coad::theory::{
    best_candidate, best_response, beta_crit, candidate_solutions, compare_solutions,
    empirical_flip, mu_sq_star_curve, optimal_pq_given_ps, verify_bounds, CategoricalSolution,
    LabeledStats, RegionLabeling, Verdict,
};
use coad::{Exact, Scalar};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Valid scenarios with parameters on a 0.001 grid, so the exact and the
/// float versions describe the same tables.
fn scenarios(count: usize, seed: u64) -> Vec<[f64; 5]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let p_a = round3(rng.gen_range(0.05..0.2));
        let ba = round3(rng.gen_range(0.05..0.4));
        let ca = round3(rng.gen_range(ba..0.5));
        let bn = round3(rng.gen_range(0.02..0.2));
        let cn = round3(rng.gen_range(0.02..0.2));
        let s = OverlapScenario::from_marginals(p_a, ba, ca, bn, cn).unwrap();
        if s.validate().is_ok() && beta_crit(&s, &p_a).is_ok() {
            out.push([p_a, ba, ca, bn, cn]);
        }
    }
    out
}

fn exact_scenario(m: &[f64; 5]) -> OverlapScenario<Exact> {
    let l = Exact::lit;
    OverlapScenario::from_marginals(l(m[0]), l(m[1]), l(m[2]), l(m[3]), l(m[4])).unwrap()
}

#[test]
fn closed_form_beta_crit_matches_enumeration() {
    for m in scenarios(6, 11) {
        let s = OverlapScenario::from_marginals(m[0], m[1], m[2], m[3], m[4]).unwrap();
        let crit = beta_crit(&s, &m[0]).unwrap().beta_sq_crit;
        let flip = empirical_flip(&s, m[0], crit / 100.0, crit * 100.0, 1e-9)
            .unwrap()
            .unwrap_or_else(|| panic!("no flip for {m:?}"));
        assert!(
            ((flip - crit) / crit).abs() < 0.01,
            "{m:?}: {flip} vs {crit}"
        );

        let cands = candidate_solutions(&s);
        let exact = exact_scenario(&m);
        let exact_cands = candidate_solutions(&exact);
        let exact_crit = beta_crit(&exact, &Exact::lit(m[0])).unwrap().beta_sq_crit;
        for (factor, expect_b) in [(0.9, false), (1.1, true)] {
            let b2 = exact_crit.clone() * Exact::lit(factor);
            let params = MetricParams::new(
                Exact::lit(m[0]),
                Beta::Finite(Exact::lit(b2.approx().sqrt())),
            )
            .unwrap();
            let best = best_candidate(&exact, &exact_cands, &params).unwrap();
            assert_eq!(
                exact_cands[best.index].labeling.labels_b().is_one(),
                expect_b
            );
        }
        for k in 0..=40 {
            let b2 = crit * 10f64.powf(-2.0 + k as f64 * 0.1);
            let params = MetricParams::new(m[0], Beta::Finite(b2.sqrt())).unwrap();
            let best = best_candidate(&s, &cands, &params).unwrap();
            assert_eq!(*cands[best.index].labeling.labels_c(), 1.0, "{m:?} at {b2}");
        }
    }
}

#[test]
fn bounds_hold_exactly_on_overlap_tables() {
    let l = Exact::lit;
    let betas = vec![
        Beta::Finite(l(0.0)),
        Beta::Finite(l(0.5)),
        Beta::one(),
        Beta::Finite(l(2.0)),
        Beta::Infinity,
    ];
    for m in scenarios(5, 23) {
        let s = exact_scenario(&m);
        let table = s.cell_table();
        let labelings: Vec<_> = candidate_solutions(&s)
            .into_iter()
            .map(|c| {
                (
                    c.name,
                    LabeledStats::from_table(&table, &c.labeling).unwrap(),
                )
            })
            .collect();
        let report = verify_bounds(&labelings, &betas, Exact::from_count(0)).unwrap();
        assert!(report.all_hold, "{m:?}");
        assert!(report.excluded <= 1);
        for r in &report.records {
            let (_, stats) = labelings.iter().find(|(n, _)| n == &r.name).unwrap();
            if stats.rates.better_than_random() {
                assert!(r.d <= r.d_naive, "{}", r.name);
            }
        }
    }
}

#[test]
fn perfect_labeling_is_exact() {
    let s = exact_scenario(&scenarios(1, 5)[0]);
    let one = Exact::one;
    let zero = Exact::zero;
    let perfect = RegionLabeling::new([one(), one(), zero()], [one(), one(), zero()]);
    // anomalies only live in regions labelled 1 when the normal class has no
    // mass there, so use a scenario without normal noise
    let s = OverlapScenario::new(
        s.p_a.clone(),
        [s.c1(), s.c2(), s.c3(), one(), zero(), zero()],
    )
    .unwrap();
    let stats = LabeledStats::from_table(&s.cell_table(), &perfect).unwrap();
    let report = verify_bounds(&[("perfect".into(), stats)], &[Beta::one()], zero()).unwrap();
    let r = &report.records[0];
    assert_eq!(r.f_hat, one());
    assert_eq!(r.f, one());
    assert_eq!(r.d, zero());
    assert_eq!(r.fp, zero());
}

fn random_feasible(rng: &mut ChaCha8Rng, n: usize, gamma: f64) -> Vec<f64> {
    // Uniform draw, then rescale towards the target mean while staying in [0, 1].
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

#[test]
fn greedy_inner_solution_beats_random_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for instance in 0..10 {
        let n = rng.gen_range(4..=12);
        let mut p_s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mean = p_s.iter().sum::<f64>() / n as f64;
        if mean > 0.5 {
            p_s.iter_mut().for_each(|x| *x *= 0.45 / mean);
        }
        let mut pairing: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            pairing.swap(i, rng.gen_range(0..=i));
        }
        let gamma = (rng.gen_range(0.05..0.5f64) * 100.0).round() / 100.0;
        let ps = PredictionVector::new(p_s.clone()).unwrap();
        let sol = optimal_pq_given_ps(&ps, &pairing, gamma).unwrap();
        assert!((sol.p_q_star.mean() - gamma).abs() < 1e-12);
        let w: Vec<f64> = pairing.iter().map(|&j| p_s[j]).collect();
        for _ in 0..10_000 {
            let pq = random_feasible(&mut rng, n, gamma);
            let mu_sq = w.iter().zip(&pq).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            assert!(mu_sq <= sol.mu_sq + 1e-9, "instance {instance}");
        }

        let gammas: Vec<f64> = (0..=50).map(|k| k as f64 / 100.0).collect();
        let curve = mu_sq_star_curve(&ps, &pairing, &gammas).unwrap();
        for c in curve.windows(3) {
            assert!(c[1] >= c[0] - 1e-15);
            assert!(c[2] - 2.0 * c[1] + c[0] <= 1e-12);
        }

        for beta in [0.5, 1.0, 2.0] {
            let params = MetricParams::new(0.1, Beta::Finite(beta)).unwrap();
            let br = best_response(&ps, &pairing, &params).unwrap();
            if !br.inner.is_categorical() {
                assert!((br.inner.p_q_star.mean() - 0.5).abs() < 1e-9);
            }
            for g in &gammas {
                let f = coad::theory::inner_f_hat(&ps, &pairing, *g, &params).unwrap();
                assert!(f <= br.f_hat + 1e-12, "gamma {g} beats the best response");
            }
        }
    }
}

#[test]
fn lemma_agrees_with_direct_evaluation() {
    let l = Exact::lit;
    let pairs = [
        ((0.3, 0.05), (0.2, 0.0), 0.2),
        ((0.25, 0.04), (0.1, 0.005), 0.1),
        ((0.4, 0.1), (0.15, 0.01), 0.15),
    ];
    for ((ma, da), (mb, db), alpha) in pairs {
        let a = CategoricalSolution::new(l(ma), l(da), "a").unwrap();
        let b = CategoricalSolution::new(l(mb), l(db), "b").unwrap();
        let Verdict::FlipAt { beta_sq_crit } = compare_solutions(&a, &b, &l(alpha)).unwrap() else {
            panic!("expected a flip");
        };
        let crit = beta_sq_crit.approx();
        for k in 0..20 {
            let b2 = crit * 10f64.powf(-1.0 + k as f64 * 2.0 / 19.0);
            if ((b2 - crit) / crit).abs() < 1e-9 {
                continue;
            }
            let params = MetricParams::new(alpha, Beta::Finite(b2.sqrt())).unwrap();
            let fa = coad::metric::f_beta_from_joint(&ma, &da, &params);
            let fb = coad::metric::f_beta_from_joint(&mb, &db, &params);
            assert_eq!(fa > fb, b2 > crit, "k = {k}");
        }
    }
}

#[test]
fn lemma_flip_matches_rates_from_means() {
    // the joint-only form and the full rate form agree on categorical solutions
    let r = RateSummary::from_means(0.2f64, 0.25, 0.12, None).unwrap();
    let params = MetricParams::new(0.1, Beta::Finite(1.5)).unwrap();
    let via_joint = coad::metric::f_beta_from_joint(&r.mu_sq, &r.d, &params);
    let direct = f_beta_hat(&r, &params).unwrap();
    assert!((via_joint - direct).abs() < 1e-12);
}
