use coad::metric::{f_beta_hat, Beta, MetricParams, RateSummary};
use coad::synth::{
    gen_gaussian_outliers, gen_overlap_scenario, simplified_mnist_fbeta, GaussianOutlierConfig,
    NormalBlur, OverlapMode, OverlapOutput, OverlapScenario, SimplifiedMnistModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn normal_scores_have_half_normal_mean() {
    let data = gen_gaussian_outliers(&GaussianOutlierConfig::paper(), 7).unwrap();
    let normal: Vec<f64> = data
        .s_scores
        .iter()
        .zip(&data.labels)
        .filter(|(_, &y)| !y)
        .map(|(&s, _)| s)
        .collect();
    let n = normal.len() as f64;
    let mean = normal.iter().sum::<f64>() / n;
    let expected = (2.0 / std::f64::consts::PI).sqrt();
    // Var|Z| = 1 − 2/π
    let se = ((1.0 - 2.0 / std::f64::consts::PI) / n).sqrt();
    assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
}

#[test]
fn sampled_overlap_tracks_exact_marginals() {
    let s = OverlapScenario::from_marginals(0.15f64, 0.1, 0.2, 0.05, 0.08).unwrap();
    let OverlapOutput::Exact(table) = gen_overlap_scenario(&s, OverlapMode::Exact).unwrap() else {
        unreachable!()
    };
    let sm = table.s_marginal();
    assert!((sm[0] - s.p_a_minus_b()).abs() < 1e-12);
    assert!((sm[1] - s.p_b()).abs() < 1e-12);
    assert!((sm[2] - s.p_ac_minus_b()).abs() < 1e-12);
    let qm = table.q_marginal();
    assert!((qm[0] - s.p_a_minus_c()).abs() < 1e-12);
    assert!((qm[1] - s.p_c()).abs() < 1e-12);
    assert!((qm[2] - s.p_ac_minus_c()).abs() < 1e-12);

    let OverlapOutput::Sampled(sample) = gen_overlap_scenario(
        &s,
        OverlapMode::Sampled {
            n: 100_000,
            seed: 11,
        },
    )
    .unwrap() else {
        unreachable!()
    };
    let freq = sample.cell_frequencies();
    let exact = table.joint();
    for i in 0..3 {
        for j in 0..3 {
            assert!((freq[i][j] - exact[i][j]).abs() < 0.01);
        }
    }
}

/// Rates of a labeling on `n` examples drawn from the toy observation model.
fn simulate_mnist(
    model: &SimplifiedMnistModel<f64>,
    labeling: &[bool; 4],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> RateSummary<f64> {
    let draw_digit = |rng: &mut ChaCha8Rng, class: usize| -> usize {
        if class == 0 {
            if model.normal_blur == NormalBlur::Symmetric {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for d in 1..4 {
                    acc += model.b[d];
                    if u < acc {
                        return d;
                    }
                }
            }
            0
        } else if rng.gen::<f64>() < model.b[class] {
            0
        } else {
            class
        }
    };
    let (mut s, mut q, mut sq) = (0usize, 0usize, 0usize);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut class = 3;
        let mut acc = 0.0;
        for (c, w) in model.w.iter().enumerate() {
            acc += w;
            if u < acc {
                class = c;
                break;
            }
        }
        let a = labeling[draw_digit(rng, class)];
        let b = labeling[draw_digit(rng, class)];
        s += a as usize;
        q += b as usize;
        sq += (a && b) as usize;
    }
    RateSummary::from_counts(s, q, sq, n).unwrap()
}

#[test]
fn mnist_closed_form_matches_monte_carlo() {
    let labeling = [false, true, true, false];
    let params = MetricParams::new(0.15, Beta::one()).unwrap();
    for blur in [NormalBlur::None, NormalBlur::Symmetric] {
        let model = SimplifiedMnistModel {
            normal_blur: blur,
            ..SimplifiedMnistModel::<f64>::paper()
        };
        let exact = simplified_mnist_fbeta(&model, &labeling, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let reps = 20;
        let per = 50_000;
        let estimates: Vec<f64> = (0..reps)
            .map(|_| {
                f_beta_hat(&simulate_mnist(&model, &labeling, per, &mut rng), &params).unwrap()
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "{blur:?}: Monte Carlo {mean} ± {se} vs closed form {exact}"
        );
    }
}
