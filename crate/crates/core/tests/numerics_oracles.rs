//! Special functions and the Welch test against `statrs`, and the normal
//! sampler against an independent Box–Muller sampler.

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use saavi::numerics::{
    ln_gamma, regularized_incomplete_beta, stable_mean, stable_sd, standard_normal_matrix,
    student_t_cdf, welch_t_test, SeededStream, Substream,
};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let p = 2.0 * dist.cdf(-t.abs());
    (t, df, p)
}

#[test]
fn welch_matches_statrs_on_shifted_ranges() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [3.0, 4.0, 5.0, 6.0, 7.0];
    let r = welch_t_test(&a, &b).unwrap();
    let (t, df, p) = welch_oracle(&a, &b);
    assert!((r.t_statistic - t).abs() < 1e-12);
    assert!((r.t_statistic + 2.0).abs() < 1e-12);
    assert!((r.degrees_of_freedom - df).abs() < 1e-10);
    assert!((r.p_value - p).abs() < 1e-9, "{} vs {p}", r.p_value);
}

#[test]
fn welch_separates_distant_normals() {
    let mut s = SeededStream::new(5, Substream::Aux, 0);
    let a: Vec<f64> = (0..100).map(|_| s.standard_normal()).collect();
    let b: Vec<f64> = (0..100).map(|_| 5.0 + s.standard_normal()).collect();
    let r = welch_t_test(&a, &b).unwrap();
    assert!(r.p_value < 1e-10, "p = {}", r.p_value);
    let (_, _, p) = welch_oracle(&a, &b);
    assert!(p < 1e-10);
}

#[test]
fn large_sample_moments_agree_with_independent_sampler() {
    let n = 100_000;
    let ours = standard_normal_matrix(&mut SeededStream::new(17, Substream::Aux, 3), n, 1);
    let mut rng = StdRng::seed_from_u64(17);
    let other: Vec<f64> = (0..n / 2)
        .flat_map(|_| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            let r = (-2.0 * u1.ln()).sqrt();
            let a = 2.0 * std::f64::consts::PI * u2;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    for v in [ours.as_slice(), other.as_slice()] {
        assert!(stable_mean(v).abs() < 4.0 / (n as f64).sqrt());
        assert!((stable_sd(v).powi(2) - 1.0).abs() < 0.05);
    }
    let r = welch_t_test(ours.as_slice(), &other).unwrap();
    assert!(r.p_value > 1e-4, "samplers disagree: p = {}", r.p_value);
}

proptest! {
    #[test]
    fn ln_gamma_matches_statrs(x in 0.01f64..150.0) {
        let ours = ln_gamma(x);
        let theirs = statrs::function::gamma::ln_gamma(x);
        prop_assert!((ours - theirs).abs() <= 1e-10 * theirs.abs().max(1.0), "{ours} vs {theirs}");
    }

    #[test]
    fn incomplete_beta_matches_statrs(a in 0.1f64..60.0, b in 0.1f64..60.0, x in 0.0f64..=1.0) {
        let ours = regularized_incomplete_beta(a, b, x);
        let theirs = statrs::function::beta::beta_reg(a, b, x);
        prop_assert!((ours - theirs).abs() < 1e-10, "{ours} vs {theirs}");
    }

    #[test]
    fn t_cdf_matches_statrs(t in -40.0f64..40.0, df in 1.0f64..500.0) {
        let ours = student_t_cdf(t, df);
        let theirs = StudentsT::new(0.0, 1.0, df).unwrap().cdf(t);
        prop_assert!((ours - theirs).abs() < 1e-10, "{ours} vs {theirs}");
    }

    #[test]
    fn t_cdf_half_at_zero(df in 1.0f64..1e4) {
        prop_assert!((student_t_cdf(0.0, df) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn welch_matches_oracle_on_random_samples(
        a in proptest::collection::vec(-50.0f64..50.0, 2..40),
        b in proptest::collection::vec(-50.0f64..50.0, 2..40),
    ) {
        let r = welch_t_test(&a, &b).unwrap();
        let (t, _, p) = welch_oracle(&a, &b);
        prop_assume!(t.is_finite());
        prop_assert!((r.t_statistic - t).abs() <= 1e-9 * t.abs().max(1.0));
        prop_assert!((r.p_value - p).abs() < 1e-9, "{} vs {p}", r.p_value);
    }

    #[test]
    fn normal_draws_are_reproducible(seed in any::<u64>(), idx in 0u64..1000) {
        let a = standard_normal_matrix(&mut SeededStream::new(seed, Substream::Train, idx), 4, 3);
        let b = standard_normal_matrix(&mut SeededStream::new(seed, Substream::Train, idx), 4, 3);
        prop_assert_eq!(a, b);
    }
}
