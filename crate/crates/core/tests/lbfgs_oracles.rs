//! L-BFGS and the strong Wolfe search against a dense BFGS recursion and
//! closed-form quadratic optima.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use saavi::lbfgs::{
    lbfgs_maximize, two_loop_direction, wolfe_line_search, LbfgsConfig, LbfgsHistory, LineSearchConfig,
    LineSearchOutcome, OptStatus,
};
use saavi::numerics::{SeededStream, Substream};
use saavi::Error;

/// Random symmetric positive definite matrix with eigenvalues in roughly [0.1, 10].
fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut s = SeededStream::new(seed, Substream::Aux, 77);
    let a = DMatrix::from_fn(d, d, |_, _| s.standard_normal());
    let q = a.qr().q();
    let eig = DVector::from_fn(d, |_, _| 0.1 + 9.9 * s.uniform());
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

/// f(θ) = −½ (θ − c)ᵀ A (θ − c)
fn concave_quadratic(a: DMatrix<f64>, c: DVector<f64>) -> impl FnMut(&[f64]) -> saavi::Result<(f64, Vec<f64>)> {
    move |theta: &[f64]| {
        let r = DVector::from_column_slice(theta) - &c;
        let ar = &a * &r;
        Ok((-0.5 * r.dot(&ar), (-ar).as_slice().to_vec()))
    }
}

fn dense_bfgs_inverse(pairs: &[(Vec<f64>, Vec<f64>)], d: usize) -> DMatrix<f64> {
    let (s_last, y_last) = pairs.last().unwrap();
    let gamma = DVector::from_column_slice(s_last).dot(&DVector::from_column_slice(y_last))
        / DVector::from_column_slice(y_last).norm_squared();
    let mut h = DMatrix::identity(d, d) * gamma;
    let eye = DMatrix::<f64>::identity(d, d);
    for (s, y) in pairs {
        let s = DVector::from_column_slice(s);
        let y = DVector::from_column_slice(y);
        let rho = 1.0 / s.dot(&y);
        let left = &eye - rho * &s * y.transpose();
        let right = &eye - rho * &y * s.transpose();
        h = left * h * right + rho * &s * s.transpose();
    }
    h
}

#[test]
fn isotropic_quadratic_reaches_optimum() {
    let c = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let cfg = LbfgsConfig {
        g_tol: 1e-10,
        ..Default::default()
    };
    let r = lbfgs_maximize(concave_quadratic(DMatrix::identity(3, 3), c), vec![0.0; 3], 10, &cfg).unwrap();
    assert_eq!(r.status, OptStatus::Converged);
    assert!(r.iterations_used <= 10);
    for (t, e) in r.theta_star.iter().zip([1.0, 2.0, 3.0]) {
        assert!((t - e).abs() < 1e-8);
    }
}

#[test]
fn rosenbrock_is_solved() {
    let f = |t: &[f64]| -> saavi::Result<(f64, Vec<f64>)> {
        let (x, y) = (t[0], t[1]);
        let v = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
        let gx = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
        let gy = 200.0 * (y - x * x);
        Ok((-v, vec![-gx, -gy]))
    };
    let cfg = LbfgsConfig {
        g_tol: 1e-8,
        f_tol: 0.0,
        ..Default::default()
    };
    let r = lbfgs_maximize(f, vec![-1.2, 1.0], 500, &cfg).unwrap();
    assert_eq!(r.status, OptStatus::Converged);
    assert!((r.theta_star[0] - 1.0).abs() < 1e-6 && (r.theta_star[1] - 1.0).abs() < 1e-6);
    assert!(r.certificates.iter().all(|c| c.satisfies_strong_wolfe()));
}

#[test]
fn iteration_cap_is_respected() {
    let a = random_spd(6, 3);
    let r = lbfgs_maximize(concave_quadratic(a, DVector::from_element(6, 4.0)), vec![0.0; 6], 2, &LbfgsConfig::default())
        .unwrap();
    assert_eq!(r.status, OptStatus::IterationCap);
    assert_eq!(r.iterations_used, 2);
}

#[test]
fn domain_boundary_shrinks_steps() {
    // ln x − 10x, maximized at 0.1; the first trial lands on x ≤ 0
    let f = |t: &[f64]| -> saavi::Result<(f64, Vec<f64>)> {
        if t[0] <= 0.0 {
            return Err(Error::Domain("x <= 0".into()));
        }
        Ok((t[0].ln() - 10.0 * t[0], vec![1.0 / t[0] - 10.0]))
    };
    let cfg = LbfgsConfig {
        g_tol: 1e-9,
        ..Default::default()
    };
    let r = lbfgs_maximize(f, vec![1.0], 100, &cfg).unwrap();
    assert!((r.theta_star[0] - 0.1).abs() < 1e-8, "{:?}", r.theta_star);
}

#[test]
fn non_finite_start_is_an_input_error() {
    let f = |_: &[f64]| -> saavi::Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
    assert!(matches!(lbfgs_maximize(f, vec![0.0], 5, &LbfgsConfig::default()), Err(Error::Input(_))));
}

#[test]
fn other_errors_propagate() {
    let mut calls = 0;
    let f = |t: &[f64]| -> saavi::Result<(f64, Vec<f64>)> {
        calls += 1;
        if calls > 1 {
            return Err(Error::Contract("boom".into()));
        }
        Ok((-t[0] * t[0], vec![-2.0 * t[0]]))
    };
    assert!(matches!(lbfgs_maximize(f, vec![3.0], 5, &LbfgsConfig::default()), Err(Error::Contract(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn two_loop_matches_dense_bfgs(d in 2usize..7, k in 1usize..6, seed in any::<u64>()) {
        let a = random_spd(d, seed);
        let mut s = SeededStream::new(seed, Substream::Aux, 1);
        let mut hist = LbfgsHistory::new(10);
        let mut pairs = Vec::new();
        for _ in 0..k {
            let sv: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
            let yv = (&a * DVector::from_column_slice(&sv)).as_slice().to_vec();
            prop_assert!(hist.push(sv.clone(), yv.clone()));
            pairs.push((sv, yv));
        }
        let g: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
        let ours = two_loop_direction(&g, &hist).unwrap();
        let oracle = dense_bfgs_inverse(&pairs, d) * DVector::from_column_slice(&g);
        for (x, y) in ours.iter().zip(oracle.iter()) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn quadratic_solved_and_monotone(d in 1usize..12, seed in any::<u64>()) {
        let a = random_spd(d, seed);
        let mut s = SeededStream::new(seed, Substream::Aux, 2);
        let c = DVector::from_fn(d, |_, _| 3.0 * s.standard_normal());
        let cfg = LbfgsConfig { g_tol: 1e-9, f_tol: 0.0, ..Default::default() };
        let r = lbfgs_maximize(concave_quadratic(a.clone(), c.clone()), vec![0.0; d], 200, &cfg).unwrap();
        prop_assert_eq!(r.status, OptStatus::Converged);
        // ‖θ − c‖ ≤ ‖A⁻¹‖ ‖∇f‖ ≤ 10 · √d · g_tol
        let err = (DVector::from_column_slice(&r.theta_star) - c).norm();
        prop_assert!(err < 1e-7, "{err}");
        let mut last = f64::NEG_INFINITY;
        for cert in &r.certificates {
            prop_assert!(cert.value > cert.value0);
            prop_assert!(cert.value0 >= last);
            last = cert.value;
        }
    }

    #[test]
    fn accepted_steps_satisfy_wolfe(d in 2usize..8, seed in any::<u64>(), c2 in 0.1f64..0.95) {
        let a = random_spd(d, seed);
        let mut s = SeededStream::new(seed, Substream::Aux, 3);
        let c = DVector::from_fn(d, |_, _| 5.0 * s.standard_normal());
        let mut f = concave_quadratic(a, c);
        let theta = vec![0.0; d];
        let (v0, g0) = f(&theta).unwrap();
        // a random ascent direction, not the gradient
        let mut dir: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
        let mut slope0: f64 = dir.iter().zip(&g0).map(|(a, b)| a * b).sum();
        if slope0 < 0.0 {
            dir.iter_mut().for_each(|x| *x = -*x);
            slope0 = -slope0;
        }
        prop_assume!(slope0 > 1e-6);
        let cfg = LineSearchConfig { c2, ..Default::default() };
        let mut phi = |step: f64| {
            let x: Vec<f64> = theta.iter().zip(&dir).map(|(t, r)| t + step * r).collect();
            let (v, g) = f(&x).unwrap();
            Some((v, g.iter().zip(&dir).map(|(a, b)| a * b).sum()))
        };
        match wolfe_line_search(&mut phi, v0, slope0, 1.0, &cfg).unwrap() {
            LineSearchOutcome::Accepted { point, .. } => {
                let (v, sl) = phi(point.step).unwrap();
                prop_assert_eq!(v, point.value);
                prop_assert!(v >= v0 + 1e-4 * point.step * slope0);
                prop_assert!(sl.abs() <= c2 * slope0);
            }
            LineSearchOutcome::Failed { .. } => prop_assert!(false, "search failed on a quadratic"),
        }
    }
}
