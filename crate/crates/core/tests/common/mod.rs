//! Reference computations shared by the integration targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use adstm_core::physics::galerkin_transition;
use adstm_core::simulator::{step_pde, FlowSpec};
use adstm_core::spectral::{analyze, synthesize, SpectralCoeffs, Truncation};
use adstm_core::state_space::{ffbs, ObservationSeries, UpdateForm};
use adstm_core::{Field, GridSpec};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shear_flow(a: f64, b: f64) -> (f64, f64, f64) {
    (
        0.05 + 0.02 * (2.0 * PI * b).sin(),
        0.04 * (2.0 * PI * a).cos(),
        2e-4 * (1.0 + 0.5 * (2.0 * PI * (a + b)).sin()),
    )
}

fn initial(a: f64, b: f64) -> f64 {
    2.0 + (2.0 * PI * a).cos() + 0.6 * (2.0 * PI * (a + b)).sin() - 0.4 * (2.0 * PI * 2.0 * b).cos()
}

/// One projected step on a 16x16 grid under a spatially varying flow,
/// against a 16x refined finite-difference step. Returns the discrepancy
/// relative to the oracle field and relative to the oracle's increment.
pub fn galerkin_vs_finite_difference() -> (f64, f64) {
    let grid = GridSpec::new(16, 16).unwrap();
    let spec = FlowSpec::Analytic(shear_flow);
    let t = Truncation::new(8, 8).unwrap();
    let tr = galerkin_transition(&spec.on_grid(&grid, 0.0), t, &grid).unwrap();
    let a0 = analyze(&Field::from_fn(&grid, initial), t).unwrap();
    let projected = synthesize(&SpectralCoeffs::from_vec(t, &tr.exp_p * &a0.values).unwrap(), &grid).unwrap();

    let r = 16;
    let fine = GridSpec::new(16 * r, 16 * r).unwrap();
    let stepped = step_pde(&Field::from_fn(&fine, initial), &spec.on_grid(&fine, 0.0), 1.0, 1).unwrap();
    let oracle = DMatrix::from_fn(16, 16, |i, j| stepped.values[(i * r, j * r)]);
    let start = Field::from_fn(&grid, initial).values;
    let diff = (&projected.values - &oracle).norm();
    (diff / oracle.norm(), diff / (&oracle - &start).norm())
}

/// FFBS on `x_t = 0.8 x_{t-1} + w`, `y_t = x_t + v`, two observations,
/// against the closed-form joint posterior of `(x0, x1, x2)`. Returns the
/// largest deviation of the empirical means and covariances in units of
/// their Monte-Carlo standard errors.
pub fn ffbs_joint_moments(draws: usize, seed: u64) -> (f64, f64) {
    let (g, w, v, m0, c0) = (0.8, 0.5, 0.3, 1.0, 2.0);
    let ys = [1.7, 0.4];
    let mut prec = DMatrix::<f64>::zeros(3, 3);
    let mut lin = DVector::<f64>::zeros(3);
    prec[(0, 0)] += 1.0 / c0;
    lin[0] += m0 / c0;
    for (t, y) in ys.iter().enumerate() {
        let (a, b) = (t, t + 1);
        prec[(b, b)] += 1.0 / w + 1.0 / v;
        prec[(a, a)] += g * g / w;
        prec[(a, b)] -= g / w;
        prec[(b, a)] -= g / w;
        lin[b] += y / v;
    }
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * &lin;

    let mut obs = ObservationSeries::new(DMatrix::from_element(1, 1, 1.0), vec!["s".into()]);
    for y in ys {
        obs.push_step(vec![(0, vec![0], DVector::from_element(1, y))]).unwrap();
    }
    let gs = vec![DMatrix::from_element(1, 1, g)];
    let wm = DMatrix::from_element(1, 1, w);
    let sigma2 = DVector::from_element(1, v);
    let (m0v, c0m) = (DVector::from_element(1, m0), DMatrix::from_element(1, 1, c0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = DVector::<f64>::zeros(3);
    let mut sumsq = DMatrix::<f64>::zeros(3, 3);
    for _ in 0..draws {
        let (_, traj) = ffbs(&obs, &gs, &wm, &sigma2, &m0v, &c0m, UpdateForm::Auto, &mut rng).unwrap();
        let x = traj.row(0).transpose();
        sum += &x;
        sumsq += &x * x.transpose();
    }
    let n = draws as f64;
    let emp_mean = &sum / n;
    let emp_cov = &sumsq / n - &emp_mean * emp_mean.transpose();
    let (mut zm, mut zc) = (0.0f64, 0.0f64);
    for i in 0..3 {
        zm = zm.max((emp_mean[i] - mean[i]).abs() / (cov[(i, i)] / n).sqrt());
        for j in 0..3 {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            zc = zc.max((emp_cov[(i, j)] - cov[(i, j)]).abs() / se);
        }
    }
    (zm, zc)
}
