//! Advection–diffusion operator and its Galerkin projection onto the
//! truncated Fourier basis.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::expm::matrix_exponential;
use super::flow::{central_diff, laplacian, FlowFields};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::spectral::{Basis, Mode, Truncation};

/// `A f = -v . grad f + grad D . grad f + D lap f` with periodic central
/// differences.
pub fn apply_operator(field: &Field, flow: &FlowFields) -> Result<Field> {
    if field.shape() != flow.shape() {
        return Err(Error::DimensionMismatch(format!(
            "field {:?} vs flow {:?}",
            field.shape(),
            flow.shape()
        )));
    }
    let f = &field.values;
    let (fx, fy) = (central_diff(f, 0), central_diff(f, 1));
    let lap = laplacian(f);
    let (dx, dy) = (central_diff(&flow.diffusivity, 0), central_diff(&flow.diffusivity, 1));
    let (n1, n2) = field.shape();
    Ok(Field::new(DMatrix::from_fn(n1, n2, |i, j| {
        let ix = (i, j);
        -flow.vx[ix] * fx[ix] - flow.vy[ix] * fy[ix]
            + dx[ix] * fx[ix]
            + dy[ix] * fy[ix]
            + flow.diffusivity[ix] * lap[ix]
    })))
}

/// The operator applied to one basis function, with exact derivatives of the
/// basis function and finite-difference derivatives of `D`. Row-major.
pub fn apply_operator_to_mode(
    mode: &Mode,
    grid: &GridSpec,
    flow: &FlowFields,
    grad_d: &(DMatrix<f64>, DMatrix<f64>),
) -> DVector<f64> {
    DVector::from_iterator(
        grid.len(),
        (0..grid.len()).map(|p| {
            let (i, j) = (p / grid.n2, p % grid.n2);
            let s = grid.coord(i, j);
            let (g1, g2) = mode.grad(s);
            let ix = (i, j);
            -flow.vx[ix] * g1 - flow.vy[ix] * g2
                + grad_d.0[ix] * g1
                + grad_d.1[ix] * g2
                + flow.diffusivity[ix] * mode.laplacian(s)
        }),
    )
}

/// Galerkin generator `P` and one-step propagator `exp(P * step)`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub p: DMatrix<f64>,
    pub exp_p: DMatrix<f64>,
    pub step: f64,
}

/// `P = Gamma^-1 Psi` with `Psi_ij = <A f_j, f_i>` summed over the grid and
/// `Gamma` the diagonal Gram of the retained basis.
pub fn galerkin_generator(basis: &Basis, flow: &FlowFields) -> Result<DMatrix<f64>> {
    let grid = &basis.grid;
    flow.validate(grid)?;
    let grad_d = (
        central_diff(&flow.diffusivity, 0),
        central_diff(&flow.diffusivity, 1),
    );
    let q = basis.dim();
    let columns: Vec<DVector<f64>> = basis
        .modes
        .par_iter()
        .map(|m| apply_operator_to_mode(m, grid, flow, &grad_d))
        .collect();
    let applied = DMatrix::from_columns(&columns);
    let psi = basis.matrix.tr_mul(&applied);
    if basis.gram.iter().any(|&g| g <= 0.0) {
        return Err(Error::Internal("singular Gram matrix".into()));
    }
    Ok(DMatrix::from_fn(q, q, |i, j| psi[(i, j)] / basis.gram[i]))
}

pub fn galerkin_transition(
    flow: &FlowFields,
    truncation: Truncation,
    grid: &GridSpec,
) -> Result<TransitionMatrix> {
    let basis = Basis::new(grid, truncation)?;
    transition_for_basis(&basis, flow)
}

pub fn transition_for_basis(basis: &Basis, flow: &FlowFields) -> Result<TransitionMatrix> {
    let p = galerkin_generator(basis, flow)?;
    let exp_p = matrix_exponential(&p)?;
    if exp_p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("non-finite propagator".into()));
    }
    Ok(TransitionMatrix { p, exp_p, step: 1.0 })
}
