//! Real Fourier basis on the periodic grid.
//!
//! A real field on an `n1 x n2` torus is expanded as
//!
//! ```text
//! f(s) = sum_{k in K1} a_k cos(2 pi k.s) + sum_{k in K2} 2 (a_k^c cos(2 pi k.s) + a_k^s sin(2 pi k.s))
//! ```
//!
//! where `K1` holds the self-conjugate frequencies and `K2` one representative
//! of every conjugate pair. Coefficient vectors are laid out as
//! `[a^c over K1, a^c over K2, a^s over K2]`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

pub type Wavenumber = (i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Cos,
    Sin,
}

/// Self-conjugate (`k1_set`) and conjugate-pair representative (`k2_set`)
/// frequencies of an `n1 x n2` DFT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavenumberSets {
    pub n1: usize,
    pub n2: usize,
    pub k1_set: Vec<Wavenumber>,
    pub k2_set: Vec<Wavenumber>,
}

pub fn build_wavenumber_sets(grid: &GridSpec) -> Result<WavenumberSets> {
    WavenumberSets::for_dims(grid.n1, grid.n2)
}

impl WavenumberSets {
    pub fn for_dims(n1: usize, n2: usize) -> Result<Self> {
        for n in [n1, n2] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "dimension {n} must be even and at least 2"
                )));
            }
        }
        let (h1, h2) = ((n1 / 2) as i64, (n2 / 2) as i64);
        let k1_set = vec![(0, 0), (0, h2), (h1, 0), (h1, h2)];
        let mut k2_set = Vec::with_capacity((n1 * n2 - 4) / 2);
        for a in 1..h1 {
            for b in (-h2 + 1)..=h2 {
                k2_set.push((a, b));
            }
        }
        for b in 1..h2 {
            k2_set.push((0, b));
        }
        for b in 1..h2 {
            k2_set.push((h1, b));
        }
        Ok(Self {
            n1,
            n2,
            k1_set,
            k2_set,
        })
    }

    /// Number of real degrees of freedom, `|K1| + 2|K2|`.
    pub fn dim(&self) -> usize {
        self.k1_set.len() + 2 * self.k2_set.len()
    }

    pub fn contains_k1(&self, k: Wavenumber) -> bool {
        self.k1_set.contains(&k)
    }

    pub fn contains_k2(&self, k: Wavenumber) -> bool {
        self.k2_set.contains(&k)
    }

    /// `cos(2 pi k.s)` or `sin(2 pi k.s)` for a member frequency.
    pub fn basis_eval(&self, k: Wavenumber, kind: Component, s: (f64, f64)) -> Result<f64> {
        if self.contains_k1(k) {
            if kind == Component::Sin {
                return Err(Error::SineOfSelfConjugate(k.0, k.1));
            }
        } else if !self.contains_k2(k) {
            return Err(Error::InvalidArgument(format!(
                "wavenumber {k:?} is not in the {}x{} sets",
                self.n1, self.n2
            )));
        }
        Ok(wave(k, kind, s))
    }
}

#[inline]
pub(crate) fn phase(k: Wavenumber, s: (f64, f64)) -> f64 {
    2.0 * PI * (k.0 as f64 * s.0 + k.1 as f64 * s.1)
}

#[inline]
fn wave(k: Wavenumber, kind: Component, s: (f64, f64)) -> f64 {
    match kind {
        Component::Cos => phase(k, s).cos(),
        Component::Sin => phase(k, s).sin(),
    }
}

/// Retained frequencies are those of a virtual `k1 x k2` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub k1: usize,
    pub k2: usize,
}

impl Truncation {
    pub fn new(k1: usize, k2: usize) -> Result<Self> {
        if k1 < 2 || k2 < 2 || !k1.is_multiple_of(2) || !k2.is_multiple_of(2) {
            return Err(Error::InvalidTruncation(format!(
                "({k1}, {k2}) must be even and at least 2"
            )));
        }
        Ok(Self { k1, k2 })
    }

    pub fn full(grid: &GridSpec) -> Self {
        Self {
            k1: grid.n1,
            k2: grid.n2,
        }
    }

    pub fn dim(&self) -> usize {
        self.k1 * self.k2
    }

    pub fn is_full(&self, grid: &GridSpec) -> bool {
        self.k1 == grid.n1 && self.k2 == grid.n2
    }

    pub fn fits(&self, grid: &GridSpec) -> bool {
        self.k1 <= grid.n1 && self.k2 <= grid.n2
    }

    pub fn check(&self, grid: &GridSpec) -> Result<()> {
        if self.fits(grid) {
            Ok(())
        } else {
            Err(Error::InvalidTruncation(format!(
                "({}, {}) exceeds grid {}x{}",
                self.k1, self.k2, grid.n1, grid.n2
            )))
        }
    }

    pub fn sets(&self) -> WavenumberSets {
        WavenumberSets::for_dims(self.k1, self.k2).expect("validated truncation")
    }

    /// Modes in coefficient order.
    pub fn modes(&self) -> Vec<Mode> {
        let sets = self.sets();
        let mut out = Vec::with_capacity(self.dim());
        out.extend(sets.k1_set.iter().map(|&k| Mode {
            k,
            component: Component::Cos,
            weight: 1.0,
        }));
        out.extend(sets.k2_set.iter().map(|&k| Mode {
            k,
            component: Component::Cos,
            weight: 2.0,
        }));
        out.extend(sets.k2_set.iter().map(|&k| Mode {
            k,
            component: Component::Sin,
            weight: 2.0,
        }));
        out
    }
}

/// One synthesis basis function, `weight * cos|sin(2 pi k.s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: Wavenumber,
    pub component: Component,
    pub weight: f64,
}

impl Mode {
    #[inline]
    pub fn eval(&self, s: (f64, f64)) -> f64 {
        self.weight * wave(self.k, self.component, s)
    }

    /// `(d/ds1, d/ds2)` of the basis function.
    #[inline]
    pub fn grad(&self, s: (f64, f64)) -> (f64, f64) {
        let th = phase(self.k, s);
        let d = match self.component {
            Component::Cos => -th.sin(),
            Component::Sin => th.cos(),
        };
        let c = 2.0 * PI * self.weight * d;
        (c * self.k.0 as f64, c * self.k.1 as f64)
    }

    #[inline]
    pub fn laplacian(&self, s: (f64, f64)) -> f64 {
        let kk = (self.k.0 * self.k.0 + self.k.1 * self.k.1) as f64;
        -4.0 * PI * PI * kk * self.eval(s)
    }

    /// Squared norm of the sampled basis vector on `grid`.
    pub fn grid_norm2(&self, grid: &GridSpec) -> f64 {
        let n = grid.len() as f64;
        let self_conj = (2 * self.k.0).rem_euclid(grid.n1 as i64) == 0
            && (2 * self.k.1).rem_euclid(grid.n2 as i64) == 0;
        let base = match (self.component, self_conj) {
            (Component::Cos, true) => n,
            (Component::Sin, true) => 0.0,
            _ => n / 2.0,
        };
        self.weight * self.weight * base
    }
}

/// Truncated real Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    pub truncation: Truncation,
    pub values: DVector<f64>,
}

impl SpectralCoeffs {
    pub fn zeros(truncation: Truncation) -> Self {
        Self {
            truncation,
            values: DVector::zeros(truncation.dim()),
        }
    }

    pub fn from_vec(truncation: Truncation, values: DVector<f64>) -> Result<Self> {
        if values.len() != truncation.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for truncation ({}, {})",
                values.len(),
                truncation.k1,
                truncation.k2
            )));
        }
        Ok(Self { truncation, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn n_k2(&self) -> usize {
        (self.truncation.dim() - 4) / 2
    }

    pub fn alpha_c_k1(&self) -> &[f64] {
        &self.values.as_slice()[..4]
    }

    pub fn alpha_c_k2(&self) -> &[f64] {
        &self.values.as_slice()[4..4 + self.n_k2()]
    }

    pub fn alpha_s_k2(&self) -> &[f64] {
        &self.values.as_slice()[4 + self.n_k2()..]
    }
}

/// Sampled basis for a grid and truncation.
#[derive(Debug, Clone)]
pub struct Basis {
    pub grid: GridSpec,
    pub truncation: Truncation,
    pub modes: Vec<Mode>,
    /// `N x q`, rows in row-major pixel order.
    pub matrix: DMatrix<f64>,
    /// Diagonal of the discrete Gram matrix.
    pub gram: DVector<f64>,
}

impl Basis {
    pub fn new(grid: &GridSpec, truncation: Truncation) -> Result<Self> {
        truncation.check(grid)?;
        let modes = truncation.modes();
        let matrix = DMatrix::from_fn(grid.len(), modes.len(), |p, c| {
            let s = grid.coord(p / grid.n2, p % grid.n2);
            modes[c].eval(s)
        });
        let gram = DVector::from_iterator(modes.len(), modes.iter().map(|m| m.grid_norm2(grid)));
        if gram.iter().any(|&g| g <= 0.0) {
            return Err(Error::Internal("singular basis Gram matrix".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            truncation,
            modes,
            matrix,
            gram,
        })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// Least-squares projection of a complete field.
    pub fn analyze(&self, field: &Field) -> Result<SpectralCoeffs> {
        check_complete(field, &self.grid)?;
        let f = DVector::from_vec(field.to_row_major());
        let mut a = self.matrix.tr_mul(&f);
        a.component_div_assign(&self.gram);
        SpectralCoeffs::from_vec(self.truncation, a)
    }

    pub fn synthesize(&self, coeffs: &SpectralCoeffs) -> Result<Field> {
        if coeffs.truncation != self.truncation {
            return Err(Error::DimensionMismatch(
                "coefficients and basis use different truncations".into(),
            ));
        }
        Ok(self.synthesize_vec(&coeffs.values))
    }

    pub(crate) fn synthesize_vec(&self, a: &DVector<f64>) -> Field {
        let v = &self.matrix * a;
        Field::from_row_major(self.grid.n1, self.grid.n2, v.as_slice())
    }
}

fn check_complete(field: &Field, grid: &GridSpec) -> Result<()> {
    if field.shape() != (grid.n1, grid.n2) {
        return Err(Error::DimensionMismatch(format!(
            "field {:?} on grid {}x{}",
            field.shape(),
            grid.n1,
            grid.n2
        )));
    }
    match field.missing_count() {
        0 => Ok(()),
        n => Err(Error::MissingEntries(n)),
    }
}

/// Project a complete field onto the retained basis.
///
/// Untruncated transforms go through the FFT; truncated ones through the
/// sampled basis.
pub fn analyze(field: &Field, truncation: Truncation) -> Result<SpectralCoeffs> {
    let (n1, n2) = field.shape();
    let grid = GridSpec::new(n1, n2)?;
    truncation.check(&grid)?;
    if truncation.is_full(&grid) {
        analyze_fft(field, truncation)
    } else {
        Basis::new(&grid, truncation)?.analyze(field)
    }
}

/// FFT route of the projection, valid for any truncation.
pub fn analyze_fft(field: &Field, truncation: Truncation) -> Result<SpectralCoeffs> {
    let (n1, n2) = field.shape();
    let grid = GridSpec::new(n1, n2)?;
    truncation.check(&grid)?;
    check_complete(field, &grid)?;
    let mut data: Vec<Complex64> = field
        .to_row_major()
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    fft2(&mut data, n1, n2, false);
    let at = |k: Wavenumber| {
        let i = k.0.rem_euclid(n1 as i64) as usize;
        let j = k.1.rem_euclid(n2 as i64) as usize;
        data[i * n2 + j]
    };
    let values = truncation.modes().into_iter().map(|m| {
        // <f, w cos> = w Re X(k), <f, w sin> = -w Im X(k)
        let x = at(m.k);
        let inner = match m.component {
            Component::Cos => m.weight * x.re,
            Component::Sin => -m.weight * x.im,
        };
        inner / m.grid_norm2(&grid)
    });
    SpectralCoeffs::from_vec(truncation, DVector::from_iterator(truncation.dim(), values))
}

/// Evaluate the truncated expansion on the grid.
pub fn synthesize(coeffs: &SpectralCoeffs, grid: &GridSpec) -> Result<Field> {
    coeffs.truncation.check(grid)?;
    if coeffs.len() != coeffs.truncation.dim() {
        return Err(Error::DimensionMismatch("coefficient length".into()));
    }
    if coeffs.truncation.is_full(grid) {
        Ok(synthesize_fft(coeffs, grid))
    } else {
        Basis::new(grid, coeffs.truncation)?.synthesize(coeffs)
    }
}

pub(crate) fn synthesize_fft(coeffs: &SpectralCoeffs, grid: &GridSpec) -> Field {
    let (n1, n2) = (grid.n1, grid.n2);
    let n = grid.len() as f64;
    let mut data = vec![Complex64::new(0.0, 0.0); n1 * n2];
    let idx = |k: Wavenumber| {
        k.0.rem_euclid(n1 as i64) as usize * n2 + k.1.rem_euclid(n2 as i64) as usize
    };
    for (m, &a) in coeffs.truncation.modes().iter().zip(coeffs.values.iter()) {
        // w cos = (w/2)(e^{+} + e^{-}),  w sin = (w/2i)(e^{+} - e^{-})
        let half = 0.5 * m.weight * a * n;
        let (plus, minus) = match m.component {
            Component::Cos => (Complex64::new(half, 0.0), Complex64::new(half, 0.0)),
            Component::Sin => (Complex64::new(0.0, -half), Complex64::new(0.0, half)),
        };
        data[idx(m.k)] += plus;
        data[idx((-m.k.0, -m.k.1))] += minus;
    }
    fft2(&mut data, n1, n2, true);
    let vals: Vec<f64> = data.iter().map(|c| c.re / n).collect();
    Field::from_row_major(n1, n2, &vals)
}

/// Keep only the modes of a smaller virtual grid.
///
/// Coefficients are rescaled where a mode's synthesis weight changes (a pair
/// representative on the larger grid becoming self-conjugate on the smaller
/// one), so that truncating a projection equals projecting at the smaller
/// truncation.
pub fn truncate(coeffs: &SpectralCoeffs, k1: usize, k2: usize) -> Result<SpectralCoeffs> {
    let target = Truncation::new(k1, k2)?;
    let from = coeffs.truncation;
    if k1 > from.k1 || k2 > from.k2 {
        return Err(Error::InvalidTruncation(format!(
            "cannot grow ({}, {}) to ({k1}, {k2})",
            from.k1, from.k2
        )));
    }
    let old = from.modes();
    let lookup = |m: &Mode| -> Option<f64> {
        for (o, &a) in old.iter().zip(coeffs.values.iter()) {
            if o.component != m.component {
                continue;
            }
            if o.k == m.k {
                return Some(a * o.weight / m.weight);
            }
            if o.k == (-m.k.0, -m.k.1) {
                let sign = if m.component == Component::Sin { -1.0 } else { 1.0 };
                return Some(sign * a * o.weight / m.weight);
            }
        }
        None
    };
    let mut values = Vec::with_capacity(target.dim());
    for m in target.modes() {
        values.push(lookup(&m).ok_or_else(|| {
            Error::Internal(format!("mode {:?} missing from source truncation", m.k))
        })?);
    }
    SpectralCoeffs::from_vec(target, DVector::from_vec(values))
}

/// In-place 2-D FFT of row-major data. The inverse is unnormalized.
pub(crate) fn fft2(data: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = |planner: &mut FftPlanner<f64>, n: usize| -> Arc<dyn rustfft::Fft<f64>> {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    let rows = plan(&mut planner, n2);
    for row in data.chunks_exact_mut(n2) {
        rows.process(row);
    }
    let cols = plan(&mut planner, n1);
    let mut col = vec![Complex64::new(0.0, 0.0); n1];
    for j in 0..n2 {
        for i in 0..n1 {
            col[i] = data[i * n2 + j];
        }
        cols.process(&mut col);
        for i in 0..n1 {
            data[i * n2 + j] = col[i];
        }
    }
}
