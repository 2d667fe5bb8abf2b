//! Periodic grid on the unit square and gridded fields.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Uniform `n1 x n2` grid on the unit torus with geographic metadata.
///
/// Cell `(i, j)` sits at `s = (i / n1, j / n2)`. Rows run along the first
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub step_lat: f64,
    pub step_lon: f64,
}

impl GridSpec {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        Self::with_geo(n1, n2, 0.0, 0.0, 0.04, 0.04)
    }

    pub fn with_geo(
        n1: usize,
        n2: usize,
        origin_lat: f64,
        origin_lon: f64,
        step_lat: f64,
        step_lon: f64,
    ) -> Result<Self> {
        for (name, n) in [("n1", n1), ("n2", n2)] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be even and at least 2"
                )));
            }
        }
        Ok(Self {
            n1,
            n2,
            origin_lat,
            origin_lon,
            step_lat,
            step_lon,
        })
    }

    /// Number of cells `N = n1 * n2`.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 / self.n1 as f64, j as f64 / self.n2 as f64)
    }

    /// Row-major pixel index.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.n1 == other.n1 && self.n2 == other.n2
    }

    /// Cell size in kilometres along (rows, cols), from the degree steps.
    pub fn cell_km(&self) -> (f64, f64) {
        const KM_PER_DEG: f64 = 111.32;
        let lat_mid = self.origin_lat + 0.5 * self.step_lat * self.n1 as f64;
        (
            self.step_lat.abs() * KM_PER_DEG,
            self.step_lon.abs() * KM_PER_DEG * lat_mid.to_radians().cos(),
        )
    }
}

/// A gridded scalar field with an optional observation mask.
///
/// `observed[(i, j)] == false` marks a missing pixel; the stored value there
/// is NaN and must not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: DMatrix<f64>,
    pub observed: Option<DMatrix<bool>>,
}

impl Field {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self {
            values,
            observed: None,
        }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::new(DMatrix::zeros(grid.n1, grid.n2))
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(DMatrix::from_fn(grid.n1, grid.n2, |i, j| {
            let (s1, s2) = grid.coord(i, j);
            f(s1, s2)
        }))
    }

    /// Build a field from values and a mask; missing values are replaced by NaN.
    pub fn with_mask(mut values: DMatrix<f64>, observed: DMatrix<bool>) -> Result<Self> {
        if values.shape() != observed.shape() {
            return Err(Error::DimensionMismatch(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                observed.shape()
            )));
        }
        for (v, &o) in values.iter_mut().zip(observed.iter()) {
            if !o {
                *v = f64::NAN;
            }
        }
        let observed = if observed.iter().all(|&o| o) {
            None
        } else {
            Some(observed)
        };
        Ok(Self { values, observed })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed.as_ref().is_none_or(|m| m[(i, j)])
    }

    pub fn missing_count(&self) -> usize {
        self.observed
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&o| !o).count())
    }

    /// Values in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let (n1, n2) = self.shape();
        let mut out = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }

    pub fn from_row_major(n1: usize, n2: usize, data: &[f64]) -> Self {
        Self::new(DMatrix::from_row_slice(n1, n2, data))
    }

    /// Mean over observed pixels, or `None` when nothing is observed.
    pub fn observed_mean(&self) -> Option<f64> {
        let (n1, n2) = self.shape();
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n1 {
            for j in 0..n2 {
                if self.is_observed(i, j) {
                    sum += self.values[(i, j)];
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    /// Copy with missing pixels replaced by `fill` and the mask dropped.
    pub fn filled(&self, fill: f64) -> Field {
        let (n1, n2) = self.shape();
        Field::new(DMatrix::from_fn(n1, n2, |i, j| {
            if self.is_observed(i, j) {
                self.values[(i, j)]
            } else {
                fill
            }
        }))
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }
}
