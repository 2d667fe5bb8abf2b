//! Per-step observations with cached normal-equation statistics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fusion::FusedObservation;

/// One source's observed pixels at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBlock {
    pub source: usize,
    /// Rows of the design matrix that were observed.
    pub pixels: Vec<usize>,
    pub y: DVector<f64>,
    pub ftf: DMatrix<f64>,
    pub fty: DVector<f64>,
    pub yty: f64,
}

impl SourceBlock {
    pub fn new(design: &DMatrix<f64>, source: usize, pixels: Vec<usize>, y: DVector<f64>) -> Result<Self> {
        if pixels.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels but {} values",
                pixels.len(),
                y.len()
            )));
        }
        if let Some(&p) = pixels.iter().find(|&&p| p >= design.nrows()) {
            return Err(Error::DimensionMismatch(format!("pixel {p} outside design")));
        }
        let f = design.select_rows(pixels.iter());
        Ok(Self {
            source,
            ftf: f.tr_mul(&f),
            fty: f.tr_mul(&y),
            yty: y.dot(&y),
            pixels,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `||y - F alpha||^2` from the cached statistics.
    pub fn residual_ss(&self, alpha: &DVector<f64>) -> f64 {
        let v = self.yty - 2.0 * alpha.dot(&self.fty) + alpha.dot(&(&self.ftf * alpha));
        v.max(0.0)
    }
}

/// Observations at steps `1..=T`. Each observed value is a row of `design`
/// applied to the first `design.ncols()` state entries; remaining state
/// entries are unobserved.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub design: DMatrix<f64>,
    pub source_ids: Vec<String>,
    pub steps: Vec<Vec<SourceBlock>>,
}

impl ObservationSeries {
    pub fn new(design: DMatrix<f64>, source_ids: Vec<String>) -> Self {
        Self {
            design,
            source_ids,
            steps: Vec::new(),
        }
    }

    /// Append a step given `(source index, pixels, values)` triples.
    pub fn push_step(&mut self, blocks: Vec<(usize, Vec<usize>, DVector<f64>)>) -> Result<()> {
        let mut out = Vec::with_capacity(blocks.len());
        for (s, pixels, y) in blocks {
            if s >= self.source_ids.len() {
                return Err(Error::InvalidArgument(format!("unknown source index {s}")));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite observation".into()));
            }
            if !pixels.is_empty() {
                out.push(SourceBlock::new(&self.design, s, pixels, y)?);
            }
        }
        self.steps.push(out);
        Ok(())
    }

    /// Series from fused frames with the basis matrix as design.
    pub fn from_fused(basis_matrix: &DMatrix<f64>, fused: &[FusedObservation], source_ids: &[String]) -> Result<Self> {
        let mut series = Self::new(basis_matrix.clone(), source_ids.to_vec());
        for obs in fused {
            let mut blocks = Vec::new();
            for src in &obs.sources {
                let s = source_ids
                    .iter()
                    .position(|id| *id == src.source_id)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown source {}", src.source_id)))?;
                let y = obs.y.rows(src.range.start, src.range.len()).into_owned();
                blocks.push((s, src.pixels.clone(), y));
            }
            series.push_step(blocks)?;
        }
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_sources(&self) -> usize {
        self.source_ids.len()
    }

    /// Number of observed state entries.
    pub fn loaded_dim(&self) -> usize {
        self.design.ncols()
    }

    /// Observation count at step `t` (0-based).
    pub fn step_len(&self, t: usize) -> usize {
        self.steps[t].iter().map(SourceBlock::len).sum()
    }

    pub fn total_observed(&self) -> usize {
        (0..self.len()).map(|t| self.step_len(t)).sum()
    }

    pub fn observed_per_source(&self) -> Vec<usize> {
        let mut n = vec![0; self.n_sources()];
        for b in self.steps.iter().flatten() {
            n[b.source] += b.len();
        }
        n
    }

    /// Dense `F_t` with `state_dim` columns, stacked `y_t` and the diagonal
    /// of `V_t` for the given source variances.
    pub fn dense_step(&self, t: usize, state_dim: usize, sigma2: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let p = self.step_len(t);
        let q = self.loaded_dim();
        let mut f = DMatrix::zeros(p, state_dim);
        let mut y = DVector::zeros(p);
        let mut v = DVector::zeros(p);
        let mut r = 0;
        for b in &self.steps[t] {
            for (k, &px) in b.pixels.iter().enumerate() {
                f.view_mut((r, 0), (1, q)).copy_from(&self.design.row(px));
                y[r] = b.y[k];
                v[r] = sigma2[b.source];
                r += 1;
            }
        }
        (f, y, v)
    }

    /// `sum_m F_m' F_m / s_m` and `sum_m F_m' y_m / s_m` at step `t`.
    pub fn information(&self, t: usize, sigma2: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let q = self.loaded_dim();
        let mut h = DMatrix::zeros(q, q);
        let mut b = DVector::zeros(q);
        for blk in &self.steps[t] {
            let w = 1.0 / sigma2[blk.source];
            h += &blk.ftf * w;
            b += &blk.fty * w;
        }
        (h, b)
    }

    /// Per-source residual sums of squares for the loaded part of the
    /// states `theta_1..theta_T` (columns `1..=T` of `traj`).
    pub fn residual_ss(&self, traj: &DMatrix<f64>) -> Vec<f64> {
        let q = self.loaded_dim();
        let mut ss = vec![0.0; self.n_sources()];
        for (t, blocks) in self.steps.iter().enumerate() {
            let alpha = traj.view((0, t + 1), (q, 1)).column(0).into_owned();
            for b in blocks {
                ss[b.source] += b.residual_ss(&alpha);
            }
        }
        ss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cached_residual_matches_direct() {
        let design = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin());
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let blk = SourceBlock::new(&design, 0, vec![4, 1, 5], y.clone()).unwrap();
        let a = DVector::from_vec(vec![0.2, -0.7, 1.1]);
        let f = design.select_rows([4usize, 1, 5].iter());
        let direct = (&y - &f * &a).norm_squared();
        assert!((blk.residual_ss(&a) - direct).abs() < 1e-12);
    }

    #[test]
    fn dense_step_layout() {
        let design = DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64);
        let mut s = ObservationSeries::new(design, vec!["a".into(), "b".into()]);
        s.push_step(vec![
            (0, vec![1], DVector::from_vec(vec![5.0])),
            (1, vec![3, 0], DVector::from_vec(vec![6.0, 7.0])),
        ])
        .unwrap();
        s.push_step(vec![]).unwrap();
        let sig = DVector::from_vec(vec![0.5, 2.0]);
        let (f, y, v) = s.dense_step(0, 4, &sig);
        assert_eq!(f.row(1).iter().copied().collect::<Vec<_>>(), vec![6.0, 7.0, 0.0, 0.0]);
        assert_eq!(y.as_slice(), &[5.0, 6.0, 7.0]);
        assert_eq!(v.as_slice(), &[0.5, 2.0, 2.0]);
        assert_eq!(s.step_len(1), 0);
        assert_eq!(s.observed_per_source(), vec![1, 2]);
        let (h, b) = s.information(0, &sig);
        let fq = f.columns(0, 2).into_owned();
        let vinv = DMatrix::from_diagonal(&v.map(|x| 1.0 / x));
        assert!((h - fq.transpose() * &vinv * &fq).amax() < 1e-12);
        assert!((b - fq.transpose() * vinv * y).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_blocks() {
        let design = DMatrix::zeros(4, 2);
        let mut s = ObservationSeries::new(design, vec!["a".into()]);
        assert!(s.push_step(vec![(1, vec![0], DVector::zeros(1))]).is_err());
        assert!(s.push_step(vec![(0, vec![9], DVector::zeros(1))]).is_err());
        assert!(s.push_step(vec![(0, vec![0, 1], DVector::zeros(1))]).is_err());
    }
}
