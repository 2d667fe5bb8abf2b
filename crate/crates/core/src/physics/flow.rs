//! Velocity and diffusivity fields, Horn–Schunck optical flow and the
//! Smagorinsky-type diffusivity closure.

use log::{debug, info};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Velocity (grid fraction per step) and diffusivity (grid fraction squared
/// per step) on the grid. `vx` runs along the first coordinate (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFields {
    pub vx: DMatrix<f64>,
    pub vy: DMatrix<f64>,
    pub diffusivity: DMatrix<f64>,
    pub time_tag: Option<String>,
}

impl FlowFields {
    pub fn zero(grid: &GridSpec) -> Self {
        Self::uniform(grid, 0.0, 0.0, 0.0)
    }

    pub fn uniform(grid: &GridSpec, vx: f64, vy: f64, diffusivity: f64) -> Self {
        Self {
            vx: DMatrix::from_element(grid.n1, grid.n2, vx),
            vy: DMatrix::from_element(grid.n1, grid.n2, vy),
            diffusivity: DMatrix::from_element(grid.n1, grid.n2, diffusivity),
            time_tag: None,
        }
    }

    /// Constant flow of magnitude `speed` at `direction_deg` measured from the
    /// first axis towards the second.
    pub fn from_speed_direction(
        grid: &GridSpec,
        speed: f64,
        direction_deg: f64,
        diffusivity: f64,
    ) -> Self {
        let th = direction_deg.to_radians();
        Self::uniform(grid, speed * th.cos(), speed * th.sin(), diffusivity)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.vx.shape()
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let want = (grid.n1, grid.n2);
        if self.vx.shape() != want || self.vy.shape() != want || self.diffusivity.shape() != want
        {
            return Err(Error::DimensionMismatch(format!(
                "flow fields do not match grid {}x{}",
                grid.n1, grid.n2
            )));
        }
        if self.diffusivity.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::InvalidArgument(
                "diffusivity must be finite and non-negative".into(),
            ));
        }
        if self.vx.iter().chain(self.vy.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite velocity".into()));
        }
        Ok(())
    }

    /// True when velocity and diffusivity are spatially constant.
    pub fn is_uniform(&self) -> bool {
        let flat = |m: &DMatrix<f64>| m.iter().all(|&v| v == m[(0, 0)]);
        flat(&self.vx) && flat(&self.vy) && flat(&self.diffusivity)
    }

    /// Mean speed and direction (degrees).
    pub fn mean_speed_direction(&self) -> (f64, f64) {
        let (mx, my) = (self.vx.mean(), self.vy.mean());
        (mx.hypot(my), my.atan2(mx).to_degrees())
    }

    /// Pointwise speed in km/h given the grid geometry and frame cadence.
    pub fn speed_kmh(&self, grid: &GridSpec, cadence_minutes: f64) -> DMatrix<f64> {
        let (km1, km2) = grid.cell_km();
        let hours = cadence_minutes / 60.0;
        DMatrix::from_fn(grid.n1, grid.n2, |i, j| {
            let a = self.vx[(i, j)] * grid.n1 as f64 * km1;
            let b = self.vy[(i, j)] * grid.n2 as f64 * km2;
            a.hypot(b) / hours
        })
    }

    /// Diffusivity in km^2/h.
    pub fn diffusivity_km2h(&self, grid: &GridSpec, cadence_minutes: f64) -> DMatrix<f64> {
        let (km1, km2) = grid.cell_km();
        let area = grid.n1 as f64 * km1 * grid.n2 as f64 * km2;
        let hours = cadence_minutes / 60.0;
        self.diffusivity.map(|d| d * area / hours)
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Periodic central difference along the given axis, in units of the unit
/// square (spacing `1/n`).
pub(crate) fn central_diff(m: &DMatrix<f64>, axis: usize) -> DMatrix<f64> {
    let (n1, n2) = m.shape();
    DMatrix::from_fn(n1, n2, |i, j| {
        let (i, j) = (i as isize, j as isize);
        if axis == 0 {
            (m[(wrap(i + 1, n1), j as usize)] - m[(wrap(i - 1, n1), j as usize)]) * n1 as f64 / 2.0
        } else {
            (m[(i as usize, wrap(j + 1, n2))] - m[(i as usize, wrap(j - 1, n2))]) * n2 as f64 / 2.0
        }
    })
}

/// Five-point periodic Laplacian in unit-square units.
pub(crate) fn laplacian(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2) = m.shape();
    let (h1, h2) = ((n1 * n1) as f64, (n2 * n2) as f64);
    DMatrix::from_fn(n1, n2, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        let c = m[(i, j)];
        (m[(wrap(ii + 1, n1), j)] - 2.0 * c + m[(wrap(ii - 1, n1), j)]) * h1
            + (m[(i, wrap(jj + 1, n2))] - 2.0 * c + m[(i, wrap(jj - 1, n2))]) * h2
    })
}

/// `D = c * dx * dy * sqrt((dvx/dsx - dvy/dsy)^2 + (dvx/dsy + dvy/dsx)^2)`
/// with `c = 0.28` and periodic central differences.
pub fn derive_diffusivity(flow: &FlowFields, dx: f64, dy: f64) -> Field {
    const SMAGORINSKY: f64 = 0.28;
    let dvx_dx = central_diff(&flow.vx, 0);
    let dvx_dy = central_diff(&flow.vx, 1);
    let dvy_dx = central_diff(&flow.vy, 0);
    let dvy_dy = central_diff(&flow.vy, 1);
    let (n1, n2) = flow.shape();
    Field::new(DMatrix::from_fn(n1, n2, |i, j| {
        let tension = dvx_dx[(i, j)] - dvy_dy[(i, j)];
        let shear = dvx_dy[(i, j)] + dvy_dx[(i, j)];
        SMAGORINSKY * dx * dy * tension.hypot(shear)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalFlowParams {
    /// Smoothness weight (squared intensity units).
    pub smoothness: f64,
    pub iterations: usize,
}

impl Default for OpticalFlowParams {
    fn default() -> Self {
        Self {
            smoothness: 100.0,
            iterations: 200,
        }
    }
}

/// Horn–Schunck flow for one frame pair, in cells per frame along
/// (rows, cols). Pixels missing in either frame (or with a missing
/// neighbour) carry no data term.
fn horn_schunck_pair(a: &Field, b: &Field, params: &OpticalFlowParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n1, n2) = a.shape();
    let fa = a.filled(a.observed_mean().unwrap_or(0.0)).values;
    let fb = b.filled(b.observed_mean().unwrap_or(0.0)).values;
    let avg = (&fa + &fb) * 0.5;
    // gradients in cells
    let ix = central_diff(&avg, 0) / n1 as f64;
    let iy = central_diff(&avg, 1) / n2 as f64;
    let it = &fb - &fa;
    let seen = |i: usize, j: usize| a.is_observed(i, j) && b.is_observed(i, j);
    let weight = DMatrix::from_fn(n1, n2, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        let ok = seen(i, j)
            && seen(wrap(ii + 1, n1), j)
            && seen(wrap(ii - 1, n1), j)
            && seen(i, wrap(jj + 1, n2))
            && seen(i, wrap(jj - 1, n2));
        if ok {
            1.0
        } else {
            0.0
        }
    });

    let mut u = DMatrix::<f64>::zeros(n1, n2);
    let mut v = DMatrix::<f64>::zeros(n1, n2);
    for _ in 0..params.iterations {
        let ub = neighbour_mean(&u);
        let vb = neighbour_mean(&v);
        for i in 0..n1 {
            for j in 0..n2 {
                let w = weight[(i, j)];
                let (gx, gy, gt) = (ix[(i, j)], iy[(i, j)], it[(i, j)]);
                let r = w * (gx * ub[(i, j)] + gy * vb[(i, j)] + gt)
                    / (params.smoothness + w * (gx * gx + gy * gy));
                u[(i, j)] = ub[(i, j)] - gx * r;
                v[(i, j)] = vb[(i, j)] - gy * r;
            }
        }
    }
    (u, v)
}

/// Horn–Schunck weighted neighbourhood average (1/6 edges, 1/12 corners).
fn neighbour_mean(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2) = m.shape();
    DMatrix::from_fn(n1, n2, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        let at = |di: isize, dj: isize| m[(wrap(ii + di, n1), wrap(jj + dj, n2))];
        (at(1, 0) + at(-1, 0) + at(0, 1) + at(0, -1)) / 6.0
            + (at(1, 1) + at(1, -1) + at(-1, 1) + at(-1, -1)) / 12.0
    })
}

/// Dense velocity averaged over consecutive frame pairs, converted to grid
/// fraction per step. Diffusivity is left at zero; see [`derive_diffusivity`].
pub fn estimate_optical_flow(frames: &[Field], params: &OpticalFlowParams) -> Result<FlowFields> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "optical flow needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let (n1, n2) = frames[0].shape();
    if frames.iter().any(|f| f.shape() != (n1, n2)) {
        return Err(Error::DimensionMismatch("frames differ in shape".into()));
    }
    let mut su = DMatrix::<f64>::zeros(n1, n2);
    let mut sv = DMatrix::<f64>::zeros(n1, n2);
    for pair in frames.windows(2) {
        let (u, v) = horn_schunck_pair(&pair[0], &pair[1], params);
        su += u;
        sv += v;
    }
    let pairs = (frames.len() - 1) as f64;
    let vx = su / (pairs * n1 as f64);
    let vy = sv / (pairs * n2 as f64);
    debug!(
        "optical flow: {} pairs, max |v| = {:.4e} grid/step",
        frames.len() - 1,
        vx.amax().max(vy.amax())
    );
    Ok(FlowFields {
        vx,
        vy,
        diffusivity: DMatrix::zeros(n1, n2),
        time_tag: None,
    })
}

/// Optical flow followed by the diffusivity closure at grid resolution.
pub fn estimate_flow_with_diffusivity(
    frames: &[Field],
    params: &OpticalFlowParams,
) -> Result<FlowFields> {
    let mut flow = estimate_optical_flow(frames, params)?;
    let (n1, n2) = flow.shape();
    flow.diffusivity = derive_diffusivity(&flow, 1.0 / n1 as f64, 1.0 / n2 as f64).values;
    let (speed, dir) = flow.mean_speed_direction();
    info!(
        "estimated flow: mean speed {speed:.4e} grid/step at {dir:.1} deg, max D {:.3e}",
        flow.diffusivity.max()
    );
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn bump(grid: &GridSpec, c: (f64, f64), sigma_cells: f64, amp: f64) -> Field {
        Field::new(DMatrix::from_fn(grid.n1, grid.n2, |i, j| {
            let d1 = i as f64 - c.0;
            let d2 = j as f64 - c.1;
            amp * (-(d1 * d1 + d2 * d2) / (2.0 * sigma_cells * sigma_cells)).exp()
        }))
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let g = GridSpec::new(16, 16).unwrap();
        let f = bump(&g, (8.0, 8.0), 2.5, 50.0);
        let flow = estimate_optical_flow(&[f.clone(), f.clone(), f], &Default::default()).unwrap();
        assert!(flow.vx.iter().chain(flow.vy.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn needs_two_frames() {
        let g = GridSpec::new(4, 4).unwrap();
        assert!(estimate_optical_flow(&[Field::zeros(&g)], &Default::default()).is_err());
    }

    #[test]
    fn constant_frames_give_zero_flow() {
        let g = GridSpec::new(8, 8).unwrap();
        let a = Field::from_fn(&g, |_, _| 1.0);
        let b = Field::from_fn(&g, |_, _| 1.0);
        let flow = estimate_optical_flow(&[a, b], &Default::default()).unwrap();
        assert_eq!(flow.vx.amax(), 0.0);
    }

    #[test]
    fn recovers_translating_bump() {
        let g = GridSpec::new(32, 32).unwrap();
        let amp = 100.0;
        let frames: Vec<Field> = (0..4)
            .map(|t| bump(&g, (12.0 + t as f64, 16.0), 3.0, amp))
            .collect();
        let flow = estimate_optical_flow(&frames, &Default::default()).unwrap();
        let mid = bump(&g, (13.5, 16.0), 3.0, amp);
        let mut checked = 0;
        for i in 0..32 {
            for j in 0..32 {
                if mid.values[(i, j)] >= amp / 2.0 {
                    let u = flow.vx[(i, j)] * 32.0;
                    let v = flow.vy[(i, j)] * 32.0;
                    assert!((u - 1.0).abs() <= 0.2 && v.abs() <= 0.2, "({i},{j}): {u} {v}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn missing_pixels_carry_no_data_term() {
        let g = GridSpec::new(8, 8).unwrap();
        let a = bump(&g, (3.0, 3.0), 1.5, 50.0);
        let mut mask = DMatrix::from_element(8, 8, true);
        for i in 0..8 {
            for j in 0..8 {
                mask[(i, j)] = false;
            }
        }
        let b = Field::with_mask(bump(&g, (4.0, 3.0), 1.5, 50.0).values, mask).unwrap();
        let flow = estimate_optical_flow(&[a, b], &Default::default()).unwrap();
        assert_eq!(flow.vx.amax(), 0.0);
    }

    #[test]
    fn uniform_flow_has_zero_diffusivity() {
        let g = GridSpec::new(10, 10).unwrap();
        let flow = FlowFields::uniform(&g, 0.3, -0.2, 0.0);
        let d = derive_diffusivity(&flow, 0.1, 0.1);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_shear_diffusivity() {
        let g = GridSpec::new(16, 16).unwrap();
        let a = 0.4;
        let mut flow = FlowFields::zero(&g);
        flow.vx = DMatrix::from_fn(16, 16, |_, j| a * j as f64 / 16.0);
        let (dx, dy) = (1.0 / 16.0, 1.0 / 16.0);
        let d = derive_diffusivity(&flow, dx, dy);
        // the periodic wrap breaks the linear profile at the first and last column
        for i in 0..16 {
            for j in 1..15 {
                assert_abs_diff_eq!(d.values[(i, j)], 0.28 * dx * dy * a, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn periodic_shear_is_non_negative() {
        let g = GridSpec::new(12, 12).unwrap();
        let mut flow = FlowFields::zero(&g);
        flow.vx = DMatrix::from_fn(12, 12, |i, j| (2.0 * PI * (i as f64 + 2.0 * j as f64) / 12.0).sin());
        flow.vy = DMatrix::from_fn(12, 12, |i, _| (2.0 * PI * i as f64 / 12.0).cos());
        let d = derive_diffusivity(&flow, 0.1, 0.1);
        assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn unit_conversion() {
        let g = GridSpec::with_geo(60, 60, 36.0, -123.0, 0.04, 0.04).unwrap();
        let flow = FlowFields::uniform(&g, 0.01, 0.0, 0.0);
        let kmh = flow.speed_kmh(&g, 5.0);
        // 0.6 cells of 4.45 km per 5 minutes
        assert_abs_diff_eq!(kmh[(0, 0)], 0.6 * 0.04 * 111.32 * 12.0, epsilon = 1e-9);
    }
}
