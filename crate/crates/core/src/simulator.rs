//! Finite-difference advection–diffusion solver and synthetic multi-source
//! datasets.
//!
//! Advection is first-order upwind, diffusion is the conservative
//! central-difference flux form, both explicit on the periodic grid. The
//! solver can run on a grid refined by an integer factor and sample the
//! coarse cells, which keeps its numerical diffusion well below the signal.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use log::debug;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fusion::fgrid::{format_timestamp, write_frame, ObservationFrame};
use crate::fusion::SourceStream;
use crate::grid::{Field, GridSpec};
use crate::physics::FlowFields;

/// Sum of isotropic Gaussian bumps `A / (2 pi s^2) exp(-|c - s|^2 / (2 s^2))`,
/// periodized over the unit torus so the field is smooth across the wrap.
pub fn gaussian_bumps(centers: &[(f64, f64)], sigma: f64, amplitude: f64, grid: &GridSpec) -> Result<Field> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("bump scale {sigma} must be positive")));
    }
    let peak = amplitude / (2.0 * std::f64::consts::PI * sigma * sigma);
    // images beyond 6 sigma contribute below exp(-18)
    let reach = (6.0 * sigma).ceil().max(1.0) as i64;
    Ok(Field::from_fn(grid, |s1, s2| {
        let mut v = 0.0;
        for &(c1, c2) in centers {
            let (d1, d2) = (torus_delta(c1 - s1), torus_delta(c2 - s2));
            for a in -reach..=reach {
                for b in -reach..=reach {
                    let (e1, e2) = (d1 + a as f64, d2 + b as f64);
                    v += peak * (-(e1 * e1 + e2 * e2) / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        v
    }))
}

fn torus_delta(d: f64) -> f64 {
    d - d.round()
}

/// Advance `field` by `dt` in `substeps` explicit steps. The substep count is
/// raised when it would violate the stability limit.
pub fn step_pde(field: &Field, flow: &FlowFields, dt: f64, substeps: usize) -> Result<Field> {
    let (n1, n2) = field.shape();
    if flow.shape() != (n1, n2) {
        return Err(Error::DimensionMismatch("flow and field shapes differ".into()));
    }
    let needed = stable_substeps(flow, dt, n1, n2);
    let substeps = if substeps < needed {
        debug!("raising substeps from {substeps} to {needed} for stability");
        needed
    } else {
        substeps.max(1)
    };
    let h = dt / substeps as f64;
    let limit = 10.0 * field.values.amax().max(1e-300);
    let mut cur = field.values.clone();
    let mut next = cur.clone();
    for _ in 0..substeps {
        euler_step(&cur, &mut next, flow, h);
        std::mem::swap(&mut cur, &mut next);
    }
    if cur.iter().any(|v| !v.is_finite()) || cur.amax() > limit {
        return Err(Error::Unstable(format!(
            "max |field| grew to {:.3e} (limit {limit:.3e})",
            cur.amax()
        )));
    }
    Ok(Field::new(cur))
}

fn stable_substeps(flow: &FlowFields, dt: f64, n1: usize, n2: usize) -> usize {
    let (i1, i2) = (n1 as f64, n2 as f64);
    let adv = flow
        .vx
        .iter()
        .zip(flow.vy.iter())
        .map(|(a, b)| a.abs() * i1 + b.abs() * i2)
        .fold(0.0, f64::max);
    let diff = 2.0 * flow.diffusivity.max() * (i1 * i1 + i2 * i2);
    ((dt * (adv + diff)) / 0.9).ceil().max(1.0) as usize
}

fn euler_step(cur: &DMatrix<f64>, next: &mut DMatrix<f64>, flow: &FlowFields, h: f64) {
    let (n1, n2) = cur.shape();
    let (i1, i2) = (n1 as f64, n2 as f64);
    let up = |i: usize, n: usize| if i + 1 == n { 0 } else { i + 1 };
    let dn = |i: usize, n: usize| if i == 0 { n - 1 } else { i - 1 };
    let d = &flow.diffusivity;
    for j in 0..n2 {
        let (jp, jm) = (up(j, n2), dn(j, n2));
        for i in 0..n1 {
            let (ip, im) = (up(i, n1), dn(i, n1));
            let c = cur[(i, j)];
            let vx = flow.vx[(i, j)];
            let vy = flow.vy[(i, j)];
            let dfx = if vx > 0.0 { c - cur[(im, j)] } else { cur[(ip, j)] - c } * i1;
            let dfy = if vy > 0.0 { c - cur[(i, jm)] } else { cur[(i, jp)] - c } * i2;
            let dc = d[(i, j)];
            let diff = (0.5 * (dc + d[(ip, j)]) * (cur[(ip, j)] - c)
                - 0.5 * (dc + d[(im, j)]) * (c - cur[(im, j)]))
                * i1
                * i1
                + (0.5 * (dc + d[(i, jp)]) * (cur[(i, jp)] - c)
                    - 0.5 * (dc + d[(i, jm)]) * (c - cur[(i, jm)]))
                    * i2
                    * i2;
            next[(i, j)] = c + h * (-vx * dfx - vy * dfy + diff);
        }
    }
}

/// Velocity specification for a simulation.
#[derive(Debug, Clone)]
pub enum FlowSpec {
    /// Constant velocity of `speed` grid fractions per step at `direction_deg`.
    Uniform { speed: f64, direction_deg: f64 },
    /// Velocity and diffusivity as functions of position.
    Analytic(fn(f64, f64) -> (f64, f64, f64)),
    /// Fields on the output grid, bilinearly interpolated onto the solver grid.
    Fields(FlowFields),
}

impl FlowSpec {
    /// Flow sampled on `grid` (diffusivity added for the uniform case).
    pub fn on_grid(&self, grid: &GridSpec, diffusivity: f64) -> FlowFields {
        match self {
            FlowSpec::Uniform { speed, direction_deg } => {
                FlowFields::from_speed_direction(grid, *speed, *direction_deg, diffusivity)
            }
            FlowSpec::Analytic(f) => {
                let mut out = FlowFields::zero(grid);
                for i in 0..grid.n1 {
                    for j in 0..grid.n2 {
                        let (a, b) = grid.coord(i, j);
                        let (vx, vy, d) = f(a, b);
                        out.vx[(i, j)] = vx;
                        out.vy[(i, j)] = vy;
                        out.diffusivity[(i, j)] = d;
                    }
                }
                out
            }
            FlowSpec::Fields(fl) => {
                let (m1, m2) = fl.shape();
                let interp = |m: &DMatrix<f64>, s1: f64, s2: f64| {
                    let (x, y) = (s1 * m1 as f64, s2 * m2 as f64);
                    let (i0, j0) = (x.floor() as usize % m1, y.floor() as usize % m2);
                    let (i1, j1) = ((i0 + 1) % m1, (j0 + 1) % m2);
                    let (fx, fy) = (x - x.floor(), y - y.floor());
                    m[(i0, j0)] * (1.0 - fx) * (1.0 - fy)
                        + m[(i1, j0)] * fx * (1.0 - fy)
                        + m[(i0, j1)] * (1.0 - fx) * fy
                        + m[(i1, j1)] * fx * fy
                };
                let mut out = FlowFields::zero(grid);
                for i in 0..grid.n1 {
                    for j in 0..grid.n2 {
                        let (a, b) = grid.coord(i, j);
                        out.vx[(i, j)] = interp(&fl.vx, a, b);
                        out.vy[(i, j)] = interp(&fl.vy, a, b);
                        out.diffusivity[(i, j)] = interp(&fl.diffusivity, a, b);
                    }
                }
                out
            }
        }
    }
}

/// Rectangle of cells `[r0, r1) x [c0, c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl Region {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.r0..self.r1).contains(&i) && (self.c0..self.c1).contains(&j)
    }
}

/// One synthetic observation stream: truth plus bias, noise and gaps.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub id: String,
    pub noise_sd: f64,
    pub bias: f64,
    pub missing_rate: f64,
    pub missing_region: Option<Region>,
}

impl SourceSpec {
    pub fn clean(id: &str, noise_sd: f64) -> Self {
        Self {
            id: id.to_string(),
            noise_sd,
            bias: 0.0,
            missing_rate: 0.0,
            missing_region: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub centers: Vec<(f64, f64)>,
    pub bump_sigma: f64,
    pub bump_amplitude: f64,
    pub flow: FlowSpec,
    pub diffusivity: f64,
    pub frames: usize,
    pub seed: u64,
    pub sources: Vec<SourceSpec>,
    /// Solver grid refinement factor.
    pub refine: usize,
    pub start: DateTime<Utc>,
    pub cadence_secs: i64,
}

impl SimConfig {
    /// The 20x20, 30-frame translating-bump benchmark.
    pub fn table1(seed: u64) -> Self {
        Self {
            grid: GridSpec::with_geo(20, 20, 0.0, 0.0, 0.05, 0.05).expect("valid grid"),
            centers: vec![(0.1, 0.1), (0.1, 0.2), (0.2, 0.1), (0.2, 0.2)],
            bump_sigma: 0.25,
            bump_amplitude: 3.0,
            flow: FlowSpec::Uniform {
                speed: 0.015,
                direction_deg: 45.0,
            },
            diffusivity: 0.0,
            frames: 30,
            seed,
            sources: vec![SourceSpec::clean("sim", 0.1)],
            refine: 8,
            start: DateTime::parse_from_rfc3339("2020-09-27T00:00:00Z")
                .expect("valid time")
                .with_timezone(&Utc),
            cadence_secs: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidArgument("frame count must be at least 1".into()));
        }
        if self.refine == 0 {
            return Err(Error::InvalidArgument("refine must be at least 1".into()));
        }
        if let FlowSpec::Uniform { speed, .. } = self.flow {
            if speed < 0.0 {
                return Err(Error::InvalidArgument("speed must be non-negative".into()));
            }
        }
        if self.diffusivity < 0.0 {
            return Err(Error::InvalidArgument("diffusivity must be non-negative".into()));
        }
        for s in &self.sources {
            if s.noise_sd < 0.0 || !(0.0..=1.0).contains(&s.missing_rate) {
                return Err(Error::InvalidArgument(format!("bad source spec {}", s.id)));
            }
        }
        Ok(())
    }

    pub fn time(&self, t: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.cadence_secs * t as i64)
    }

    /// `key=value` echo of the configuration.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid={}x{}", self.grid.n1, self.grid.n2);
        let _ = writeln!(s, "origin={} {}", self.grid.origin_lat, self.grid.origin_lon);
        let _ = writeln!(s, "step={} {}", self.grid.step_lat, self.grid.step_lon);
        let c: Vec<String> = self.centers.iter().map(|(a, b)| format!("({a},{b})")).collect();
        let _ = writeln!(s, "centers={}", c.join(","));
        let _ = writeln!(s, "bump_sigma={}", self.bump_sigma);
        let _ = writeln!(s, "bump_amplitude={}", self.bump_amplitude);
        match &self.flow {
            FlowSpec::Uniform { speed, direction_deg } => {
                let _ = writeln!(s, "flow=uniform {speed} {direction_deg}");
            }
            FlowSpec::Analytic(_) => {
                let _ = writeln!(s, "flow=analytic");
            }
            FlowSpec::Fields(_) => {
                let _ = writeln!(s, "flow=fields");
            }
        }
        let _ = writeln!(s, "diffusivity={}", self.diffusivity);
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "refine={}", self.refine);
        let _ = writeln!(s, "start={}", format_timestamp(&self.start));
        let _ = writeln!(s, "cadence_secs={}", self.cadence_secs);
        for src in &self.sources {
            let _ = writeln!(
                s,
                "source={} noise_sd={} bias={} missing_rate={} missing_region={}",
                src.id,
                src.noise_sd,
                src.bias,
                src.missing_rate,
                src.missing_region
                    .map(|r| format!("{}:{},{}:{}", r.r0, r.r1, r.c0, r.c1))
                    .unwrap_or_else(|| "none".into())
            );
        }
        s
    }
}

/// Noiseless frames `0..frames`, one PDE step apart.
pub fn simulate_truth(config: &SimConfig) -> Result<Vec<Field>> {
    config.validate()?;
    let r = config.refine;
    let g = &config.grid;
    let fine = GridSpec::new(g.n1 * r, g.n2 * r)?;
    let flow = config.flow.on_grid(&fine, config.diffusivity);
    flow.validate(&fine)?;
    let mut state = gaussian_bumps(&config.centers, config.bump_sigma, config.bump_amplitude, &fine)?;
    let coarse = |f: &Field| Field::new(DMatrix::from_fn(g.n1, g.n2, |i, j| f.values[(i * r, j * r)]));
    let mut out = Vec::with_capacity(config.frames);
    out.push(coarse(&state));
    for _ in 1..config.frames {
        state = step_pde(&state, &flow, 1.0, 1)?;
        out.push(coarse(&state));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub truth: Vec<Field>,
    pub streams: Vec<SourceStream>,
}

/// Truth frames and one noisy, biased, gappy stream per source.
pub fn generate_streams(config: &SimConfig) -> Result<SimOutput> {
    let truth = simulate_truth(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let g = &config.grid;
    let mut streams = Vec::with_capacity(config.sources.len());
    let mut frames_by_source: Vec<Vec<ObservationFrame>> = vec![Vec::new(); config.sources.len()];
    for (t, truth_t) in truth.iter().enumerate() {
        for (s, spec) in config.sources.iter().enumerate() {
            let noise = Normal::new(0.0, spec.noise_sd.max(0.0))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut v = DMatrix::zeros(g.n1, g.n2);
            let mut o = DMatrix::from_element(g.n1, g.n2, true);
            for i in 0..g.n1 {
                for j in 0..g.n2 {
                    let eps = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    let drop = spec.missing_rate > 0.0 && rng.random::<f64>() < spec.missing_rate;
                    v[(i, j)] = truth_t.values[(i, j)] + spec.bias + eps;
                    if drop || spec.missing_region.is_some_and(|r| r.contains(i, j)) {
                        o[(i, j)] = false;
                    }
                }
            }
            frames_by_source[s].push(ObservationFrame {
                source_id: spec.id.clone(),
                timestamp: config.time(t),
                grid: g.clone(),
                field: Field::with_mask(v, o)?,
            });
        }
    }
    for (spec, frames) in config.sources.iter().zip(frames_by_source) {
        streams.push(SourceStream::new(&spec.id, frames, config.cadence_secs)?);
    }
    Ok(SimOutput { truth, streams })
}

/// Write source frames, `truth/` frames and a `manifest` under `dir`.
/// Returns the manifest path.
pub fn write_dataset(output: &SimOutput, config: &SimConfig, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("truth"))?;
    let mut manifest = String::from("# adstm simulation manifest\n");
    manifest.push_str(&config.describe());
    for stream in &output.streams {
        for (t, f) in stream.frames.iter().enumerate() {
            let name = format!("{}_{:03}.fgrid", stream.source_id, t);
            std::fs::write(dir.join(&name), write_frame(f))?;
            let _ = writeln!(manifest, "frame={name} time={}", format_timestamp(&f.timestamp));
        }
    }
    for (t, f) in output.truth.iter().enumerate() {
        let frame = ObservationFrame {
            source_id: "truth".into(),
            timestamp: config.time(t),
            grid: config.grid.clone(),
            field: f.clone(),
        };
        let name = format!("truth/truth_{t:03}.fgrid");
        std::fs::write(dir.join(&name), write_frame(&frame))?;
        let _ = writeln!(manifest, "truth={name}");
    }
    let path = dir.join("manifest");
    std::fs::write(&path, manifest)?;
    Ok(path)
}
