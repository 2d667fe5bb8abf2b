//! Fit, forecast and score on multi-source streams.

use std::time::{Duration as WallTime, Instant};

use chrono::{DateTime, Duration, Utc};
use log::info;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fusion::{build_downsample_mask, common_times, fuse, FusedObservation, SourceStream};
use crate::grid::{Field, GridSpec};
use crate::physics::{estimate_flow_with_diffusivity, galerkin_transition, FlowFields, OpticalFlowParams};
use crate::spectral::{Basis, SpectralCoeffs, Truncation};
use crate::state_space::{
    build_g, compute_mse, predict, run_gibbs, Dynamics, GibbsConfig, ModelParams, ObservationSeries, PosteriorDraws,
    Prediction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Galerkin transition with a bias-correction half.
    Physics,
    /// Transition learned from sampled trajectories, coefficients only.
    DataDriven,
}

#[derive(Debug, Clone)]
pub enum FlowSource {
    Estimate(OpticalFlowParams),
    Uniform { speed: f64, direction_deg: f64, diffusivity: f64 },
    Fields(FlowFields),
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub truncation: Truncation,
    pub gibbs: GibbsConfig,
    pub model: ModelKind,
    pub downsample: Option<(usize, usize)>,
    pub flow: FlowSource,
    /// Number of leading time steps used for fitting (all when `None`).
    pub train_steps: Option<usize>,
}

impl FitConfig {
    pub fn new(truncation: Truncation, seed: u64) -> Self {
        Self {
            truncation,
            gibbs: GibbsConfig::new(seed),
            model: ModelKind::Physics,
            downsample: None,
            flow: FlowSource::Estimate(OpticalFlowParams::default()),
            train_steps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub grid: GridSpec,
    pub basis: Basis,
    pub model: ModelKind,
    pub times: Vec<DateTime<Utc>>,
    pub cadence_secs: i64,
    pub source_ids: Vec<String>,
    pub flow: Option<FlowFields>,
    pub draws: PosteriorDraws,
    /// Observed values per step after downsampling.
    pub observed: Vec<usize>,
    pub elapsed: WallTime,
}

/// Per-step fields reconstructed from a state sequence.
#[derive(Debug, Clone)]
pub struct StepFields {
    pub time: DateTime<Utc>,
    pub field: Field,
    pub bias: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonScore {
    pub step: usize,
    pub time: DateTime<Utc>,
    pub mse: f64,
    pub pixels: usize,
}

impl FitOutput {
    pub fn state_dim(&self) -> usize {
        self.draws.state_dim()
    }

    fn fields_of(&self, states: &[DVector<f64>]) -> Result<Vec<StepFields>> {
        let q = self.basis.dim();
        states
            .iter()
            .zip(&self.times)
            .map(|(s, &time)| {
                let field = self.basis.synthesize(&SpectralCoeffs::from_vec(self.basis.truncation, s.rows(0, q).into_owned())?)?;
                let bias = if s.len() == 2 * q {
                    self.basis.synthesize(&SpectralCoeffs::from_vec(self.basis.truncation, s.rows(q, q).into_owned())?)?
                } else {
                    Field::zeros(&self.grid)
                };
                Ok(StepFields { time, field, bias })
            })
            .collect()
    }

    /// Filtered means under the posterior point estimates, one per training step.
    pub fn filtered_fields(&self) -> Result<Vec<StepFields>> {
        self.fields_of(&self.draws.filtered[1..])
    }

    /// One-step-ahead predicted means, one per training step.
    pub fn one_step_fields(&self) -> Result<Vec<StepFields>> {
        self.fields_of(&self.draws.predicted[1..])
    }

    /// Posterior mean trajectory, one per training step.
    pub fn smoothed_fields(&self) -> Result<Vec<StepFields>> {
        let states: Vec<DVector<f64>> = (1..self.draws.theta_mean.ncols())
            .map(|t| self.draws.theta_mean.column(t).into_owned())
            .collect();
        self.fields_of(&states)
    }

    /// Predictions `0..=k` steps past the last training step, started from
    /// the last filtered mean.
    pub fn forecast(&self, k: usize) -> Result<Vec<Prediction>> {
        let start = self.draws.filtered.last().expect("non-empty").clone();
        predict(&start, &self.draws.g_hat, k, &self.basis)
    }

    pub fn time_after(&self, k: usize) -> DateTime<Utc> {
        *self.times.last().expect("non-empty") + Duration::seconds(self.cadence_secs * k as i64)
    }
}

/// Steps from the first to the last timestamp at the stream cadence.
pub fn regular_times(streams: &[SourceStream]) -> Result<Vec<DateTime<Utc>>> {
    let all = common_times(streams);
    let (Some(&first), Some(&last)) = (all.first(), all.last()) else {
        return Err(Error::EmptyData("no frames".into()));
    };
    let cadence = streams[0].cadence_secs;
    let n = ((last - first).num_seconds() as f64 / cadence as f64).round() as i64;
    Ok((0..=n).map(|k| first + Duration::seconds(k * cadence)).collect())
}

/// Per-pixel average of the sources observed at `t`; missing where none is.
pub fn composite(streams: &[SourceStream], grid: &GridSpec, t: DateTime<Utc>) -> Result<Field> {
    let mut sum = DMatrix::<f64>::zeros(grid.n1, grid.n2);
    let mut cnt = DMatrix::<f64>::zeros(grid.n1, grid.n2);
    for s in streams {
        if let Some(f) = s.frame_at(t)? {
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    if f.field.is_observed(i, j) {
                        sum[(i, j)] += f.field.values[(i, j)];
                        cnt[(i, j)] += 1.0;
                    }
                }
            }
        }
    }
    let observed = cnt.map(|c| c > 0.0);
    let values = sum.zip_map(&cnt, |s, c| if c > 0.0 { s / c } else { f64::NAN });
    Field::with_mask(values, observed)
}

pub fn stream_grid(streams: &[SourceStream]) -> Result<GridSpec> {
    let grid = streams
        .iter()
        .find_map(|s| s.grid())
        .ok_or_else(|| Error::EmptyData("no frames in any stream".into()))?
        .clone();
    if streams.iter().filter_map(|s| s.grid()).any(|g| !g.same_shape(&grid)) {
        return Err(Error::DimensionMismatch("streams have different grids".into()));
    }
    Ok(grid)
}

pub fn flow_for(streams: &[SourceStream], grid: &GridSpec, times: &[DateTime<Utc>], source: &FlowSource) -> Result<FlowFields> {
    match source {
        FlowSource::Uniform {
            speed,
            direction_deg,
            diffusivity,
        } => Ok(FlowFields::from_speed_direction(grid, *speed, *direction_deg, *diffusivity)),
        FlowSource::Fields(f) => {
            f.validate(grid)?;
            Ok(f.clone())
        }
        FlowSource::Estimate(p) => {
            let frames = times
                .iter()
                .map(|&t| composite(streams, grid, t))
                .collect::<Result<Vec<_>>>()?;
            estimate_flow_with_diffusivity(&frames, p)
        }
    }
}

pub fn fit(streams: &[SourceStream], cfg: &FitConfig) -> Result<FitOutput> {
    let start = Instant::now();
    let grid = stream_grid(streams)?;
    cfg.truncation.check(&grid)?;
    let mut times = regular_times(streams)?;
    if let Some(n) = cfg.train_steps {
        if n == 0 || n > times.len() {
            return Err(Error::InvalidArgument(format!("training window {n} outside 1..={}", times.len())));
        }
        times.truncate(n);
    }
    let mut source_ids: Vec<String> = streams.iter().map(|s| s.source_id.clone()).collect();
    source_ids.sort();
    let mask = match cfg.downsample {
        Some((g1, g2)) => Some(build_downsample_mask(&grid, g1, g2)?),
        None => None,
    };
    let fused: Vec<FusedObservation> = times
        .iter()
        .map(|&t| fuse(streams, &grid, t, mask.as_ref()))
        .collect::<Result<_>>()?;
    let observed: Vec<usize> = fused.iter().map(FusedObservation::len).collect();
    if observed.iter().all(|&n| n == 0) {
        return Err(Error::EmptyData("no observed pixels in the training window".into()));
    }
    let basis = Basis::new(&grid, cfg.truncation)?;
    let obs = ObservationSeries::from_fused(&basis.matrix, &fused, &source_ids)?;

    let first = fused
        .iter()
        .position(|f| !f.is_empty())
        .expect("some step is observed");
    let comp = composite(streams, &grid, times[first])?;
    let fill = comp.observed_mean().unwrap_or(0.0);
    let alpha0 = basis.analyze(&comp.filled(fill))?.values;
    let q = basis.dim();

    let (dynamics, m0, flow) = match cfg.model {
        ModelKind::Physics => {
            let flow = flow_for(streams, &grid, &times, &cfg.flow)?;
            let tr = galerkin_transition(&flow, cfg.truncation, &grid)?;
            let mut m0 = DVector::zeros(2 * q);
            m0.rows_mut(0, q).copy_from(&alpha0);
            (Dynamics::Fixed(vec![build_g(&tr.exp_p)?]), m0, Some(flow))
        }
        ModelKind::DataDriven => (Dynamics::Learned, alpha0, None),
    };
    let params = ModelParams::initial(m0, source_ids.len());
    info!(
        "fitting {} steps, state dimension {}, {} sources",
        times.len(),
        params.state_dim(),
        source_ids.len()
    );
    let draws = run_gibbs(&obs, &dynamics, &params, &cfg.gibbs)?;
    Ok(FitOutput {
        grid,
        basis,
        model: cfg.model,
        times,
        cadence_secs: streams[0].cadence_secs,
        source_ids,
        flow,
        draws,
        observed,
        elapsed: start.elapsed(),
    })
}

/// MSE of each forecast step against the frames observed at that time,
/// pooled over sources. Steps without reference frames are skipped.
pub fn score_forecast(fit: &FitOutput, forecast: &[Prediction], reference: &[SourceStream]) -> Result<Vec<HorizonScore>> {
    let mut out = Vec::new();
    for p in forecast.iter().filter(|p| p.step > 0) {
        let t = fit.time_after(p.step);
        let mut sse = 0.0;
        let mut n = 0usize;
        for s in reference {
            if let Some(f) = s.frame_at(t)? {
                let k = f.observed_count();
                if k > 0 {
                    sse += compute_mse(&p.field, &f.field)? * k as f64;
                    n += k;
                }
            }
        }
        if n > 0 {
            out.push(HorizonScore {
                step: p.step,
                time: t,
                mse: sse / n as f64,
                pixels: n,
            });
        }
    }
    Ok(out)
}

/// Fit on the first `train` steps and score `horizons` forecast steps on the rest.
pub fn evaluate(streams: &[SourceStream], cfg: &FitConfig, horizons: usize) -> Result<(FitOutput, Vec<HorizonScore>)> {
    let fit_out = fit(streams, cfg)?;
    let forecast = fit_out.forecast(horizons)?;
    let scores = score_forecast(&fit_out, &forecast, streams)?;
    Ok((fit_out, scores))
}
