use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adstm_core::fusion::fgrid::format_timestamp;
use adstm_core::fusion::{load_streams, ObservationFrame, ParseOptions, SourceStream, AOD_BOUNDS};
use adstm_core::physics::OpticalFlowParams;
use adstm_core::pipeline::{
    composite, evaluate, fit, flow_for, regular_times, stream_grid, FitConfig, FitOutput, FlowSource, ModelKind,
    StepFields,
};
use adstm_core::simulator::{generate_streams, write_dataset, FlowSpec, Region, SimConfig, SourceSpec};
use adstm_core::spectral::Truncation;
use adstm_core::state_space::{compute_mse, Prediction, UpdateForm};
use adstm_core::{Field, GridSpec};
use chrono::{DateTime, Utc};
use log::info;

use crate::args::{DataArgs, EvalArgs, FitArgs, FlowArgs, PredictArgs, SimulateArgs};
use crate::config::{pick, ConfigFile};
use crate::error::CliError;
use crate::output::{csv_matrix, write_fgrid, write_pgm};

type CliResult<T> = Result<T, CliError>;

/// Resolved settings, echoed into each output manifest.
#[derive(Debug, Default)]
struct Echo(Vec<(String, String)>);

impl Echo {
    fn set(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn render(&self, command: &str) -> String {
        let mut s = format!("# adstm {command} manifest\ncommand={command}\n");
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn required_seed(flag: Option<u64>, file: &ConfigFile) -> CliResult<u64> {
    flag.or(file.get("seed")?)
        .ok_or_else(|| CliError::Config("--seed is required (or `seed = N` in the config file)".into()))
}

fn pair_flag<T: Copy>(flag: &Option<Vec<T>>) -> Option<(T, T)> {
    flag.as_ref().map(|v| (v[0], v[1]))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- simulate

fn parse_source(spec: &str) -> CliResult<SourceSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Config(format!("bad source {spec:?}, expected ID:NOISE:BIAS:MISSING[:R0:R1:C0:C1]"));
    if parts.len() != 4 && parts.len() != 8 {
        return Err(bad());
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let idx = |s: &str| s.parse::<usize>().map_err(|_| bad());
    if parts[0].is_empty() || parts[0].contains(char::is_whitespace) {
        return Err(bad());
    }
    let missing_region = if parts.len() == 8 {
        Some(Region {
            r0: idx(parts[4])?,
            r1: idx(parts[5])?,
            c0: idx(parts[6])?,
            c1: idx(parts[7])?,
        })
    } else {
        None
    };
    Ok(SourceSpec {
        id: parts[0].to_string(),
        noise_sd: num(parts[1])?,
        bias: num(parts[2])?,
        missing_rate: num(parts[3])?,
        missing_region,
    })
}

pub fn simulate(args: &SimulateArgs, file: &ConfigFile) -> CliResult<Vec<PathBuf>> {
    let seed = required_seed(args.seed, file)?;
    let preset = pick(args.preset.clone(), file.get("preset")?, "table1".to_string());
    if preset != "table1" {
        return Err(CliError::Config(format!("unknown preset {preset:?} (available: table1)")));
    }
    let mut cfg = SimConfig::table1(seed);
    cfg.frames = pick(args.frames, file.get("frames")?, cfg.frames);
    cfg.refine = pick(args.refine, file.get("refine")?, cfg.refine);
    cfg.diffusivity = pick(args.diffusivity, file.get("diffusivity")?, cfg.diffusivity);
    if let FlowSpec::Uniform { speed, direction_deg } = cfg.flow {
        cfg.flow = FlowSpec::Uniform {
            speed: pick(args.speed, file.get("speed")?, speed),
            direction_deg: pick(args.direction, file.get("direction")?, direction_deg),
        };
    }
    let sources: Vec<String> = if args.sources.is_empty() {
        file.raw("sources")
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    } else {
        args.sources.clone()
    };
    if !sources.is_empty() {
        cfg.sources = sources.iter().map(|s| parse_source(s)).collect::<CliResult<_>>()?;
    }
    if let Some(noise) = args.noise.or(file.get("noise")?) {
        for s in &mut cfg.sources {
            s.noise_sd = noise;
        }
    }
    cfg.validate()?;
    let out = pick(args.out.clone(), file.get("out")?, PathBuf::from("data"));
    info!("simulating {} frames into {}", cfg.frames, out.display());
    let data = generate_streams(&cfg)?;
    let manifest = write_dataset(&data, &cfg, &out)?;
    Ok(vec![manifest])
}

// ---------------------------------------------------------------- data loading

struct DataSettings {
    data: PathBuf,
    out: PathBuf,
    opts: ParseOptions,
    cadence: i64,
    train: Option<usize>,
    flow_params: OpticalFlowParams,
}

fn parse_bounds(s: &str) -> CliResult<Option<(f64, f64)>> {
    match s {
        "none" => Ok(None),
        "aod" => Ok(Some(AOD_BOUNDS)),
        other => {
            let bad = || CliError::Config(format!("bad bounds {other:?}, expected none, aod or LO,HI"));
            let (lo, hi) = other.split_once(',').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            if lo >= hi {
                return Err(bad());
            }
            Ok(Some((lo, hi)))
        }
    }
}

fn resolve_data(args: &DataArgs, file: &ConfigFile, default_out: &str, echo: &mut Echo) -> CliResult<DataSettings> {
    let data: PathBuf = args
        .data
        .clone()
        .or(file.get("data")?)
        .ok_or_else(|| CliError::Config("--data is required".into()))?;
    if !data.is_dir() {
        return Err(CliError::Config(format!("data directory {} not found", data.display())));
    }
    let out = pick(args.out.clone(), file.get("out")?, PathBuf::from(default_out));
    let bounds_text = pick(args.bounds.clone(), file.get("bounds")?, "none".to_string());
    let bounds = parse_bounds(&bounds_text)?;
    let strict = args.strict || file.get("strict")?.unwrap_or(false);
    let cadence = pick(args.cadence, file.get("cadence")?, 300);
    let train = args.train.or(file.get("train")?);
    let defaults = OpticalFlowParams::default();
    let flow_params = OpticalFlowParams {
        smoothness: pick(args.smoothness, file.get("smoothness")?, defaults.smoothness),
        iterations: pick(args.flow_iterations, file.get("flow_iterations")?, defaults.iterations),
    };
    echo.set("data", data.display());
    echo.set("bounds", &bounds_text);
    echo.set("strict", strict);
    echo.set("cadence", cadence);
    echo.set("train", train.map_or("all".to_string(), |n| n.to_string()));
    echo.set("smoothness", flow_params.smoothness);
    echo.set("flow_iterations", flow_params.iterations);
    Ok(DataSettings {
        data,
        out,
        opts: ParseOptions { bounds, strict },
        cadence,
        train,
        flow_params,
    })
}

fn load(settings: &DataSettings) -> CliResult<Vec<SourceStream>> {
    let streams = load_streams(&settings.data, &settings.opts, settings.cadence)?;
    if streams.is_empty() {
        return Err(adstm_core::Error::EmptyData(format!("no .fgrid frames in {}", settings.data.display())).into());
    }
    info!(
        "loaded {} streams: {}",
        streams.len(),
        streams.iter().map(|s| format!("{} ({} frames)", s.source_id, s.frames.len())).collect::<Vec<_>>().join(", ")
    );
    Ok(streams)
}

// ---------------------------------------------------------------- flow

pub fn flow(args: &FlowArgs, file: &ConfigFile) -> CliResult<Vec<PathBuf>> {
    let mut echo = Echo::default();
    let settings = resolve_data(&args.data, file, "flow_out", &mut echo)?;
    let streams = load(&settings)?;
    let grid = stream_grid(&streams)?;
    let mut times = regular_times(&streams)?;
    if let Some(n) = settings.train {
        if n == 0 || n > times.len() {
            return Err(CliError::Config(format!("--train {n} outside 1..={}", times.len())));
        }
        times.truncate(n);
    }
    if times.len() < 2 {
        return Err(CliError::Config("flow estimation needs at least 2 time steps".into()));
    }
    let fields = flow_for(&streams, &grid, &times, &FlowSource::Estimate(settings.flow_params))?;
    let out = &settings.out;
    create_dir(out)?;
    write_text(&out.join("vx.csv"), &csv_matrix(&fields.vx))?;
    write_text(&out.join("vy.csv"), &csv_matrix(&fields.vy))?;
    write_text(&out.join("diffusivity.csv"), &csv_matrix(&fields.diffusivity))?;
    let minutes = settings.cadence as f64 / 60.0;
    write_text(&out.join("speed_kmh.csv"), &csv_matrix(&fields.speed_kmh(&grid, minutes)))?;
    let (speed, dir) = fields.mean_speed_direction();
    let mut summary = String::new();
    let _ = writeln!(summary, "steps={}", times.len());
    let _ = writeln!(summary, "mean_speed={speed}");
    let _ = writeln!(summary, "mean_direction_deg={dir}");
    let _ = writeln!(summary, "max_diffusivity={}", fields.diffusivity.max());
    write_text(&out.join("summary.txt"), &summary)?;
    write_text(&out.join("manifest.txt"), &echo.render("flow"))?;
    eprintln!("mean flow {speed:.5} grid units/step at {dir:.1} deg");
    Ok(vec![out.clone()])
}

// ---------------------------------------------------------------- fit

struct FitSettings {
    data: DataSettings,
    cfg: FitConfig,
    flow_label: String,
}

fn resolve_fit(args: &FitArgs, file: &ConfigFile, default_out: &str, echo: &mut Echo) -> CliResult<FitSettings> {
    let seed = required_seed(args.seed, file)?;
    let data = resolve_data(&args.data, file, default_out, echo)?;
    let (k1, k2) = pick(pair_flag(&args.truncation), file.get_pair("truncation")?, (6, 6));
    let truncation = Truncation::new(k1, k2).map_err(|e| CliError::Config(e.to_string()))?;
    let mut cfg = FitConfig::new(truncation, seed);
    cfg.gibbs.iters = pick(args.iters, file.get("iters")?, cfg.gibbs.iters);
    cfg.gibbs.burn_in = pick(args.burn_in, file.get("burn_in")?, cfg.gibbs.burn_in.min(cfg.gibbs.iters.saturating_sub(1)));
    cfg.gibbs.form = match pick(args.update.clone(), file.get("update")?, "auto".to_string()).as_str() {
        "auto" => UpdateForm::Auto,
        "innovation" => UpdateForm::Innovation,
        "information" => UpdateForm::Information,
        other => return Err(CliError::Config(format!("unknown update form {other:?}"))),
    };
    cfg.model = match pick(args.model.clone(), file.get("model")?, "physics".to_string()).as_str() {
        "physics" => ModelKind::Physics,
        "data-driven" | "data_driven" => ModelKind::DataDriven,
        other => return Err(CliError::Config(format!("unknown model {other:?} (physics or data-driven)"))),
    };
    cfg.downsample = pair_flag(&args.downsample).or(file.get_pair("downsample")?);
    cfg.train_steps = data.train;
    let flow = pair_flag(&args.flow).or(file.get_pair("flow")?);
    let diffusivity = pick(args.flow_diffusivity, file.get("flow_diffusivity")?, 0.0);
    let flow_label = match flow {
        Some((speed, direction_deg)) => {
            cfg.flow = FlowSource::Uniform {
                speed,
                direction_deg,
                diffusivity,
            };
            format!("{speed}@{direction_deg}")
        }
        None => {
            cfg.flow = FlowSource::Estimate(data.flow_params);
            "estimated".to_string()
        }
    };
    cfg.gibbs.validate().map_err(|e| CliError::Config(e.to_string()))?;
    echo.set("seed", seed);
    echo.set("truncation", format!("{k1} {k2}"));
    echo.set("iters", cfg.gibbs.iters);
    echo.set("burn_in", cfg.gibbs.burn_in);
    echo.set("update", format!("{:?}", cfg.gibbs.form).to_lowercase());
    echo.set(
        "model",
        match cfg.model {
            ModelKind::Physics => "physics",
            ModelKind::DataDriven => "data-driven",
        },
    );
    echo.set("downsample", cfg.downsample.map_or("none".to_string(), |(a, b)| format!("{a} {b}")));
    echo.set("flow", &flow_label);
    echo.set("flow_diffusivity", diffusivity);
    Ok(FitSettings { data, cfg, flow_label })
}

/// A physics fit without a flow override estimates the flow from the
/// training frames, so it needs at least two of them.
fn check_flow_available(settings: &FitSettings, streams: &[SourceStream]) -> CliResult<()> {
    if settings.cfg.model != ModelKind::Physics || !matches!(settings.cfg.flow, FlowSource::Estimate(_)) {
        return Ok(());
    }
    let steps = regular_times(streams)?.len();
    let train = settings.cfg.train_steps.unwrap_or(steps).min(steps);
    if train < 2 {
        return Err(CliError::Config(
            "no flow information: a single training frame cannot give a flow estimate; pass --flow SPEED DIR or use --model data-driven".into(),
        ));
    }
    Ok(())
}

fn frame_of(source: &str, time: DateTime<Utc>, grid: &GridSpec, field: &Field) -> ObservationFrame {
    ObservationFrame {
        source_id: source.to_string(),
        timestamp: time,
        grid: grid.clone(),
        field: field.clone(),
    }
}

/// Pooled MSE of `field` against every source frame observed at `time`.
fn pooled_mse(field: &Field, streams: &[SourceStream], time: DateTime<Utc>) -> CliResult<Option<(f64, usize)>> {
    let mut sse = 0.0;
    let mut n = 0;
    for s in streams {
        if let Some(f) = s.frame_at(time)? {
            let k = f.observed_count();
            if k > 0 {
                sse += compute_mse(field, &f.field)? * k as f64;
                n += k;
            }
        }
    }
    Ok((n > 0).then(|| (sse / n as f64, n)))
}

fn field_stats(f: &Field) -> (f64, f64, f64) {
    let v = &f.values;
    (v.mean(), v.min(), v.max())
}

fn write_summary(out: &Path, fit_out: &FitOutput, flow_label: &str) -> CliResult<()> {
    let d = &fit_out.draws;
    let mut s = String::new();
    let _ = writeln!(s, "state_dim={}", fit_out.state_dim());
    let _ = writeln!(s, "coefficients={}", fit_out.basis.dim());
    let _ = writeln!(s, "steps={}", fit_out.times.len());
    let _ = writeln!(s, "first_time={}", format_timestamp(&fit_out.times[0]));
    let _ = writeln!(s, "last_time={}", format_timestamp(fit_out.times.last().expect("non-empty")));
    let _ = writeln!(s, "observed_total={}", fit_out.observed.iter().sum::<usize>());
    let _ = writeln!(s, "draws_kept={}", d.kept());
    let _ = writeln!(s, "flow={flow_label}");
    if let Some(flow) = &fit_out.flow {
        let (speed, dir) = flow.mean_speed_direction();
        let _ = writeln!(s, "flow_mean_speed={speed}");
        let _ = writeln!(s, "flow_mean_direction_deg={dir}");
    }
    for (id, v) in fit_out.source_ids.iter().zip(d.sigma2_mean.iter()) {
        let _ = writeln!(s, "sigma2_mean.{id}={v}");
    }
    let _ = writeln!(s, "w_trace_mean={}", d.w_mean.trace());
    let _ = writeln!(s, "rank_deficient={}", d.rank_deficient);
    let _ = writeln!(s, "wall_time_secs={:.3}", fit_out.elapsed.as_secs_f64());
    write_text(&out.join("summary.txt"), &s)
}

fn write_fit_outputs(out: &Path, fit_out: &FitOutput, streams: &[SourceStream], flow_label: &str) -> CliResult<()> {
    create_dir(&out.join("filtered"))?;
    create_dir(&out.join("bias"))?;
    let filtered: Vec<StepFields> = fit_out.filtered_fields()?;
    let one_step: Vec<StepFields> = fit_out.one_step_fields()?;
    let mut csv = String::from("step,time,observed,filtered_mean,filtered_min,filtered_max,bias_mean,one_step_mse\n");
    for (t, (f, p)) in filtered.iter().zip(&one_step).enumerate() {
        write_fgrid(&out.join(format!("filtered/filtered_{t:03}.fgrid")), &frame_of("filtered", f.time, &fit_out.grid, &f.field))?;
        write_fgrid(&out.join(format!("bias/bias_{t:03}.fgrid")), &frame_of("bias", f.time, &fit_out.grid, &f.bias))?;
        let (mean, min, max) = field_stats(&f.field);
        let mse = pooled_mse(&p.field, streams, f.time)?.map_or("".to_string(), |(m, _)| m.to_string());
        let _ = writeln!(
            csv,
            "{t},{},{},{mean},{min},{max},{},{mse}",
            format_timestamp(&f.time),
            fit_out.observed[t],
            f.bias.values.mean()
        );
    }
    write_text(&out.join("diagnostics.csv"), &csv)?;
    write_summary(out, fit_out, flow_label)
}

pub fn fit_cmd(args: &FitArgs, file: &ConfigFile) -> CliResult<Vec<PathBuf>> {
    let mut echo = Echo::default();
    let settings = resolve_fit(args, file, "fit_out", &mut echo)?;
    let streams = load(&settings.data)?;
    check_flow_available(&settings, &streams)?;
    let fit_out = fit(&streams, &settings.cfg)?;
    let out = &settings.data.out;
    create_dir(out)?;
    write_fit_outputs(out, &fit_out, &streams, &settings.flow_label)?;
    write_text(&out.join("manifest.txt"), &echo.render("fit"))?;
    eprintln!(
        "state dimension {}, {} steps, wall time {:.2}s",
        fit_out.state_dim(),
        fit_out.times.len(),
        fit_out.elapsed.as_secs_f64()
    );
    Ok(vec![out.clone()])
}

// ---------------------------------------------------------------- predict

fn write_forecast(out: &Path, fit_out: &FitOutput, forecast: &[Prediction]) -> CliResult<()> {
    create_dir(&out.join("predicted"))?;
    create_dir(&out.join("predicted_bias"))?;
    let mut csv = String::from("step,time,field_mean,field_min,field_max,bias_mean\n");
    for p in forecast {
        let time = fit_out.time_after(p.step);
        let k = p.step;
        write_fgrid(&out.join(format!("predicted/predicted_{k:03}.fgrid")), &frame_of("predicted", time, &fit_out.grid, &p.field))?;
        write_fgrid(&out.join(format!("predicted_bias/bias_{k:03}.fgrid")), &frame_of("bias", time, &fit_out.grid, &p.bias))?;
        write_pgm(&out.join(format!("predicted/predicted_{k:03}.pgm")), &p.field)?;
        let (mean, min, max) = field_stats(&p.field);
        let _ = writeln!(csv, "{k},{},{mean},{min},{max},{}", format_timestamp(&time), p.bias.values.mean());
    }
    write_text(&out.join("forecast.csv"), &csv)
}

pub fn predict(args: &PredictArgs, file: &ConfigFile) -> CliResult<Vec<PathBuf>> {
    let mut echo = Echo::default();
    let settings = resolve_fit(&args.fit, file, "predict_out", &mut echo)?;
    let steps = pick(args.steps, file.get("steps")?, 1);
    echo.set("steps", steps);
    let streams = load(&settings.data)?;
    check_flow_available(&settings, &streams)?;
    let fit_out = fit(&streams, &settings.cfg)?;
    let forecast = fit_out.forecast(steps)?;
    let out = &settings.data.out;
    create_dir(out)?;
    write_fit_outputs(out, &fit_out, &streams, &settings.flow_label)?;
    write_forecast(out, &fit_out, &forecast)?;
    write_text(&out.join("manifest.txt"), &echo.render("predict"))?;
    Ok(vec![out.clone()])
}

// ---------------------------------------------------------------- eval

pub fn eval(args: &EvalArgs, file: &ConfigFile) -> CliResult<Vec<PathBuf>> {
    let mut echo = Echo::default();
    let mut fit_args = args.fit.clone();
    let horizons = pick(args.horizons, file.get("horizons")?, 10);
    if horizons == 0 {
        return Err(CliError::Config("--horizons must be at least 1".into()));
    }
    // Resolve once to learn the data directory, then fix the training window.
    let probe = resolve_fit(&fit_args, file, "eval_out", &mut Echo::default())?;
    let streams = load(&probe.data)?;
    let total = regular_times(&streams)?.len();
    let train = match probe.data.train {
        Some(n) => n,
        None if total > horizons => total - horizons,
        None => {
            return Err(CliError::Config(format!("{total} frames leave nothing to train on with {horizons} horizons")));
        }
    };
    fit_args.data.train = Some(train);
    let settings = resolve_fit(&fit_args, file, "eval_out", &mut echo)?;
    echo.set("horizons", horizons);
    check_flow_available(&settings, &streams)?;

    let (fit_out, scores) = evaluate(&streams, &settings.cfg, horizons)?;
    if scores.is_empty() {
        return Err(adstm_core::Error::EmptyData("no reference frames inside the forecast horizon".into()).into());
    }
    let out = &settings.data.out;
    create_dir(out)?;
    let model = match settings.cfg.model {
        ModelKind::Physics => "physics",
        ModelKind::DataDriven => "data-driven",
    };
    let mut wide = String::from("model,flow");
    for s in &scores {
        let _ = write!(wide, ",h{}", train + s.step);
    }
    let _ = write!(wide, "\n{model},{}", settings.flow_label);
    for s in &scores {
        let _ = write!(wide, ",{}", s.mse);
    }
    wide.push('\n');
    write_text(&out.join("mse.csv"), &wide)?;

    let mut long = String::from("step,frame,time,mse,pixels\n");
    for s in &scores {
        let _ = writeln!(long, "{},{},{},{},{}", s.step, train + s.step, format_timestamp(&s.time), s.mse, s.pixels);
    }
    write_text(&out.join("scores.csv"), &long)?;

    create_dir(&out.join("images"))?;
    let forecast = fit_out.forecast(horizons)?;
    for p in forecast.iter().filter(|p| p.step > 0) {
        let frame = train + p.step;
        write_pgm(&out.join(format!("images/forecast_{frame:03}.pgm")), &p.field)?;
        let reference = composite(&streams, &fit_out.grid, fit_out.time_after(p.step))?;
        if reference.missing_count() < reference.values.len() {
            write_pgm(&out.join(format!("images/reference_{frame:03}.pgm")), &reference)?;
        }
    }
    write_summary(out, &fit_out, &settings.flow_label)?;
    write_text(&out.join("manifest.txt"), &echo.render("eval"))?;
    let line: Vec<String> = scores.iter().map(|s| format!("{:.4}", s.mse)).collect();
    eprintln!("{model} {}: {}", settings.flow_label, line.join(" "));
    Ok(vec![out.join("mse.csv")])
}
