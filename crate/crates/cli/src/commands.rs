use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use vl_intent::belief::ObservationModel;
use vl_intent::filter::{vague_prior, FilterConfig, ParticleSet, StepDiagnostics};
use vl_intent::models::{ModelKind, MotionModel, StateLayout};
use vl_intent::query::{
    destination_marginal, hypothesis_probabilities, parse_point, point_intent_density,
    region_probability, Region,
};
use vl_intent::scenario::{
    read_measurements_csv, realisation, run_benchmark, write_measurements_csv,
    write_trajectory_csv, BenchmarkConfig, FilterTuning, GeneratorKind, Measurement, Method,
};

use crate::config::{parse_model_name, RunConfig};
use crate::{CliError, Common};

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(name) = &common.model {
        cfg.model = parse_model_name(name, &cfg.model)?;
    }
    if let Some(n) = common.particles {
        cfg.filter.particles = n;
    }
    if let Some(e) = common.ess_threshold {
        cfg.filter.ess_threshold = e;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(m) = &common.measurements {
        cfg.measurements = Some(m.clone());
    }
    if !common.region.is_empty() {
        cfg.queries.regions = common.region.clone();
    }
    if !common.point.is_empty() {
        cfg.queries.points = common.point.clone();
    }
    // Relative paths in a config file are resolved against its directory.
    if let (Some(path), Some(m)) = (&common.config, &cfg.measurements) {
        if common.measurements.is_none() && m.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.measurements = Some(dir.join(m));
            }
        }
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let seed = cfg.seed.unwrap_or(cfg.scenario.seed);
    let (traj, meas) = realisation(&cfg.scenario, seed, 0)?;
    write_trajectory_csv(&traj, create(&cfg.out_dir, "trajectory.csv")?)?;
    write_measurements_csv(&meas, create(&cfg.out_dir, "measurements.csv")?)?;
    let mut truth = create(&cfg.out_dir, "truth.json")?;
    serde_json::to_writer_pretty(&mut truth, &traj.truth)
        .map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(truth).map_err(io_err)?;
    truth.flush().map_err(io_err)?;
    println!(
        "simulated {} steps, {} waypoints, {} switches -> {}",
        traj.len(),
        traj.truth.waypoints.len(),
        traj.truth.switch_times.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryMode {
    /// Whatever the config lists.
    Configured,
    Regions,
    Points,
}

enum Query {
    Region(Region),
    Point(Vec<f64>),
}

#[derive(Serialize)]
struct QueryRecord {
    time: f64,
    query_id: String,
    value: f64,
}

fn measurements_path(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let path = cfg
        .measurements
        .clone()
        .ok_or_else(|| CliError::Config("no measurement file given (--measurements)".into()))?;
    if !path.exists() {
        return Err(CliError::Config(format!(
            "measurement file {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn build_queries(
    cfg: &RunConfig,
    mode: QueryMode,
    dims: usize,
) -> Result<Vec<(String, Query)>, CliError> {
    let mut out = Vec::new();
    if mode != QueryMode::Points {
        for (i, s) in cfg.queries.regions.iter().enumerate() {
            let r: Region = s.parse()?;
            if r.dims() != dims {
                return Err(CliError::Config(format!(
                    "region `{s}` has {} axes, data has {dims}",
                    r.dims()
                )));
            }
            out.push((format!("region{i}"), Query::Region(r)));
        }
    }
    if mode != QueryMode::Regions {
        for (i, s) in cfg.queries.points.iter().enumerate() {
            let p = parse_point(s)?;
            if p.len() != dims {
                return Err(CliError::Config(format!(
                    "point `{s}` has {} axes, data has {dims}",
                    p.len()
                )));
            }
            out.push((format!("point{i}"), Query::Point(p)));
        }
    }
    match mode {
        QueryMode::Regions if out.is_empty() => {
            Err(CliError::Config("query-region needs --region".into()))
        }
        QueryMode::Points if out.is_empty() => {
            Err(CliError::Config("query-point needs --point".into()))
        }
        _ => Ok(out),
    }
}

fn build_filter(cfg: &RunConfig, first: &Measurement) -> Result<ParticleSet, CliError> {
    let dims = first.y.len();
    let layout = StateLayout::new(dims);
    let model = MotionModel::new(cfg.model.clone(), cfg.params.with_dims(dims))?;
    let obs = ObservationModel::positions(layout, cfg.observation.sigma)?;
    let prior = vague_prior(
        layout,
        &first.y,
        cfg.prior.position_var,
        cfg.prior.velocity_var,
        cfg.prior.intent_var,
    )?;
    let fc = FilterConfig {
        particles: cfg.filter.particles,
        ess_threshold: cfg.filter.ess_threshold,
        seed: cfg.seed.unwrap_or(0),
    };
    Ok(ParticleSet::init(model, cfg.jump_prior, obs, prior, fc)?)
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn track_header(dims: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let groups = ["", "v", "r"];
    for g in groups {
        h.extend(AXES[..dims].iter().map(|a| format!("{g}{a}")));
    }
    for g in groups {
        h.extend(AXES[..dims].iter().map(|a| format!("var_{g}{a}")));
    }
    h.extend(["ess", "resampled", "map_jump_times"].map(String::from));
    h
}

fn track_row(d: &StepDiagnostics, layout: StateLayout) -> Vec<String> {
    let mut row = vec![d.time.to_string()];
    let groups = [
        layout.position_indices(),
        layout.velocity_indices(),
        layout.intent_indices(),
    ];
    for idx in &groups {
        row.extend(idx.iter().map(|&i| d.mean[i].to_string()));
    }
    for idx in &groups {
        row.extend(idx.iter().map(|&i| d.variances[i].to_string()));
    }
    row.push(d.ess.to_string());
    row.push(u8::from(d.resampled).to_string());
    row.push(
        d.map_jump_times
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );
    row
}

/// `track`, `query-region` and `query-point`: filter the measurement file,
/// write `track.csv` and, when any query is active, `queries.csv`/`.json`.
pub fn track(common: &Common, mode: QueryMode) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let path = measurements_path(&cfg)?;
    let file = File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let meas = read_measurements_csv(file)?;
    let dims = meas[0].y.len();
    let layout = StateLayout::new(dims);
    let queries = build_queries(&cfg, mode, dims)?;
    let hypotheses =
        matches!(cfg.model, ModelKind::MultiHypothesis { .. }) && mode == QueryMode::Configured;
    let mut set = build_filter(&cfg, &meas[0])?;

    let mut out = csv::Writer::from_writer(create(&cfg.out_dir, "track.csv")?);
    out.write_record(track_header(dims))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut records = Vec::new();
    for m in &meas {
        let mut diag = set.assimilate(m.t, &DVector::from_column_slice(&m.y))?;
        if !queries.is_empty() {
            let marginal = destination_marginal(&set.posterior_mixture()?)?;
            for (id, q) in &queries {
                let value = match q {
                    Query::Region(r) => region_probability(&marginal, r)?,
                    Query::Point(p) => point_intent_density(&marginal, p)?,
                };
                records.push(QueryRecord {
                    time: m.t,
                    query_id: id.clone(),
                    value,
                });
            }
        }
        if hypotheses {
            let report = hypothesis_probabilities(&set)?;
            for (j, p) in report.probabilities.iter().enumerate() {
                records.push(QueryRecord {
                    time: m.t,
                    query_id: format!("H{j}"),
                    value: *p,
                });
            }
        }
        diag.resampled = set.resample_if_needed();
        out.write_record(track_row(&diag, layout))
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    out.flush().map_err(io_err)?;

    if !records.is_empty() {
        let mut w = csv::Writer::from_writer(create(&cfg.out_dir, "queries.csv")?);
        for r in &records {
            w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(io_err)?;
        let mut j = create(&cfg.out_dir, "queries.json")?;
        serde_json::to_writer_pretty(&mut j, &records)
            .map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(j).map_err(io_err)?;
        j.flush().map_err(io_err)?;
        let last_t = meas.last().map(|m| m.t).unwrap_or_default();
        for r in records.iter().filter(|r| r.time == last_t) {
            println!("{}\t{}\t{}", r.time, r.query_id, r.value);
        }
    }
    eprintln!(
        "tracked {} measurements -> {}",
        meas.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn benchmark(
    common: &Common,
    methods: &[String],
    realisations: Option<usize>,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let seed = cfg.seed.ok_or_else(|| {
        CliError::Config("benchmark runs need a seed (--seed or `seed` in the config)".into())
    })?;
    let generator = cfg.scenario.generator;
    let defaults = match generator {
        GeneratorKind::WaypointCv => BenchmarkConfig::default(),
        GeneratorKind::JumpDiffusionTarget => BenchmarkConfig::jump_target(),
    };
    let methods: Vec<Method> = if !methods.is_empty() {
        methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()?
    } else {
        cfg.benchmark.methods.clone().unwrap_or(defaults.methods)
    };
    let bc = BenchmarkConfig {
        scenario: cfg.scenario.clone(),
        methods,
        realisations: realisations
            .or(cfg.benchmark.realisations)
            .unwrap_or(defaults.realisations),
        particles: cfg.filter.particles,
        ess_threshold: cfg.filter.ess_threshold,
        seed,
        tuning: cfg
            .benchmark
            .tuning
            .clone()
            .unwrap_or_else(|| FilterTuning::for_generator(generator)),
    };
    let result = run_benchmark(&bc)?;
    result.write_csv(create(&cfg.out_dir, "benchmark.csv")?)?;
    let text = result.to_text();
    let mut t = create(&cfg.out_dir, "benchmark.txt")?;
    t.write_all(text.as_bytes()).map_err(io_err)?;
    t.flush().map_err(io_err)?;
    let mut j = create(&cfg.out_dir, "benchmark.json")?;
    serde_json::to_writer_pretty(&mut j, &result).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(j).map_err(io_err)?;
    j.flush().map_err(io_err)?;
    print!("{text}");
    Ok(())
}
