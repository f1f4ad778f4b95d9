//! `generate`, `identify`, `evaluate` and `simulate`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use ndct_core::battery::{Cell, Input, OcvCurve, Params, State};
use ndct_core::bayesopt::{
    run_identification, write_regions_csv, write_trace_csv, OptError, Schedule, SearchBox,
};
use ndct_core::gp::Hyperparameters;
use ndct_core::likelihood::{log_likelihood, LikelihoodConfig};
use ndct_core::simulator::{
    generate_dataset, integrate, noiseless_outputs, CurrentProfile, Dataset, NoiseVariances,
};
use serde::{Deserialize, Serialize};

use crate::config::{ProfileSource, RunConfig};
use crate::{io_err, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Dataset CSV, relative to the manifest's directory.
    pub file: String,
    pub t_amb: f64,
    pub noise_seed: u64,
    pub x0: State,
    pub profile: ProfileSource,
}

/// Everything needed to reproduce and reload a set of generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub theta_true: Params,
    pub noise: NoiseVariances,
    pub generation_substeps: usize,
    pub ocv: Option<PathBuf>,
    pub datasets: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub source: PathBuf,
    pub data: Dataset,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Synthesizes one noisy dataset per descriptor and writes them with a manifest.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    let theta = cfg
        .theta_true
        .ok_or_else(|| CliError::Input("generate needs theta_true in the config".into()))?;
    theta
        .validate()
        .map_err(|e| CliError::Input(format!("theta_true: {e}")))?;
    if cfg.datasets.is_empty() {
        return Err(CliError::Input("the config lists no datasets".into()));
    }
    let ocv = cfg.ocv()?;
    let cell = Cell::new(&theta, &ocv, cfg.likelihood.t_ref);
    let profiles = cfg
        .datasets
        .iter()
        .map(|d| d.load_profile())
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;

    let mut entries = Vec::with_capacity(cfg.datasets.len());
    for (i, (spec, profile)) in cfg.datasets.iter().zip(&profiles).enumerate() {
        let seed = spec.noise_seed(cfg.seed, i);
        let x0 = spec.x0();
        let data = generate_dataset(
            &cell,
            &x0,
            profile,
            cfg.noise,
            seed,
            cfg.generation_substeps,
        )
        .map_err(|e| CliError::Input(format!("dataset {}: {e}", spec.name)))?;
        let file = format!("{}.csv", spec.name);
        let path = out.join(&file);
        data.write_csv(create_file(&path)?)
            .map_err(|e| io_err(&path, e))?;
        info!("wrote {} ({} samples)", path.display(), data.len());
        entries.push(ManifestEntry {
            name: spec.name.clone(),
            file,
            t_amb: spec.t_amb,
            noise_seed: seed,
            x0,
            profile: spec.profile.clone(),
        });
    }
    let manifest = Manifest {
        seed: cfg.seed,
        theta_true: theta,
        noise: cfg.noise,
        generation_substeps: cfg.generation_substeps,
        ocv: cfg.ocv.clone(),
        datasets: entries,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads datasets from manifests (`.json`) or bare dataset CSVs. Bare CSVs use
/// the config's noise variances and start fully charged at rest at the first
/// row's ambient temperature.
pub fn load_datasets(paths: &[PathBuf], cfg: &RunConfig) -> Result<Vec<NamedDataset>, CliError> {
    let mut out = Vec::new();
    for path in paths {
        if !path.exists() {
            return Err(CliError::Input(format!(
                "{}: file not found",
                path.display()
            )));
        }
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest = read_json(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            for entry in &manifest.datasets {
                let file = base.join(&entry.file);
                let reader = File::open(&file).map_err(|e| io_err(&file, e))?;
                let data = Dataset::read_csv(reader, manifest.noise, entry.x0)
                    .map_err(|e| io_err(&file, e))?;
                out.push(NamedDataset {
                    name: entry.name.clone(),
                    source: file,
                    data,
                });
            }
        } else {
            let reader = File::open(path).map_err(|e| io_err(path, e))?;
            // x0 is replaced once the ambient temperature is known
            let data = Dataset::read_csv(reader, cfg.noise, State::at_rest(1.0, 1.0))
                .map_err(|e| io_err(path, e))?;
            let t_amb = data.profile.t_amb()[0];
            let data = Dataset {
                x0: State::at_rest(1.0, t_amb),
                ..data
            };
            let name = path.file_stem().map_or_else(
                || "dataset".to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            out.push(NamedDataset {
                name,
                source: path.clone(),
                data,
            });
        }
    }
    if out.is_empty() {
        return Err(CliError::Input("no datasets given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifyResult {
    pub theta_hat: Params,
    pub log_likelihood: f64,
    pub theta_hat_normalized: Vec<f64>,
    pub incumbent_iteration: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub schedule: Schedule,
    pub likelihood: LikelihoodConfig,
    pub search_box: SearchBox,
    pub ocv: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
    pub final_hyperparameters: Option<Hyperparameters>,
}

/// Runs the identification and writes `result.json`, `trace.csv` and `regions.csv`.
pub fn identify(
    cfg: &RunConfig,
    data: &[NamedDataset],
    out: &Path,
    seed: u64,
) -> Result<IdentifyResult, CliError> {
    let ocv = cfg.ocv()?;
    let search_box = cfg.search_box()?;
    let datasets: Vec<Dataset> = data.iter().map(|d| d.data.clone()).collect();
    let lcfg = &cfg.likelihood;
    // surfaces configuration problems before the run starts
    log_likelihood(
        &Params::from_slice(&search_box.denormalize(&vec![0.5; search_box.dim()])),
        &ocv,
        &datasets,
        lcfg,
    )
    .map_err(|e| CliError::Input(e.to_string()))?;
    create_dir(out)?;

    let started = Instant::now();
    let objective = |theta: &[f64]| {
        log_likelihood(&Params::from_slice(theta), &ocv, &datasets, lcfg).unwrap_or(f64::NAN)
    };
    let run =
        run_identification(objective, &search_box, &cfg.schedule, seed).map_err(|e| match e {
            OptError::InvalidSchedule(_) | OptError::InvalidBox(_) => {
                CliError::Input(e.to_string())
            }
            other => CliError::Optimization(other.to_string()),
        })?;
    let wall_time_s = started.elapsed().as_secs_f64();

    let trace_path = out.join("trace.csv");
    write_trace_csv(&run, create_file(&trace_path)?).map_err(|e| io_err(&trace_path, e))?;
    let regions_path = out.join("regions.csv");
    write_regions_csv(&run, create_file(&regions_path)?).map_err(|e| io_err(&regions_path, e))?;

    let best = run.incumbent();
    let result = IdentifyResult {
        theta_hat: Params::from_slice(&best.theta),
        log_likelihood: best.value,
        theta_hat_normalized: best.z.clone(),
        incumbent_iteration: best.iteration,
        evaluations: run.history.len(),
        seed,
        wall_time_s,
        schedule: cfg.schedule.clone(),
        likelihood: lcfg.clone(),
        search_box,
        ocv: cfg.ocv.clone(),
        datasets: data.iter().map(|d| d.source.clone()).collect(),
        final_hyperparameters: run.hyperparameters.clone(),
    };
    write_json(&out.join("result.json"), &result)?;
    info!(
        "L(theta_hat) = {:.6} after {} evaluations in {:.1} s",
        result.log_likelihood, result.evaluations, wall_time_s
    );
    Ok(result)
}

/// Reads parameters from either a bare parameter object or a `result.json`.
pub fn load_theta(path: &Path) -> Result<Params, CliError> {
    let value: serde_json::Value = read_json(path)?;
    let params = value.get("theta_hat").cloned().unwrap_or(value);
    let params: Params = serde_json::from_value(params).map_err(|e| io_err(path, e))?;
    params.validate().map_err(|e| io_err(path, e))?;
    Ok(params)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub prediction_file: String,
    pub max_abs_voltage_error: f64,
    pub max_abs_temperature_error: f64,
    pub rms_voltage_error: f64,
    pub rms_temperature_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub theta: Params,
    pub log_likelihood: f64,
    pub max_abs_voltage_error: f64,
    pub max_abs_temperature_error: f64,
    pub prediction_substeps: usize,
    pub datasets: Vec<DatasetReport>,
}

/// Predicts every dataset with `theta`, writing one prediction CSV per dataset
/// and `summary.json`. Predictions use the data-generation substep count;
/// `log_likelihood` is the identification objective itself.
pub fn evaluate(
    cfg: &RunConfig,
    theta: &Params,
    data: &[NamedDataset],
    out: &Path,
) -> Result<EvaluationSummary, CliError> {
    let ocv = cfg.ocv()?;
    let datasets: Vec<Dataset> = data.iter().map(|d| d.data.clone()).collect();
    let l = log_likelihood(theta, &ocv, &datasets, &cfg.likelihood)
        .map_err(|e| CliError::Input(e.to_string()))?;
    create_dir(out)?;
    let cell = Cell::new(theta, &ocv, cfg.likelihood.t_ref);

    let mut reports = Vec::with_capacity(data.len());
    for d in data {
        let profile = &d.data.profile;
        let predicted = integrate(&cell, &d.data.x0, profile, cfg.generation_substeps)
            .and_then(|traj| noiseless_outputs(&cell, &traj, profile))
            .map_err(|e| CliError::Optimization(format!("simulating {} failed: {e}", d.name)))?;
        let file = format!("{}_prediction.csv", d.name);
        let path = out.join(&file);
        let mut w = csv::Writer::from_writer(create_file(&path)?);
        let werr = |e: csv::Error| io_err(&path, e);
        w.write_record([
            "time_s",
            "current_A",
            "T_amb_K",
            "y_V",
            "y_T",
            "V_pred",
            "T_pred",
            "err_V",
            "err_T",
        ])
        .map_err(werr)?;
        let (mut max_v, mut max_t, mut ss_v, mut ss_t) = (0.0f64, 0.0f64, 0.0, 0.0);
        for (k, o) in predicted.iter().enumerate() {
            let (ev, et) = (d.data.y_v[k] - o.voltage, d.data.y_t[k] - o.t_surf);
            max_v = max_v.max(ev.abs());
            max_t = max_t.max(et.abs());
            ss_v += ev * ev;
            ss_t += et * et;
            let u = profile.input(k);
            let row = [
                profile.times()[k] + profile.dt(),
                u.current,
                u.t_amb,
                d.data.y_v[k],
                d.data.y_t[k],
                o.voltage,
                o.t_surf,
                ev,
                et,
            ];
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(werr)?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        let n = predicted.len().max(1) as f64;
        reports.push(DatasetReport {
            name: d.name.clone(),
            prediction_file: file,
            max_abs_voltage_error: max_v,
            max_abs_temperature_error: max_t,
            rms_voltage_error: (ss_v / n).sqrt(),
            rms_temperature_error: (ss_t / n).sqrt(),
        });
    }
    let summary = EvaluationSummary {
        theta: *theta,
        log_likelihood: l,
        max_abs_voltage_error: reports
            .iter()
            .map(|r| r.max_abs_voltage_error)
            .fold(0.0, f64::max),
        max_abs_temperature_error: reports
            .iter()
            .map(|r| r.max_abs_temperature_error)
            .fold(0.0, f64::max),
        prediction_substeps: cfg.generation_substeps,
        datasets: reports,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Writes the state trajectory `x_0 .. x_N` with SoC and terminal voltage.
/// Row `k` pairs the state at `t_k` with the input held over `[t_k, t_k+1)`;
/// the final row reuses the last input.
pub fn simulate(
    theta: &Params,
    ocv: &OcvCurve,
    t_ref: f64,
    profile: &CurrentProfile,
    x0: &State,
    substeps: usize,
    out: &Path,
) -> Result<usize, CliError> {
    let cell = Cell::new(theta, ocv, t_ref);
    let traj = integrate(&cell, x0, profile, substeps)
        .map_err(|e| CliError::Optimization(format!("simulation failed: {e}")))?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv::Writer::from_writer(create_file(out)?);
    let werr = |e: csv::Error| io_err(out, e);
    w.write_record(["time_s", "V_b", "V_s", "T_c", "T_s", "SoC", "V"])
        .map_err(werr)?;
    let n = profile.len();
    for (k, x) in traj.iter().enumerate() {
        let u: Input = profile.input(k.min(n - 1));
        let v = cell
            .output(x, &u)
            .map_err(|e| CliError::Optimization(format!("simulation failed: {e}")))?
            .voltage;
        let row = [
            k as f64 * profile.dt(),
            x.v_b,
            x.v_s,
            x.t_c,
            x.t_s,
            cell.soc(x),
            v,
        ];
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(werr)?;
    }
    w.flush().map_err(|e| io_err(out, e))?;
    Ok(traj.len())
}
