//! Run configuration loaded from JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndct_core::battery::{OcvCurve, Params, State};
use ndct_core::bayesopt::{Schedule, SearchBox};
use ndct_core::likelihood::LikelihoodConfig;
use ndct_core::simulator::{
    load_profile, synth_profile, CurrentProfile, NoiseVariances, SynthKind, GENERATION_SUBSTEPS,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where a dataset's current profile comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    Synth {
        synth: SynthKind,
        duration_s: usize,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        scale_min: f64,
        #[serde(default = "default_scale_max")]
        scale_max: f64,
    },
}

fn default_scale_max() -> f64 {
    ndct_core::simulator::MAX_DISCHARGE_A
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub profile: ProfileSource,
    pub t_amb: f64,
    /// Noise seed; derived from the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Charge level of the rest state the run starts from.
    #[serde(default = "default_initial_level")]
    pub initial_level: f64,
}

fn default_initial_level() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn x0(&self) -> State {
        State::at_rest(self.initial_level, self.t_amb)
    }

    pub fn noise_seed(&self, master: u64, index: usize) -> u64 {
        self.seed
            .unwrap_or_else(|| master.wrapping_add(1 + index as u64))
    }

    pub fn load_profile(&self) -> Result<CurrentProfile, CliError> {
        match &self.profile {
            ProfileSource::Synth {
                synth,
                duration_s,
                seed,
            } => synth_profile(*synth, *duration_s, *seed, self.t_amb)
                .map_err(|e| CliError::Input(format!("dataset {}: {e}", self.name))),
            ProfileSource::File {
                path,
                scale_min,
                scale_max,
            } => {
                if !path.exists() {
                    return Err(CliError::Input(format!(
                        "dataset {}: profile file {} not found",
                        self.name,
                        path.display()
                    )));
                }
                load_profile(path, *scale_min, *scale_max, self.t_amb).map_err(|e| {
                    CliError::Input(format!("dataset {}: {}: {e}", self.name, path.display()))
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Per-parameter `[lo, hi]`; all ten parameters when present.
    pub search_box: Option<BTreeMap<String, [f64; 2]>>,
    pub theta_true: Option<Params>,
    pub noise: NoiseVariances,
    pub schedule: Schedule,
    pub likelihood: LikelihoodConfig,
    pub generation_substeps: usize,
    /// Two-column OCV table; the built-in curve when absent.
    pub ocv: Option<PathBuf>,
    pub datasets: Vec<DatasetSpec>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            search_box: None,
            theta_true: Some(Params::REFERENCE_CELL),
            noise: NoiseVariances::default(),
            schedule: Schedule::default(),
            likelihood: LikelihoodConfig::default(),
            generation_substeps: GENERATION_SUBSTEPS,
            ocv: None,
            datasets: Vec::new(),
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out_dir = resolve(base, &cfg.out_dir);
        if let Some(ocv) = &cfg.ocv {
            cfg.ocv = Some(resolve(base, ocv));
        }
        for d in &mut cfg.datasets {
            if let ProfileSource::File { path, .. } = &mut d.profile {
                *path = resolve(base, path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(m));
        self.search_box()?;
        self.noise
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        self.likelihood
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        if self.generation_substeps == 0 {
            return bad("generation_substeps must be at least 1".into());
        }
        if let Some(p) = &self.ocv {
            if !p.exists() {
                return bad(format!("OCV file {} not found", p.display()));
            }
        }
        let mut names = std::collections::HashSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                return bad(format!("duplicate dataset name {}", d.name));
            }
            if d.t_amb.is_nan() || d.t_amb <= 0.0 {
                return bad(format!(
                    "dataset {}: ambient temperature must be positive",
                    d.name
                ));
            }
            if let ProfileSource::File { path, .. } = &d.profile {
                if !path.exists() {
                    return bad(format!(
                        "dataset {}: profile file {} not found",
                        d.name,
                        path.display()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn search_box(&self) -> Result<SearchBox, CliError> {
        let Some(map) = &self.search_box else {
            return Ok(SearchBox::cell_default());
        };
        let mut lo = Vec::with_capacity(Params::NAMES.len());
        let mut hi = Vec::with_capacity(Params::NAMES.len());
        for name in Params::NAMES {
            let [l, h] = map
                .get(name)
                .ok_or_else(|| CliError::Input(format!("search_box is missing {name}")))?;
            lo.push(*l);
            hi.push(*h);
        }
        if let Some(extra) = map.keys().find(|k| !Params::NAMES.contains(&k.as_str())) {
            return Err(CliError::Input(format!(
                "search_box has unknown parameter {extra}"
            )));
        }
        SearchBox::new(
            Params::NAMES.iter().map(|s| s.to_string()).collect(),
            lo,
            hi,
        )
        .map_err(|e| CliError::Input(e.to_string()))
    }

    pub fn ocv(&self) -> Result<OcvCurve, CliError> {
        match &self.ocv {
            None => Ok(OcvCurve::nca_default()),
            Some(p) => OcvCurve::from_csv_path(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        }
    }
}
