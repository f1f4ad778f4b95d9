//! Fixed-step integration of the cell model, current-profile ingestion and
//! synthetic measurement generation.
//!
//! Time indexing: a profile with `N` samples defines `N` sampling intervals.
//! Sample `k` is held constant over `[t_k, t_k + dt)`; the trajectory holds the
//! `N + 1` states at `t_0 .. t_N`, and measurement `k` is taken at the end of
//! interval `k`, i.e. from state `k + 1` with input `k`.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{Cell, Input, ModelError, Output, State};

/// Identification-time integrator substeps per sampling interval.
pub const IDENTIFICATION_SUBSTEPS: usize = 10;
/// Substeps used when synthesising ground-truth data.
pub const GENERATION_SUBSTEPS: usize = 100;

/// Discharge current bounds applied to scaled and synthetic profiles.
pub const MAX_DISCHARGE_A: f64 = 4.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    times: Vec<f64>,
    currents: Vec<f64>,
    t_amb: Vec<f64>,
    dt: f64,
}

impl CurrentProfile {
    /// Builds a profile from per-sample arrays. Times must start at 0 and be
    /// uniformly spaced.
    pub fn new(times: Vec<f64>, currents: Vec<f64>, t_amb: Vec<f64>) -> Result<Self, SimError> {
        if times.is_empty() {
            return Err(SimError::InvalidProfile("empty profile".into()));
        }
        if times.len() != currents.len() || times.len() != t_amb.len() {
            return Err(SimError::InvalidProfile(format!(
                "length mismatch: {} times, {} currents, {} ambient temperatures",
                times.len(),
                currents.len(),
                t_amb.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(SimError::InvalidProfile(format!(
                "times must start at 0, got {}",
                times[0]
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::InvalidProfile(
                "times must be strictly increasing".into(),
            ));
        }
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            1.0
        };
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * dt.max(1.0) * (k as f64 + 1.0) {
                return Err(SimError::InvalidProfile(format!(
                    "non-uniform sampling at sample {k}"
                )));
            }
        }
        if currents.iter().any(|c| !c.is_finite()) {
            return Err(SimError::InvalidProfile("non-finite current".into()));
        }
        if t_amb.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(SimError::InvalidProfile(
                "ambient temperature must be positive".into(),
            ));
        }
        Ok(CurrentProfile {
            times,
            currents,
            t_amb,
            dt,
        })
    }

    /// Uniformly sampled profile at constant ambient temperature.
    pub fn uniform(currents: Vec<f64>, dt: f64, t_amb: f64) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidProfile(format!(
                "sample spacing must be positive, got {dt}"
            )));
        }
        let n = currents.len();
        let times = (0..n).map(|k| k as f64 * dt).collect();
        CurrentProfile::new(times, currents, vec![t_amb; n])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn t_amb(&self) -> &[f64] {
        &self.t_amb
    }

    pub fn input(&self, k: usize) -> Input {
        Input {
            current: self.currents[k],
            t_amb: self.t_amb[k],
        }
    }

    /// Replaces the ambient temperature with a constant.
    pub fn with_ambient(mut self, t_amb: f64) -> Result<Self, SimError> {
        if !(t_amb.is_finite() && t_amb > 0.0) {
            return Err(SimError::InvalidProfile(
                "ambient temperature must be positive".into(),
            ));
        }
        self.t_amb = vec![t_amb; self.times.len()];
        Ok(self)
    }
}

#[inline]
fn rk4_step(cell: &Cell<'_>, x: &State, u: &Input, h: f64) -> Result<State, ModelError> {
    let k1 = cell.derivative(x, u)?;
    let k2 = cell.derivative(&x.step(0.5 * h, &k1), u)?;
    let k3 = cell.derivative(&x.step(0.5 * h, &k2), u)?;
    let k4 = cell.derivative(&x.step(h, &k3), u)?;
    let w = h / 6.0;
    Ok(State {
        v_b: x.v_b + w * (k1.v_b + 2.0 * k2.v_b + 2.0 * k3.v_b + k4.v_b),
        v_s: x.v_s + w * (k1.v_s + 2.0 * k2.v_s + 2.0 * k3.v_s + k4.v_s),
        t_c: x.t_c + w * (k1.t_c + 2.0 * k2.t_c + 2.0 * k3.t_c + k4.t_c),
        t_s: x.t_s + w * (k1.t_s + 2.0 * k2.t_s + 2.0 * k3.t_s + k4.t_s),
    })
}

/// Runs the classical RK4 scheme over the profile and hands each end-of-interval
/// state to `visit(k, &state)` for `k = 0 .. N`.
pub fn integrate_each<F>(
    cell: &Cell<'_>,
    x0: &State,
    profile: &CurrentProfile,
    substeps: usize,
    mut visit: F,
) -> Result<(), SimError>
where
    F: FnMut(usize, &State),
{
    if substeps == 0 {
        return Err(SimError::InvalidProfile(
            "substeps must be at least 1".into(),
        ));
    }
    if !x0.is_finite() {
        return Err(SimError::Diverged { step: 0 });
    }
    if !(x0.t_c > 0.0) || !(x0.t_s > 0.0) {
        return Err(ModelError::NonPositiveTemperature(x0.t_c.min(x0.t_s)).into());
    }
    let h = profile.dt() / substeps as f64;
    let mut x = *x0;
    for k in 0..profile.len() {
        let u = profile.input(k);
        for _ in 0..substeps {
            // the state left the physical domain mid-run
            x = rk4_step(cell, &x, &u, h).map_err(|_| SimError::Diverged { step: k })?;
        }
        if !x.is_finite() {
            return Err(SimError::Diverged { step: k });
        }
        visit(k, &x);
    }
    Ok(())
}

/// State trajectory `x_0 .. x_N` (length `profile.len() + 1`).
pub fn integrate(
    cell: &Cell<'_>,
    x0: &State,
    profile: &CurrentProfile,
    substeps: usize,
) -> Result<Vec<State>, SimError> {
    let mut trajectory = Vec::with_capacity(profile.len() + 1);
    trajectory.push(*x0);
    integrate_each(cell, x0, profile, substeps, |_, x| trajectory.push(*x))?;
    Ok(trajectory)
}

/// Noiseless measurements `h(x_{k+1}, u_k)` along a trajectory from [`integrate`].
pub fn noiseless_outputs(
    cell: &Cell<'_>,
    trajectory: &[State],
    profile: &CurrentProfile,
) -> Result<Vec<Output>, SimError> {
    if trajectory.len() != profile.len() + 1 {
        return Err(SimError::InvalidProfile(
            "trajectory does not match profile".into(),
        ));
    }
    (0..profile.len())
        .map(|k| {
            cell.output(&trajectory[k + 1], &profile.input(k))
                .map_err(SimError::from)
        })
        .collect()
}

/// Measurement-noise variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariances {
    /// Voltage noise variance [V^2].
    pub r_v: f64,
    /// Temperature noise variance [K^2].
    pub r_t: f64,
}

impl NoiseVariances {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.r_v > 0.0 && self.r_v.is_finite() && self.r_t > 0.0 && self.r_t.is_finite()) {
            return Err(SimError::InvalidDataset(format!(
                "noise variances must be positive, got R_V={} R_T={}",
                self.r_v, self.r_t
            )));
        }
        Ok(())
    }
}

impl Default for NoiseVariances {
    fn default() -> Self {
        NoiseVariances {
            r_v: 1e-4,
            r_t: 1e-3,
        }
    }
}

/// Inputs and voltage/temperature measurements of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub profile: CurrentProfile,
    pub y_v: Vec<f64>,
    pub y_t: Vec<f64>,
    pub noise: NoiseVariances,
    pub x0: State,
}

impl Dataset {
    pub fn new(
        profile: CurrentProfile,
        y_v: Vec<f64>,
        y_t: Vec<f64>,
        noise: NoiseVariances,
        x0: State,
    ) -> Result<Self, SimError> {
        if y_v.len() != profile.len() || y_t.len() != profile.len() {
            return Err(SimError::InvalidDataset(format!(
                "{} samples in profile but {} voltage and {} temperature measurements",
                profile.len(),
                y_v.len(),
                y_t.len()
            )));
        }
        noise.validate()?;
        if !x0.is_finite() || x0.t_c <= 0.0 || x0.t_s <= 0.0 {
            return Err(SimError::InvalidDataset(format!(
                "invalid initial state {x0:?}"
            )));
        }
        Ok(Dataset {
            profile,
            y_v,
            y_t,
            noise,
            x0,
        })
    }

    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    /// Writes `time_s,current_A,T_amb_K,y_V,y_T`; `time_s` is the measurement
    /// time, one sample spacing after the start of the interval.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "current_A", "T_amb_K", "y_V", "y_T"])?;
        let p = &self.profile;
        for k in 0..self.len() {
            w.write_record([
                (p.times[k] + p.dt).to_string(),
                p.currents[k].to_string(),
                p.t_amb[k].to_string(),
                self.y_v[k].to_string(),
                self.y_t[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| SimError::Io {
            path: "<dataset>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        reader: R,
        noise: NoiseVariances,
        x0: State,
    ) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["time_s", "current_A", "T_amb_K", "y_V", "y_T"];
        if headers.len() != expected.len() || headers.iter().zip(expected).any(|(a, b)| a != b) {
            return Err(SimError::InvalidDataset(format!(
                "expected header {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (c, field) in record.iter().enumerate() {
                let v = field.parse::<f64>().map_err(|e| {
                    SimError::InvalidDataset(format!(
                        "row {}, column {}: {e}",
                        row + 1,
                        expected[c]
                    ))
                })?;
                cols[c].push(v);
            }
        }
        let [time, current, t_amb, y_v, y_t] = cols;
        if time.is_empty() {
            return Err(SimError::InvalidDataset("no rows".into()));
        }
        let dt = time[0];
        if !(dt > 0.0) {
            return Err(SimError::InvalidDataset(
                "first measurement time must be positive".into(),
            ));
        }
        let times = time.iter().map(|t| t - dt).collect();
        let profile = CurrentProfile::new(times, current, t_amb)?;
        Dataset::new(profile, y_v, y_t, noise, x0)
    }
}

/// Simulates `cell` over `profile` and adds independent Gaussian measurement
/// noise drawn from `seed`.
pub fn generate_dataset(
    cell: &Cell<'_>,
    x0: &State,
    profile: &CurrentProfile,
    noise: NoiseVariances,
    seed: u64,
    substeps: usize,
) -> Result<Dataset, SimError> {
    noise.validate()?;
    let trajectory = integrate(cell, x0, profile, substeps)?;
    let outputs = noiseless_outputs(cell, &trajectory, profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sd_v, sd_t) = (noise.r_v.sqrt(), noise.r_t.sqrt());
    let mut y_v = Vec::with_capacity(outputs.len());
    let mut y_t = Vec::with_capacity(outputs.len());
    for o in &outputs {
        let e_v: f64 = rng.sample(StandardNormal);
        let e_t: f64 = rng.sample(StandardNormal);
        y_v.push(o.voltage + sd_v * e_v);
        y_t.push(o.t_surf + sd_t * e_t);
    }
    Dataset::new(profile.clone(), y_v, y_t, noise, *x0)
}

/// Parses a `time_s,value` CSV, resamples it to a 1 s grid and maps the values
/// affinely onto `[scale_min, scale_max]` amperes of discharge current.
pub fn profile_from_csv_reader<R: Read>(
    reader: R,
    scale_min: f64,
    scale_max: f64,
    t_amb: f64,
) -> Result<CurrentProfile, SimError> {
    if !(scale_min.is_finite() && scale_max.is_finite() && scale_max > scale_min) {
        return Err(SimError::InvalidProfile(format!(
            "scale range [{scale_min}, {scale_max}] is empty"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "value" {
        return Err(SimError::InvalidProfile(
            "expected header time_s,value".into(),
        ));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    SimError::InvalidProfile(format!("row {}: bad number {s:?}", row + 1))
                })
        };
        times.push(parse(&record[0])?);
        values.push(parse(&record[1])?);
    }
    if times.is_empty() {
        return Err(SimError::InvalidProfile("empty profile file".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::InvalidProfile(
            "time_s must be strictly increasing".into(),
        ));
    }

    let start = times[0];
    let n = (times[times.len() - 1] - start).floor() as usize + 1;
    let mut resampled = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = start + k as f64;
        while j + 1 < times.len() && times[j + 1] <= t {
            j += 1;
        }
        let v = if j + 1 < times.len() && times[j] < t {
            let w = (t - times[j]) / (times[j + 1] - times[j]);
            values[j] + w * (values[j + 1] - values[j])
        } else {
            values[j]
        };
        resampled.push(v);
    }

    let lo = resampled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = resampled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(SimError::InvalidProfile("value column is constant".into()));
    }
    let currents = resampled
        .into_iter()
        .map(|v| {
            let scaled = scale_min + (v - lo) / (hi - lo) * (scale_max - scale_min);
            // discharge is negative; `+ 0.0` turns -0.0 into 0.0
            -scaled + 0.0
        })
        .collect();
    CurrentProfile::uniform(currents, 1.0, t_amb)
}

pub fn load_profile(
    path: &Path,
    scale_min: f64,
    scale_max: f64,
    t_amb: f64,
) -> Result<CurrentProfile, SimError> {
    let file = std::fs::File::open(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    profile_from_csv_reader(file, scale_min, scale_max, t_amb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Alternating 60 s blocks at full discharge and rest.
    Pulse,
    /// Gaussian random walk on a 1 s grid, clipped to the discharge range.
    RandomWalk,
}

/// Random-walk increment standard deviation [A per sample].
const RANDOM_WALK_STEP_A: f64 = 0.5;

/// Synthetic 1 s discharge profile standing in for a drive cycle.
pub fn synth_profile(
    kind: SynthKind,
    duration_s: usize,
    seed: u64,
    t_amb: f64,
) -> Result<CurrentProfile, SimError> {
    if duration_s < 60 {
        return Err(SimError::InvalidProfile(format!(
            "duration must be at least 60 s, got {duration_s}"
        )));
    }
    let currents = match kind {
        SynthKind::Pulse => (0..duration_s)
            .map(|k| {
                if (k / 60) % 2 == 0 {
                    -MAX_DISCHARGE_A
                } else {
                    0.0
                }
            })
            .collect(),
        SynthKind::RandomWalk => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut level = -0.5 * MAX_DISCHARGE_A;
            (0..duration_s)
                .map(|_| {
                    let current = level;
                    let step: f64 = rng.sample(StandardNormal);
                    level = (level + RANDOM_WALK_STEP_A * step).clamp(-MAX_DISCHARGE_A, 0.0);
                    current
                })
                .collect()
        }
    };
    CurrentProfile::uniform(currents, 1.0, t_amb)
}
