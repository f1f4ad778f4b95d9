//! NDC-T cell model: a nonlinear double-capacitor electrical circuit coupled
//! with a two-node lumped thermal circuit through Arrhenius resistances and
//! a core heat source.
//!
//! State is `[V_b, V_s, T_c, T_s]`, input is `[I, T_amb]` with `I < 0` while
//! discharging. All temperatures are in kelvin.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of identifiable parameters.
pub const N_PARAMS: usize = 10;

/// Reference temperature used by the Arrhenius coupling unless configured otherwise.
pub const DEFAULT_T_REF: f64 = 298.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("parameter {name} must be finite and positive, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("invalid OCV curve: {0}")]
    InvalidOcv(String),
}

/// The ten physical parameters of the NDC-T model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(rename = "C_b")]
    pub c_b: f64,
    #[serde(rename = "C_s")]
    pub c_s: f64,
    #[serde(rename = "R_b")]
    pub r_b: f64,
    #[serde(rename = "R_o")]
    pub r_o: f64,
    #[serde(rename = "C_core")]
    pub c_core: f64,
    #[serde(rename = "C_surf")]
    pub c_surf: f64,
    #[serde(rename = "R_core")]
    pub r_core: f64,
    #[serde(rename = "R_surf")]
    pub r_surf: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Params {
    /// Parameter names in vector order.
    pub const NAMES: [&'static str; N_PARAMS] = [
        "C_b", "C_s", "R_b", "R_o", "C_core", "C_surf", "R_core", "R_surf", "kappa1", "kappa2",
    ];

    /// Parameters of the 3.3 Ah NCA/graphite reference cell.
    pub const REFERENCE_CELL: Params = Params {
        c_b: 10037.0,
        c_s: 973.0,
        r_b: 0.019,
        r_o: 0.026,
        c_core: 40.0,
        c_surf: 10.0,
        r_core: 4.0,
        r_surf: 7.0,
        kappa1: 30.0,
        kappa2: 70.0,
    };

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [
            self.c_b,
            self.c_s,
            self.r_b,
            self.r_o,
            self.c_core,
            self.c_surf,
            self.r_core,
            self.r_surf,
            self.kappa1,
            self.kappa2,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Params {
        assert_eq!(
            v.len(),
            N_PARAMS,
            "parameter vector must have {N_PARAMS} entries"
        );
        Params {
            c_b: v[0],
            c_s: v[1],
            r_b: v[2],
            r_o: v[3],
            c_core: v[4],
            c_surf: v[5],
            r_core: v[6],
            r_surf: v[7],
            kappa1: v[8],
            kappa2: v[9],
        }
    }

    /// Checks that every entry is finite and strictly positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub v_b: f64,
    pub v_s: f64,
    pub t_c: f64,
    pub t_s: f64,
}

impl State {
    pub fn new(v_b: f64, v_s: f64, t_c: f64, t_s: f64) -> Self {
        State { v_b, v_s, t_c, t_s }
    }

    /// Rest state at a uniform charge level and temperature.
    pub fn at_rest(level: f64, temperature: f64) -> Self {
        State::new(level, level, temperature, temperature)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.v_b, self.v_s, self.t_c, self.t_s]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State::new(a[0], a[1], a[2], a[3])
    }

    /// `self + h * d`
    #[inline]
    pub fn step(&self, h: f64, d: &State) -> State {
        State {
            v_b: self.v_b + h * d.v_b,
            v_s: self.v_s + h * d.v_s,
            t_c: self.t_c + h * d.t_c,
            t_s: self.t_s + h * d.t_s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v_b.is_finite() && self.v_s.is_finite() && self.t_c.is_finite() && self.t_s.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Input {
    /// Current in amperes, negative while discharging.
    pub current: f64,
    /// Ambient temperature in kelvin.
    pub t_amb: f64,
}

/// Noiseless measurement `h(x, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Output {
    pub voltage: f64,
    pub t_surf: f64,
}

/// Monotone piecewise-linear open-circuit-voltage map, clamped outside its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl OcvCurve {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if breakpoints.len() != values.len() {
            return Err(ModelError::InvalidOcv(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.len() < 2 {
            return Err(ModelError::InvalidOcv(
                "need at least two breakpoints".into(),
            ));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidOcv("non-finite entry".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidOcv(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidOcv(
                "values must be strictly increasing".into(),
            ));
        }
        Ok(OcvCurve {
            breakpoints,
            values,
        })
    }

    /// Built-in NCA/graphite-like curve on `V_s = 0, 0.1, ..., 1.0`, 3.0 V to 4.2 V.
    pub fn nca_default() -> Self {
        let breakpoints = (0..=10).map(|i| i as f64 / 10.0).collect();
        let values = vec![
            3.00, 3.45, 3.55, 3.62, 3.68, 3.74, 3.82, 3.90, 3.98, 4.08, 4.20,
        ];
        OcvCurve::new(breakpoints, values).expect("built-in OCV table is valid")
    }

    /// Reads a two-column CSV (`V_s`, OCV volts) with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| ModelError::InvalidOcv(e.to_string()))?;
            if record.len() != 2 {
                return Err(ModelError::InvalidOcv(format!(
                    "row {}: expected 2 columns",
                    i + 1
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| ModelError::InvalidOcv(format!("row {}: {e}", i + 1)))
            };
            breakpoints.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        OcvCurve::new(breakpoints, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ModelError::InvalidOcv(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        let n = bp.len();
        if x <= bp[0] {
            return self.values[0];
        }
        if x >= bp[n - 1] {
            return self.values[n - 1];
        }
        // first index with bp[i] > x; guaranteed in 1..n
        let i = bp.partition_point(|&b| b <= x);
        let (x0, x1) = (bp[i - 1], bp[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

impl Default for OcvCurve {
    fn default() -> Self {
        Self::nca_default()
    }
}

/// Temperature-dependent resistance `R_base * exp(kappa * (1/T_c - 1/T_ref))`.
#[inline]
pub fn arrhenius_resistance(
    r_base: f64,
    kappa: f64,
    t_c: f64,
    t_ref: f64,
) -> Result<f64, ModelError> {
    if !(t_c > 0.0) {
        return Err(ModelError::NonPositiveTemperature(t_c));
    }
    if !(t_ref > 0.0) {
        return Err(ModelError::NonPositiveTemperature(t_ref));
    }
    Ok(r_base * (kappa * (1.0 / t_c - 1.0 / t_ref)).exp())
}

/// Heat generated in the core, `I * (V - h_OCV(SoC))`.
#[inline]
pub fn heat_generation(current: f64, voltage: f64, soc: f64, ocv: &OcvCurve) -> f64 {
    current * (voltage - ocv.eval(soc))
}

/// State of charge as a fraction (multiply by 100 for percent).
#[inline]
pub fn soc(v_b: f64, v_s: f64, c_b: f64, c_s: f64) -> f64 {
    (c_b * v_b + c_s * v_s) / (c_b + c_s)
}

/// A parameterised cell: parameters, OCV map and Arrhenius reference temperature.
#[derive(Debug, Clone, Copy)]
pub struct Cell<'a> {
    pub params: &'a Params,
    pub ocv: &'a OcvCurve,
    pub t_ref: f64,
}

impl<'a> Cell<'a> {
    pub fn new(params: &'a Params, ocv: &'a OcvCurve, t_ref: f64) -> Self {
        Cell { params, ocv, t_ref }
    }

    pub fn soc(&self, x: &State) -> f64 {
        soc(x.v_b, x.v_s, self.params.c_b, self.params.c_s)
    }

    pub fn output(&self, x: &State, u: &Input) -> Result<Output, ModelError> {
        let r_o = arrhenius_resistance(self.params.r_o, self.params.kappa1, x.t_c, self.t_ref)?;
        Ok(Output {
            voltage: self.ocv.eval(x.v_s) + r_o * u.current,
            t_surf: x.t_s,
        })
    }

    /// Time derivative `f(x, u)`.
    pub fn derivative(&self, x: &State, u: &Input) -> Result<State, ModelError> {
        let p = self.params;
        let r_b = arrhenius_resistance(p.r_b, p.kappa2, x.t_c, self.t_ref)?;
        let voltage = self.output(x, u)?.voltage;
        let q_gen = heat_generation(u.current, voltage, self.soc(x), self.ocv);

        let flow = (x.v_s - x.v_b) / r_b;
        let conduction = (x.t_s - x.t_c) / p.r_core;
        let convection = (u.t_amb - x.t_s) / p.r_surf;
        Ok(State {
            v_b: flow / p.c_b,
            v_s: (u.current - flow) / p.c_s,
            t_c: (conduction + q_gen) / p.c_core,
            t_s: (convection - conduction) / p.c_surf,
        })
    }
}

/// Free-function form of [`Cell::derivative`].
pub fn state_derivative(
    x: &State,
    u: &Input,
    params: &Params,
    ocv: &OcvCurve,
    t_ref: f64,
) -> Result<State, ModelError> {
    Cell::new(params, ocv, t_ref).derivative(x, u)
}

/// Free-function form of [`Cell::output`].
pub fn output(
    x: &State,
    u: &Input,
    params: &Params,
    ocv: &OcvCurve,
    t_ref: f64,
) -> Result<Output, ModelError> {
    Cell::new(params, ocv, t_ref).output(x, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TRUTH: Params = Params::REFERENCE_CELL;

    #[test]
    fn arrhenius_examples() {
        assert_eq!(
            arrhenius_resistance(0.026, 30.0, 298.0, 298.0).unwrap(),
            0.026
        );
        assert_eq!(arrhenius_resistance(1.0, 0.0, 350.0, 298.0).unwrap(), 1.0);
        // 0.019 * exp(70 * (1/283 - 1/298)), evaluated at 40 digits
        let r = arrhenius_resistance(0.019, 70.0, 283.0, 298.0).unwrap();
        assert_relative_eq!(r, 0.019_238_038_166_277_41, max_relative = 1e-14);
    }

    #[test]
    fn arrhenius_rejects_non_positive_temperature() {
        assert!(matches!(
            arrhenius_resistance(0.02, 30.0, 0.0, 298.0),
            Err(ModelError::NonPositiveTemperature(_))
        ));
        assert!(arrhenius_resistance(0.02, 30.0, -5.0, 298.0).is_err());
        assert!(arrhenius_resistance(0.02, 30.0, 300.0, 0.0).is_err());
    }

    #[test]
    fn heat_generation_examples() {
        let ocv = OcvCurve::nca_default();
        assert_eq!(heat_generation(0.0, 3.7, 0.5, &ocv), 0.0);
        assert_eq!(heat_generation(-4.0, ocv.eval(0.5), 0.5, &ocv), 0.0);
        // h_OCV(0.5) = 3.6 on this two-point table
        let linear = OcvCurve::new(vec![0.0, 1.0], vec![3.2, 4.0]).unwrap();
        assert_relative_eq!(
            heat_generation(-4.0, 3.5, 0.5, &linear),
            0.4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn soc_endpoints_and_weighting() {
        assert_eq!(soc(1.0, 1.0, TRUTH.c_b, TRUTH.c_s), 1.0);
        assert_eq!(soc(0.0, 0.0, TRUTH.c_b, TRUTH.c_s), 0.0);
        assert_relative_eq!(
            soc(0.8, 0.6, 10037.0, 973.0),
            0.782_325_158_946_412_4,
            max_relative = 1e-14
        );
    }

    #[test]
    fn ocv_rejects_non_monotone_tables() {
        assert!(OcvCurve::new(vec![0.0, 0.5, 0.5], vec![3.0, 3.5, 4.0]).is_err());
        assert!(OcvCurve::new(vec![0.0, 0.5, 1.0], vec![3.0, 3.5, 3.4]).is_err());
        assert!(OcvCurve::new(vec![0.0], vec![3.0]).is_err());
        assert!(OcvCurve::new(vec![0.0, 1.0], vec![3.0]).is_err());
    }

    #[test]
    fn ocv_interpolates_and_clamps() {
        let ocv = OcvCurve::nca_default();
        assert_eq!(ocv.eval(-0.3), 3.0);
        assert_eq!(ocv.eval(1.7), 4.2);
        assert_eq!(ocv.eval(0.0), 3.0);
        assert_eq!(ocv.eval(1.0), 4.2);
        assert_relative_eq!(ocv.eval(0.05), 3.225, max_relative = 1e-12);
        assert_relative_eq!(ocv.eval(0.95), 4.14, max_relative = 1e-12);
    }

    #[test]
    fn ocv_csv_requires_header_and_two_columns() {
        let ocv = OcvCurve::from_csv_reader("v_s,ocv\n0,3.0\n0.5,3.7\n1,4.2\n".as_bytes()).unwrap();
        assert_eq!(ocv.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(ocv.values(), &[3.0, 3.7, 4.2]);
        assert!(OcvCurve::from_csv_reader("v_s,ocv\n0,3.0,1\n1,4.2,2\n".as_bytes()).is_err());
        assert!(OcvCurve::from_csv_reader("v_s,ocv\n0,abc\n1,4.2\n".as_bytes()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(TRUTH.validate().is_ok());
        let mut p = TRUTH;
        p.r_core = 0.0;
        assert_eq!(
            p.validate(),
            Err(ModelError::InvalidParameter {
                name: "R_core",
                value: 0.0
            })
        );
        p.r_core = f64::NAN;
        assert!(p.validate().is_err());
        assert_eq!(Params::from_slice(&TRUTH.to_array()), TRUTH);
    }

    #[test]
    fn output_examples() {
        let ocv = OcvCurve::nca_default();
        let cell = Cell::new(&TRUTH, &ocv, DEFAULT_T_REF);
        let x = State::new(0.7, 0.65, 305.0, 301.0);
        let rest = cell
            .output(
                &x,
                &Input {
                    current: 0.0,
                    t_amb: 298.0,
                },
            )
            .unwrap();
        assert_eq!(rest.voltage, ocv.eval(0.65));
        let x = State::new(0.7, 0.65, 298.0, 301.0);
        let loaded = cell
            .output(
                &x,
                &Input {
                    current: -4.0,
                    t_amb: 298.0,
                },
            )
            .unwrap();
        assert_relative_eq!(loaded.voltage, ocv.eval(0.65) - 0.104, max_relative = 1e-14);
        assert_eq!(loaded.t_surf.to_bits(), x.t_s.to_bits());
    }

    #[test]
    fn rc_chain_structure_at_zero_current() {
        let ocv = OcvCurve::nca_default();
        let x = State::new(0.9, 0.8, 298.0, 298.0);
        let u = Input {
            current: 0.0,
            t_amb: 298.0,
        };
        let d = state_derivative(&x, &u, &TRUTH, &ocv, DEFAULT_T_REF).unwrap();
        let r_b = arrhenius_resistance(TRUTH.r_b, TRUTH.kappa2, 298.0, DEFAULT_T_REF).unwrap();
        assert!(d.v_b < 0.0);
        assert_relative_eq!(d.v_b, (0.8 - 0.9) / (TRUTH.c_b * r_b), max_relative = 1e-14);
        assert_relative_eq!(TRUTH.c_b * d.v_b, -TRUTH.c_s * d.v_s, max_relative = 1e-12);
    }

    /// Straight transcription of the two matrix ODE blocks, written independently
    /// of `Cell::derivative`. Returns each row's value and the sum of the absolute
    /// values of its terms, which sets the rounding scale for that row.
    fn matrix_form_derivative(
        x: [f64; 4],
        i: f64,
        t_amb: f64,
        p: &Params,
        ocv: &OcvCurve,
        t_ref: f64,
    ) -> ([f64; 4], [f64; 4]) {
        let [vb, vs, tc, ts] = x;
        let rbt = p.r_b * (p.kappa2 * (1.0 / tc - 1.0 / t_ref)).exp();
        let rot = p.r_o * (p.kappa1 * (1.0 / tc - 1.0 / t_ref)).exp();
        let a_e = [
            [-1.0 / (p.c_b * rbt), 1.0 / (p.c_b * rbt)],
            [1.0 / (p.c_s * rbt), -1.0 / (p.c_s * rbt)],
        ];
        let b_e = [0.0, 1.0 / p.c_s];
        let v = ocv.eval(vs) + rot * i;
        let soc = (p.c_b * vb + p.c_s * vs) / (p.c_b + p.c_s);
        let q = i * (v - ocv.eval(soc));
        let a_t = [
            [-1.0 / (p.r_core * p.c_core), 1.0 / (p.r_core * p.c_core)],
            [
                1.0 / (p.r_core * p.c_surf),
                -1.0 / (p.r_surf * p.c_surf) - 1.0 / (p.r_core * p.c_surf),
            ],
        ];
        let b_t = [[1.0 / p.c_core, 0.0], [0.0, 1.0 / (p.r_surf * p.c_surf)]];
        let rows = [
            [a_e[0][0] * vb, a_e[0][1] * vs, b_e[0] * i, 0.0],
            [a_e[1][0] * vb, a_e[1][1] * vs, b_e[1] * i, 0.0],
            [
                a_t[0][0] * tc,
                a_t[0][1] * ts,
                b_t[0][0] * q,
                b_t[0][1] * t_amb,
            ],
            [
                a_t[1][0] * tc,
                a_t[1][1] * ts,
                b_t[1][0] * q,
                b_t[1][1] * t_amb,
            ],
        ];
        let value = rows.map(|r| r[0] + r[1] + r[2] + r[3]);
        let scale = rows.map(|r| r.iter().map(|t| t.abs()).sum::<f64>());
        (value, scale)
    }

    #[test]
    fn derivative_matches_matrix_transcription_at_reference_cell() {
        let ocv = OcvCurve::nca_default();
        let x = State::new(1.0, 1.0, 313.0, 313.0);
        let u = Input {
            current: -4.0,
            t_amb: 313.0,
        };
        let d = state_derivative(&x, &u, &TRUTH, &ocv, DEFAULT_T_REF)
            .unwrap()
            .to_array();
        let (oracle, scale) =
            matrix_form_derivative(x.to_array(), -4.0, 313.0, &TRUTH, &ocv, DEFAULT_T_REF);
        for k in 0..4 {
            assert!(
                (d[k] - oracle[k]).abs() <= 1e-12 * scale[k],
                "component {k}: {} vs {}",
                d[k],
                oracle[k]
            );
        }
        // at T_c = T_s = T_amb only ohmic heating drives the core
        assert!(d[2] > 0.0);
        assert_eq!(d[3], 0.0);
    }

    #[test]
    fn derivative_propagates_domain_error() {
        let ocv = OcvCurve::nca_default();
        let x = State::new(1.0, 1.0, 0.0, 298.0);
        let u = Input {
            current: -1.0,
            t_amb: 298.0,
        };
        assert!(state_derivative(&x, &u, &TRUTH, &ocv, DEFAULT_T_REF).is_err());
    }

    proptest! {
        #[test]
        fn equilibrium_is_a_fixed_point(v in -0.1f64..1.1, t_amb in 250.0f64..340.0) {
            let ocv = OcvCurve::nca_default();
            let x = State::at_rest(v, t_amb);
            let d = state_derivative(&x, &Input { current: 0.0, t_amb }, &TRUTH, &ocv, DEFAULT_T_REF).unwrap();
            prop_assert_eq!(d.to_array(), [0.0; 4]);
        }

        #[test]
        fn arrhenius_decreases_with_temperature(kappa in 0.1f64..200.0, t in 250.0f64..340.0, dt in 0.01f64..30.0) {
            let lo = arrhenius_resistance(0.02, kappa, t, DEFAULT_T_REF).unwrap();
            let hi = arrhenius_resistance(0.02, kappa, t + dt, DEFAULT_T_REF).unwrap();
            prop_assert!(hi < lo);
            prop_assert!(hi > 0.0);
        }

        #[test]
        fn derivative_agrees_with_matrix_form(
            vb in 0.0f64..1.0, vs in 0.0f64..1.0, tc in 270.0f64..330.0, ts in 270.0f64..330.0,
            i in -4.0f64..1.0, t_amb in 270.0f64..330.0,
        ) {
            let ocv = OcvCurve::nca_default();
            let x = State::new(vb, vs, tc, ts);
            let d = state_derivative(&x, &Input { current: i, t_amb }, &TRUTH, &ocv, DEFAULT_T_REF).unwrap().to_array();
            let (o, scale) = matrix_form_derivative(x.to_array(), i, t_amb, &TRUTH, &ocv, DEFAULT_T_REF);
            for k in 0..4 {
                prop_assert!((d[k] - o[k]).abs() <= 1e-12 * scale[k]);
            }
        }

        #[test]
        fn output_is_pure(vs in -0.2f64..1.2, tc in 250.0f64..340.0, i in -5.0f64..5.0) {
            let ocv = OcvCurve::nca_default();
            let x = State::new(0.5, vs, tc, 300.0);
            let u = Input { current: i, t_amb: 298.0 };
            let a = output(&x, &u, &TRUTH, &ocv, DEFAULT_T_REF).unwrap();
            let b = output(&x, &u, &TRUTH, &ocv, DEFAULT_T_REF).unwrap();
            prop_assert_eq!(a.voltage.to_bits(), b.voltage.to_bits());
            prop_assert_eq!(a.t_surf.to_bits(), x.t_s.to_bits());
        }
    }
}
