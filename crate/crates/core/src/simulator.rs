//! Synthetic stenter production lines.
//!
//! Residual moisture comes from integrating the fabric moisture balance
//!
//! ```text
//! dM/dt = (G_in M_in - G_out M_out - R_d m_f - M dm_f/dt) / m_f
//! R_d   = K (M - M_e)
//! K     = 0.00719 exp(-130.64 / T_a)        (T_a in kelvin)
//! ```
//!
//! with explicit Euler steps through the dryer chambers. Electricity, fabric
//! weight and fabric width are smooth polynomial-plus-interaction responses of
//! the controls; they are test fixtures with tunable coefficients, not
//! physical models. Lines differ through response coefficients (conditional
//! shift) and through which auxiliary sensors they carry (feature mismatch).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng;

const KELVIN_OFFSET: f64 = 273.15;

/// Drying constant in 1/s for air temperature `t_air` in kelvin.
pub fn drying_constant(t_air: f64) -> Result<f64> {
    if !(t_air > 0.0) {
        return Err(Error::OutOfRange {
            name: "air temperature (K)",
            value: t_air,
        });
    }
    Ok(0.00719 * (-130.64 / t_air).exp())
}

/// First-order drying rate `K (M - M_e)`.
pub fn drying_rate(moisture: f64, moisture_eq: f64, k: f64) -> f64 {
    k * (moisture - moisture_eq)
}

/// Instantaneous state of a fabric element in the dryer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DryingState {
    /// Moisture content M (mass fraction).
    pub moisture: f64,
    /// Fabric mass m_f (kg).
    pub fabric_mass: f64,
    /// G_in, G_out (kg/s).
    pub flow_in: f64,
    pub flow_out: f64,
    /// M_in, M_out.
    pub moisture_in: f64,
    pub moisture_out: f64,
    /// Equilibrium moisture content M_e.
    pub moisture_eq: f64,
    /// Air temperature T_a (K).
    pub air_temp: f64,
}

impl DryingState {
    /// A closed batch: no mass flow in or out.
    pub fn closed_batch(moisture: f64, moisture_eq: f64, air_temp: f64) -> Self {
        Self {
            moisture,
            fabric_mass: 1.0,
            flow_in: 0.0,
            flow_out: 0.0,
            moisture_in: moisture,
            moisture_out: moisture,
            moisture_eq,
            air_temp,
        }
    }
}

/// One explicit Euler step of the moisture balance.
///
/// A step that would carry M from above M_e to below it stops at M_e.
pub fn step_moisture(s: &DryingState, dt: f64) -> Result<DryingState> {
    if !(dt > 0.0) {
        return Err(Error::OutOfRange { name: "dt", value: dt });
    }
    if !(s.fabric_mass > 0.0) {
        return Err(Error::MassExhausted(s.fabric_mass));
    }
    let k = drying_constant(s.air_temp)?;
    let rd = drying_rate(s.moisture, s.moisture_eq, k);
    let dmass = s.flow_in - s.flow_out;
    let dmoist = (s.flow_in * s.moisture_in - s.flow_out * s.moisture_out - rd * s.fabric_mass - s.moisture * dmass)
        / s.fabric_mass;
    let fabric_mass = s.fabric_mass + dt * dmass;
    if !(fabric_mass > 0.0) {
        return Err(Error::MassExhausted(fabric_mass));
    }
    let mut moisture = s.moisture + dt * dmoist;
    if s.moisture >= s.moisture_eq && moisture < s.moisture_eq {
        moisture = s.moisture_eq;
    }
    Ok(DryingState {
        moisture: moisture.max(0.0),
        fabric_mass,
        ..*s
    })
}

/// The four modeled quantities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    /// Electricity consumption.
    E,
    /// Residual moisture content.
    M,
    /// Fabric weight per area.
    W,
    /// Fabric width.
    D,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::E, Target::M, Target::W, Target::D];

    pub fn name(self) -> &'static str {
        match self {
            Target::E => "E",
            Target::M => "M",
            Target::W => "W",
            Target::D => "D",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown target {s:?}")))
    }
}

/// Targets of one row, in `Target::ALL` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Targets {
    pub e: f64,
    pub m: f64,
    pub w: f64,
    pub d: f64,
}

impl Targets {
    pub fn get(&self, t: Target) -> f64 {
        match t {
            Target::E => self.e,
            Target::M => self.m,
            Target::W => self.w,
            Target::D => self.d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FabricType {
    Nylon,
    Polyester,
}

/// Sensors every line carries; the responses are functions of these.
pub const CORE_SENSORS: [&str; 11] = [
    "motor_speed",
    "fan_speed",
    "temp_set_1",
    "temp_set_2",
    "temp_set_3",
    "temp_set_4",
    "ambient_temp",
    "ambient_humidity",
    "fabric_weight_in",
    "fabric_width_in",
    "inlet_moisture",
];

/// Line-specific sensors: noisy readings derived from the core state.
pub const AUX_SENSORS: [&str; 4] = ["exhaust_humidity", "chamber_pressure", "belt_tension", "steam_valve"];

/// Closed sampling interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        rng.gen_range(self.lo..=self.hi)
    }
}

/// Sampling intervals of controls and environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRanges {
    /// m/min
    pub motor_speed: Range,
    /// Hz
    pub fan_speed: Range,
    /// Base chamber set-point, °C.
    pub temperature: Range,
    /// Per-chamber deviation from the base set-point, °C.
    pub chamber_spread: f64,
    pub ambient_temp: Range,
    pub ambient_humidity: Range,
    /// g/m²
    pub fabric_weight: Range,
    /// cm
    pub fabric_width: Range,
    pub inlet_moisture: Range,
}

impl Default for ControlRanges {
    fn default() -> Self {
        Self {
            motor_speed: Range::new(20.0, 60.0),
            fan_speed: Range::new(30.0, 50.0),
            temperature: Range::new(150.0, 200.0),
            chamber_spread: 10.0,
            ambient_temp: Range::new(15.0, 35.0),
            ambient_humidity: Range::new(40.0, 90.0),
            fabric_weight: Range::new(120.0, 280.0),
            fabric_width: Range::new(150.0, 180.0),
            inlet_moisture: Range::new(0.5, 0.8),
        }
    }
}

/// Coefficients of the synthetic responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseParams {
    /// Nominal residence time at 40 m/min, seconds.
    pub residence_time: f64,
    pub moisture_eq_base: f64,
    pub e_base: f64,
    pub e_heat: f64,
    pub e_fan_exponent: f64,
    pub e_evaporation: f64,
    pub e_motor: f64,
    pub e_interaction: f64,
    pub w_moisture: f64,
    pub w_heat: f64,
    pub w_tension: f64,
    pub w_interaction: f64,
    pub d_heat: f64,
    pub d_tension: f64,
    pub d_fan: f64,
    pub d_interaction: f64,
}

impl ResponseParams {
    pub fn for_fabric(fabric: FabricType) -> Self {
        let base = Self {
            residence_time: 60.0,
            moisture_eq_base: 0.045,
            e_base: 20.0,
            e_heat: 12.0,
            e_fan_exponent: 1.2,
            e_evaporation: 250.0,
            e_motor: 10.0,
            e_interaction: 6.0,
            w_moisture: 0.8,
            w_heat: 0.04,
            w_tension: 0.06,
            w_interaction: 0.03,
            d_heat: 0.025,
            d_tension: 0.03,
            d_fan: 0.02,
            d_interaction: 0.015,
        };
        match fabric {
            FabricType::Nylon => base,
            FabricType::Polyester => Self {
                moisture_eq_base: 0.008,
                e_evaporation: 220.0,
                w_heat: 0.025,
                d_heat: 0.04,
                ..base
            },
        }
    }
}

/// Conditional-shift knobs applied on top of [`ResponseParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftParams {
    pub residence_scale: f64,
    pub moisture_eq_offset: f64,
    pub e_gain: f64,
    pub e_offset: f64,
    /// Extra speed x temperature term in E.
    pub e_cross: f64,
    pub w_gain: f64,
    pub w_offset: f64,
    pub d_gain: f64,
    pub d_offset: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            residence_scale: 1.0,
            moisture_eq_offset: 0.0,
            e_gain: 1.0,
            e_offset: 0.0,
            e_cross: 0.0,
            w_gain: 1.0,
            w_offset: 0.0,
            d_gain: 1.0,
            d_offset: 0.0,
        }
    }
}

/// Everything that defines one synthetic production line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    pub name: String,
    /// Emitted sensor columns, in order.
    pub features: Vec<String>,
    pub control_ranges: ControlRanges,
    pub response_params: ResponseParams,
    pub shift: ShiftParams,
    /// Observation noise stdev as a fraction of the noiseless value.
    pub noise_level: f64,
    pub fabric_type: FabricType,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl LineProfile {
    /// Data-rich source line with exhaust and pressure sensors.
    pub fn source_line(fabric: FabricType) -> Self {
        let mut features = names(&CORE_SENSORS);
        features.extend(names(&["exhaust_humidity", "chamber_pressure"]));
        Self {
            name: "A2".into(),
            features,
            control_ranges: ControlRanges::default(),
            response_params: ResponseParams::for_fabric(fabric),
            shift: ShiftParams::default(),
            noise_level: 0.01,
            fabric_type: fabric,
        }
    }

    /// Data-poor target line: shifted responses, different auxiliary sensors.
    pub fn target_line(fabric: FabricType) -> Self {
        let mut features = names(&CORE_SENSORS);
        features.extend(names(&["belt_tension", "steam_valve"]));
        Self {
            name: "A1".into(),
            features,
            control_ranges: ControlRanges {
                motor_speed: Range::new(25.0, 60.0),
                temperature: Range::new(155.0, 205.0),
                ..ControlRanges::default()
            },
            response_params: ResponseParams::for_fabric(fabric),
            shift: ShiftParams {
                residence_scale: 0.85,
                moisture_eq_offset: 0.01,
                e_gain: 1.12,
                e_offset: 5.0,
                e_cross: 8.0,
                w_gain: 1.03,
                w_offset: 0.0,
                d_gain: 0.98,
                d_offset: 0.0,
            },
            noise_level: 0.01,
            fabric_type: fabric,
        }
    }

    /// Source line whose responses are far from the target's, for negative
    /// transfer experiments.
    pub fn mis_shifted_source(fabric: FabricType) -> Self {
        let mut p = Self::source_line(fabric);
        p.name = "B".into();
        p.shift = ShiftParams {
            residence_scale: 1.8,
            moisture_eq_offset: -0.02,
            e_gain: 0.6,
            e_offset: -5.0,
            e_cross: -25.0,
            w_gain: 0.9,
            w_offset: 15.0,
            d_gain: 1.06,
            d_offset: -5.0,
        };
        p.response_params.e_interaction = -6.0;
        p.response_params.w_interaction = -0.05;
        p.response_params.d_interaction = -0.04;
        // noisy measurements make a poor pretrained model
        p.noise_level = 0.08;
        p
    }

    /// Same line with every shift knob reset: no conditional shift.
    pub fn without_shift(&self) -> Self {
        Self {
            shift: ShiftParams::default(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for core in CORE_SENSORS {
            if !self.features.iter().any(|f| f == core) {
                return Err(Error::Config(format!(
                    "line {}: missing required sensor {core:?}",
                    self.name
                )));
            }
        }
        for f in &self.features {
            if !CORE_SENSORS.contains(&f.as_str()) && !AUX_SENSORS.contains(&f.as_str()) {
                return Err(Error::Config(format!("line {}: unknown sensor {f:?}", self.name)));
            }
        }
        let r = &self.control_ranges;
        for (name, range) in [
            ("motor_speed", r.motor_speed),
            ("fan_speed", r.fan_speed),
            ("temperature", r.temperature),
            ("ambient_temp", r.ambient_temp),
            ("ambient_humidity", r.ambient_humidity),
            ("fabric_weight", r.fabric_weight),
            ("fabric_width", r.fabric_width),
            ("inlet_moisture", r.inlet_moisture),
        ] {
            if !(range.lo < range.hi) {
                return Err(Error::Config(format!(
                    "line {}: degenerate range for {name}",
                    self.name
                )));
            }
        }
        if r.motor_speed.lo <= 0.0 || r.inlet_moisture.lo < 0.0 {
            return Err(Error::Config(format!("line {}: non-physical range", self.name)));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::Config(format!("line {}: negative noise", self.name)));
        }
        FeatureSchema::new(self.features.clone(), "E")?;
        Ok(())
    }

    pub fn schema(&self, target: Target) -> Result<FeatureSchema> {
        FeatureSchema::new(self.features.clone(), target.name())
    }
}

/// Integration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    /// Cap on simulated pass time, seconds.
    pub duration: f64,
    pub seed: u64,
    pub n_rows: usize,
    /// Target column for [`generate_line`].
    pub target: Target,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            duration: 600.0,
            seed: 0,
            n_rows: 1000,
            target: Target::E,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::OutOfRange {
                name: "dt",
                value: self.dt,
            });
        }
        if !(self.duration >= self.dt) {
            return Err(Error::OutOfRange {
                name: "duration",
                value: self.duration,
            });
        }
        Ok(())
    }
}

/// Core sensor values of one row, by name.
fn core_value(x: &[f64], profile: &LineProfile, name: &str) -> f64 {
    let j = profile
        .features
        .iter()
        .position(|f| f == name)
        .expect("validated profile carries every core sensor");
    x[j]
}

struct CoreState {
    speed: f64,
    fan: f64,
    temps: [f64; 4],
    ambient_temp: f64,
    humidity: f64,
    weight_in: f64,
    width_in: f64,
    inlet_moisture: f64,
}

impl CoreState {
    fn from_row(x: &[f64], p: &LineProfile) -> Self {
        let v = |n| core_value(x, p, n);
        Self {
            speed: v("motor_speed"),
            fan: v("fan_speed"),
            temps: [v("temp_set_1"), v("temp_set_2"), v("temp_set_3"), v("temp_set_4")],
            ambient_temp: v("ambient_temp"),
            humidity: v("ambient_humidity"),
            weight_in: v("fabric_weight_in"),
            width_in: v("fabric_width_in"),
            inlet_moisture: v("inlet_moisture"),
        }
    }

    fn sample(r: &ControlRanges, rng: &mut impl Rng) -> Self {
        let base = r.temperature.sample(rng);
        let spread = Range::new(-r.chamber_spread, r.chamber_spread);
        let mut temps = [0.0; 4];
        for t in &mut temps {
            *t = base
                + if r.chamber_spread > 0.0 {
                    spread.sample(rng)
                } else {
                    0.0
                };
        }
        Self {
            speed: r.motor_speed.sample(rng),
            fan: r.fan_speed.sample(rng),
            temps,
            ambient_temp: r.ambient_temp.sample(rng),
            humidity: r.ambient_humidity.sample(rng),
            weight_in: r.fabric_weight.sample(rng),
            width_in: r.fabric_width.sample(rng),
            inlet_moisture: r.inlet_moisture.sample(rng),
        }
    }

    fn value(&self, name: &str, rng: &mut impl Rng) -> f64 {
        let mean_t = self.temps.iter().sum::<f64>() / 4.0;
        let jitter = |rng: &mut dyn rand::RngCore, sd: f64| Normal::new(0.0, sd).expect("positive sd").sample(rng);
        match name {
            "motor_speed" => self.speed,
            "fan_speed" => self.fan,
            "temp_set_1" => self.temps[0],
            "temp_set_2" => self.temps[1],
            "temp_set_3" => self.temps[2],
            "temp_set_4" => self.temps[3],
            "ambient_temp" => self.ambient_temp,
            "ambient_humidity" => self.humidity,
            "fabric_weight_in" => self.weight_in,
            "fabric_width_in" => self.width_in,
            "inlet_moisture" => self.inlet_moisture,
            "exhaust_humidity" => {
                20.0 + 60.0 * self.inlet_moisture * (self.speed / 40.0) + 0.1 * self.humidity + jitter(rng, 2.0)
            }
            "chamber_pressure" => 40.0 + 2.5 * self.fan + jitter(rng, 3.0),
            "belt_tension" => 80.0 + 3.0 * self.speed + 0.2 * self.weight_in + jitter(rng, 5.0),
            "steam_valve" => 20.0 + 0.3 * (mean_t - 150.0) + 0.5 * self.fan + jitter(rng, 2.0),
            other => unreachable!("unvalidated sensor {other}"),
        }
    }
}

/// Residual moisture after the dryer: Euler integration through four equal
/// chambers held at their set-points.
fn pass_moisture(c: &CoreState, p: &LineProfile, cfg: &SimConfig) -> Result<f64> {
    let rp = &p.response_params;
    let moisture_eq = (rp.moisture_eq_base * (0.5 + c.humidity / 100.0) + p.shift.moisture_eq_offset).max(0.0);
    let pass_time = (rp.residence_time * p.shift.residence_scale * 40.0 / c.speed).min(cfg.duration);
    let chamber_time = pass_time / 4.0;
    // well-mixed element moving with the belt: equal inflow and outflow
    let flow = c.weight_in * 1e-3 * c.width_in * 1e-2 * c.speed / 60.0;
    let mut s = DryingState {
        moisture: c.inlet_moisture.max(moisture_eq),
        fabric_mass: c.weight_in * 1e-3 * c.width_in * 1e-2,
        flow_in: flow,
        flow_out: flow,
        moisture_in: 0.0,
        moisture_out: 0.0,
        moisture_eq,
        air_temp: 0.0,
    };
    for t in c.temps {
        s.air_temp = t + KELVIN_OFFSET;
        let steps = (chamber_time / cfg.dt).round() as usize;
        for _ in 0..steps {
            s.moisture_in = s.moisture;
            s.moisture_out = s.moisture;
            s = step_moisture(&s, cfg.dt)?;
        }
    }
    Ok(s.moisture)
}

fn noiseless_targets(c: &CoreState, p: &LineProfile, cfg: &SimConfig) -> Result<Targets> {
    let rp = &p.response_params;
    let sh = &p.shift;
    let m = pass_moisture(c, p, cfg)?;
    let s = c.speed / 40.0;
    let f = c.fan / 40.0;
    let mean_t = c.temps.iter().sum::<f64>() / 4.0;
    let heat = (mean_t - 175.0) / 25.0;
    let superheat: f64 = c.temps.iter().map(|t| (t - c.ambient_temp) / 100.0).sum();

    let e = sh.e_gain
        * (rp.e_base
            + rp.e_heat * f.powf(rp.e_fan_exponent) * superheat
            + rp.e_evaporation * (c.inlet_moisture - m) * (c.weight_in / 200.0) * s
            + rp.e_motor * s * s
            + rp.e_interaction * heat * (f - 1.0)
            + sh.e_cross * (s - 1.0) * (heat + 1.0))
        + sh.e_offset;
    let w = sh.w_gain
        * c.weight_in
        * (1.0 + rp.w_moisture * m)
        * (1.0 + rp.w_heat * heat - rp.w_tension * (s - 1.0) + rp.w_interaction * heat * (s - 1.0))
        + sh.w_offset;
    let d = sh.d_gain
        * c.width_in
        * (1.0 - rp.d_heat * heat
            + rp.d_tension * (s - 1.0)
            + rp.d_fan * (f - 1.0) * (f - 1.0)
            + rp.d_interaction * heat * (f - 1.0))
        + sh.d_offset;
    Ok(Targets { e, m, w, d })
}

fn observe(v: f64, noise_level: f64, rng: &mut impl Rng) -> f64 {
    if noise_level == 0.0 {
        return v;
    }
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    v * (1.0 + noise_level * z)
}

/// Targets for one row of `profile.features` values, with observation noise
/// drawn from `rng`.
pub fn synth_targets(x: &[f64], profile: &LineProfile, cfg: &SimConfig, rng: &mut impl Rng) -> Result<Targets> {
    profile.validate()?;
    cfg.validate()?;
    if x.len() != profile.features.len() {
        return Err(Error::DimensionMismatch {
            expected: profile.features.len(),
            got: x.len(),
        });
    }
    let t = noiseless_targets(&CoreState::from_row(x, profile), profile, cfg)?;
    let nl = profile.noise_level;
    Ok(Targets {
        e: observe(t.e, nl, rng),
        m: observe(t.m, nl, rng),
        w: observe(t.w, nl, rng),
        d: observe(t.d, nl, rng),
    })
}

/// All four targets of one simulated line.
#[derive(Clone, Debug, PartialEq)]
pub struct LineTable {
    pub features: Vec<String>,
    /// Row-major sensor values.
    pub values: Vec<f64>,
    pub targets: BTreeMap<Target, Vec<f64>>,
}

impl LineTable {
    pub fn n_rows(&self) -> usize {
        self.targets.get(&Target::E).map_or(0, Vec::len)
    }

    pub fn dataset(&self, target: Target) -> Result<Dataset> {
        Dataset::from_flat(
            FeatureSchema::new(self.features.clone(), target.name())?,
            self.values.clone(),
            self.targets[&target].clone(),
        )
    }

    /// Sensors followed by the E, M, W, D columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = self.features.clone();
        header.extend(Target::ALL.iter().map(|t| t.name().to_string()));
        w.write_record(&header)?;
        let width = self.features.len();
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.values[i * width..(i + 1) * width]
                .iter()
                .map(f64::to_string)
                .collect();
            rec.extend(Target::ALL.iter().map(|t| self.targets[t][i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Samples `cfg.n_rows` rows from `profile`. Row `i` draws from its own
/// seeded stream, so output does not depend on generation order.
pub fn generate_table(profile: &LineProfile, cfg: &SimConfig) -> Result<LineTable> {
    profile.validate()?;
    cfg.validate()?;
    if cfg.n_rows == 0 {
        return Err(Error::InvalidArgument("n_rows must be at least 1".into()));
    }
    let width = profile.features.len();
    let mut values = Vec::with_capacity(cfg.n_rows * width);
    let mut cols: [Vec<f64>; 4] = Default::default();
    for row in 0..cfg.n_rows {
        let mut rng = rng::seeded(cfg.seed, rng::STREAM_SIM_BASE + row as u64);
        let core = CoreState::sample(&profile.control_ranges, &mut rng);
        for f in &profile.features {
            values.push(core.value(f, &mut rng));
        }
        let t = noiseless_targets(&core, profile, cfg)?;
        let nl = profile.noise_level;
        cols[0].push(observe(t.e, nl, &mut rng));
        cols[1].push(observe(t.m, nl, &mut rng));
        cols[2].push(observe(t.w, nl, &mut rng));
        cols[3].push(observe(t.d, nl, &mut rng));
    }
    let targets = Target::ALL.into_iter().zip(cols).collect();
    Ok(LineTable {
        features: profile.features.clone(),
        values,
        targets,
    })
}

/// One line as a single-target dataset (`cfg.target`).
pub fn generate_line(profile: &LineProfile, cfg: &SimConfig) -> Result<Dataset> {
    generate_table(profile, cfg)?.dataset(cfg.target)
}

/// Source and target tables generated from independent seeds derived from
/// `seed`.
pub fn make_domain_pair(
    source: &LineProfile,
    target: &LineProfile,
    n_source: usize,
    n_target: usize,
    seed: u64,
) -> Result<(LineTable, LineTable)> {
    if n_source <= n_target {
        return Err(Error::InvalidArgument(format!(
            "source rows ({n_source}) must exceed target rows ({n_target})"
        )));
    }
    let base = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let src = generate_table(
        source,
        &SimConfig {
            n_rows: n_source,
            ..base.clone()
        },
    )?;
    let tgt = generate_table(
        target,
        &SimConfig {
            n_rows: n_target,
            seed: seed.wrapping_add(0x9E37_79B9),
            ..base
        },
    )?;
    Ok((src, tgt))
}

pub const DEFAULT_N_SOURCE: usize = 20_000;
pub const DEFAULT_N_TARGET: usize = 2_000;
