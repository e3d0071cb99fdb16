//! Run configuration: presets, TOML overrides, validation and the canonical hash.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use semires::geometry::{BoundaryMetric, Dimension, ModelProblem, Potential};
use semires::resolvent::FdOrder;

pub const PRESETS: [&str; 6] = ["zero", "longrange_pow", "double_bump", "well", "plane", "warped_plane"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub preset: String,
    /// Output directory; overridden by --out and left out of the hash.
    #[serde(skip_serializing)]
    pub output: Option<String>,
    pub model: ModelConfig,
    pub flow: FlowConfig,
    pub escape: EscapeConfig,
    pub calculus: CalculusConfig,
    pub resolvent: ResolventConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dimension: u32,
    /// zero, longrange_pow, double_bump or well.
    pub potential: String,
    pub amplitude: f64,
    pub exponent: f64,
    pub separation: f64,
    pub gamma: f64,
    pub lambda2: f64,
    pub delta: f64,
    /// Boundary metric 1 + a cos(kθ) in dimension 2; 0 is flat.
    pub metric_amplitude: f64,
    pub metric_mode: u32,
    /// Trapping is the expected verdict; checks invert accordingly.
    pub expect_trapping: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub samples: usize,
    pub tol: f64,
    pub r_esc: f64,
    pub t_max: f64,
    /// Drift and reversal are measured over [−span, span].
    pub span: f64,
    pub probes: usize,
    pub confinement_time: f64,
    pub confinement_radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub eps: f64,
    pub n_z: usize,
    pub n_e: usize,
    pub x_min: f64,
    pub refine: bool,
    pub hp_points: usize,
    pub hp_delta: f64,
    pub slice_points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CalculusConfig {
    pub commutator_h: Vec<f64>,
    pub commutator_n: usize,
    pub garding_h: Vec<f64>,
    pub garding_n: usize,
    pub hs_n: usize,
    pub hs_h: f64,
    pub hs_half_length: f64,
    pub hs_nodes: usize,
    pub hs_order: usize,
    pub nonchar_h: Vec<f64>,
    pub nonchar_t: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub h: Vec<f64>,
    pub s: f64,
    pub half_length: f64,
    pub ppw: f64,
    pub order: u32,
    /// cap or dirichlet.
    pub mode: String,
    pub cap_strength: f64,
    pub t_fraction: f64,
    /// Also run the other boundary treatment and compare the two.
    pub compare_modes: bool,
    /// Compare with the analytic free kernel (zero potential only).
    pub oracle: bool,
    pub scan_samples: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            preset: "zero".into(),
            output: None,
            model: ModelConfig::default(),
            flow: FlowConfig::default(),
            escape: EscapeConfig::default(),
            calculus: CalculusConfig::default(),
            resolvent: ResolventConfig::default(),
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            potential: "zero".into(),
            amplitude: 0.0,
            exponent: 1.0,
            separation: 3.0,
            gamma: 1.0,
            lambda2: 1.0,
            delta: 0.15,
            metric_amplitude: 0.0,
            metric_mode: 0,
            expect_trapping: false,
        }
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            samples: 400,
            tol: 1e-10,
            r_esc: 40.0,
            t_max: 500.0,
            span: 50.0,
            probes: 8,
            confinement_time: 200.0,
            confinement_radius: 3.5,
        }
    }
}

impl Default for EscapeConfig {
    fn default() -> Self {
        Self {
            eps: 0.2,
            n_z: 1280,
            n_e: 40,
            x_min: 1e-3,
            refine: true,
            hp_points: 1000,
            hp_delta: 1e-5,
            slice_points: 201,
        }
    }
}

impl Default for CalculusConfig {
    fn default() -> Self {
        Self {
            commutator_h: vec![0.2, 0.1, 0.05, 0.025],
            commutator_n: 2048,
            garding_h: vec![0.2, 0.1, 0.05, 0.025],
            garding_n: 512,
            hs_n: 512,
            hs_h: 0.1,
            hs_half_length: 8.0,
            hs_nodes: 200,
            hs_order: 4,
            nonchar_h: vec![0.2, 0.1, 0.05],
            nonchar_t: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
        }
    }
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            h: vec![0.2, 0.14, 0.1, 0.07, 0.05],
            s: 0.7,
            half_length: 200.0,
            ppw: 50.0,
            order: 4,
            mode: "cap".into(),
            cap_strength: 1.0,
            t_fraction: 0.1,
            compare_modes: true,
            oracle: true,
            scan_samples: 400,
        }
    }
}

fn preset_overrides(name: &str) -> Option<&'static str> {
    Some(match name {
        "zero" => "",
        "longrange_pow" => "[model]\npotential = \"longrange_pow\"\namplitude = 0.5\nexponent = 1.0\ngamma = 1.0\n",
        "double_bump" => {
            "[model]\npotential = \"double_bump\"\namplitude = 2.0\nseparation = 3.0\nexpect_trapping = true\n"
        }
        "well" => "[model]\npotential = \"well\"\namplitude = 2.0\n",
        "plane" => "[model]\ndimension = 2\n",
        "warped_plane" => {
            "[model]\ndimension = 2\npotential = \"well\"\namplitude = 1.0\nmetric_amplitude = 0.4\nmetric_mode = 3\n"
        }
        _ => return None,
    })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl Config {
    /// Preset values, then the file, then the --preset flag's preset name.
    pub fn resolve(text: Option<&str>, preset_flag: Option<&str>) -> Result<Self, ConfigError> {
        let user: Value = match text {
            Some(t) => {
                // Unknown keys and type errors, reported with their position in the file.
                toml::from_str::<Config>(t).map_err(|e| ConfigError(format!("config: {e}")))?;
                toml::from_str(t).map_err(|e| ConfigError(format!("config: {e}")))?
            }
            None => Value::Table(Default::default()),
        };
        let file_preset = user.get("preset").and_then(Value::as_str).map(str::to_string);
        let name = preset_flag.map(str::to_string).or(file_preset).unwrap_or_else(|| "zero".into());
        let Some(over) = preset_overrides(&name) else {
            return err(format!("preset: unknown preset `{name}` (expected one of {})", PRESETS.join(", ")));
        };
        let mut merged = Value::try_from(Config::default()).expect("default config serializes");
        merge(&mut merged, toml::from_str(over).expect("preset parses"));
        merge(&mut merged, user);
        if let Value::Table(t) = &mut merged {
            t.insert("preset".into(), Value::String(name));
        }
        let cfg: Config = merged.try_into().map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, preset_flag: Option<&str>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Self::resolve(text.as_deref(), preset_flag)
    }

    /// Fully resolved configuration as TOML; this is the text that is hashed and echoed.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.canonical().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dimension(&self) -> Dimension {
        if self.model.dimension == 2 {
            Dimension::Two
        } else {
            Dimension::One
        }
    }

    pub fn model_problem(&self) -> Result<ModelProblem<f64>, ConfigError> {
        let m = &self.model;
        let potential = match m.potential.as_str() {
            "zero" => Potential::Zero,
            "longrange_pow" => Potential::LongRangePow { amplitude: m.amplitude, exponent: m.exponent },
            "double_bump" => Potential::DoubleBump { amplitude: m.amplitude, separation: m.separation },
            "well" => Potential::Well { amplitude: m.amplitude },
            other => {
                return err(format!(
                    "model.potential: unknown potential `{other}` (expected zero, longrange_pow, double_bump or well)"
                ))
            }
        };
        let metric = if m.metric_amplitude == 0.0 {
            BoundaryMetric::Flat
        } else {
            BoundaryMetric::Warped { amplitude: m.metric_amplitude, mode: m.metric_mode }
        };
        ModelProblem::new(self.dimension(), metric, potential, m.gamma, m.lambda2, m.delta)
            .map_err(|e| ConfigError(format!("model: {e}")))
    }

    pub fn fd_order(&self) -> FdOrder {
        if self.resolvent.order == 2 {
            FdOrder::Second
        } else {
            FdOrder::Fourth
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !matches!(m.dimension, 1 | 2) {
            return err("model.dimension: must be 1 or 2");
        }
        self.model_problem()?;

        let f = &self.flow;
        positive("flow.tol", f.tol)?;
        positive("flow.r_esc", f.r_esc)?;
        positive("flow.t_max", f.t_max)?;
        positive("flow.span", f.span)?;
        positive("flow.confinement_time", f.confinement_time)?;
        positive("flow.confinement_radius", f.confinement_radius)?;
        at_least("flow.samples", f.samples, 1)?;
        at_least("flow.probes", f.probes, 1)?;

        let e = &self.escape;
        if !(e.eps > 0.0 && e.eps < 0.25) {
            return err("escape.eps: must lie in (0, 1/4)");
        }
        at_least("escape.n_z", e.n_z, 4)?;
        at_least("escape.n_e", e.n_e, 2)?;
        if !(e.x_min > 0.0 && e.x_min < 1.0) {
            return err("escape.x_min: must lie in (0, 1)");
        }
        at_least("escape.hp_points", e.hp_points, 1)?;
        positive("escape.hp_delta", e.hp_delta)?;
        at_least("escape.slice_points", e.slice_points, 2)?;

        let c = &self.calculus;
        decreasing("calculus.commutator_h", &c.commutator_h, 2)?;
        decreasing("calculus.garding_h", &c.garding_h, 2)?;
        decreasing("calculus.nonchar_h", &c.nonchar_h, 1)?;
        power_of_two("calculus.commutator_n", c.commutator_n)?;
        power_of_two("calculus.garding_n", c.garding_n)?;
        at_least("calculus.hs_n", c.hs_n, 16)?;
        positive("calculus.hs_h", c.hs_h)?;
        positive("calculus.hs_half_length", c.hs_half_length)?;
        at_least("calculus.hs_nodes", c.hs_nodes, 8)?;
        at_least("calculus.hs_order", c.hs_order, 1)?;
        if c.nonchar_t.is_empty() || c.nonchar_t.iter().any(|t| !(*t > 0.0)) {
            return err("calculus.nonchar_t: needs at least one value, all positive");
        }

        let r = &self.resolvent;
        decreasing("resolvent.h", &r.h, 2)?;
        if !(r.s > 0.5) {
            return err("resolvent.s: must exceed 1/2");
        }
        if !(r.half_length >= 40.0) {
            return err("resolvent.half_length: must be at least 40");
        }
        if !(r.ppw >= 10.0) {
            return err("resolvent.ppw: must be at least 10");
        }
        if !matches!(r.order, 2 | 4) {
            return err("resolvent.order: must be 2 or 4");
        }
        if !matches!(r.mode.as_str(), "cap" | "dirichlet") {
            return err("resolvent.mode: must be cap or dirichlet");
        }
        positive("resolvent.cap_strength", r.cap_strength)?;
        positive("resolvent.t_fraction", r.t_fraction)?;
        at_least("resolvent.scan_samples", r.scan_samples, 1)?;
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        err(format!("{name}: must be positive and finite, got {v}"))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        err(format!("{name}: must be at least {min}, got {v}"))
    }
}

fn power_of_two(name: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 16 && v.is_power_of_two() {
        Ok(())
    } else {
        err(format!("{name}: must be a power of two >= 16, got {v}"))
    }
}

fn decreasing(name: &str, v: &[f64], min_len: usize) -> Result<(), ConfigError> {
    if v.len() < min_len {
        return err(format!("{name}: needs at least {min_len} values"));
    }
    if v.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
        return err(format!("{name}: values must lie in (0, 1)"));
    }
    if v.windows(2).any(|w| !(w[1] < w[0])) {
        return err(format!("{name}: values must be strictly decreasing"));
    }
    Ok(())
}
