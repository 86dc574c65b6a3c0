//! Declarative run configuration: a TOML file with nested sections, every
//! field overridable from the command line where it makes sense.

use serde::Deserialize;
use wavetank_core::TankConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Pohozaev,
    MainIdentity,
    ObservabilityScan,
    Dispersion,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Kind::Simulate => "simulate",
            Kind::Pohozaev => "pohozaev",
            Kind::MainIdentity => "main-identity",
            Kind::ObservabilityScan => "observability-scan",
            Kind::Dispersion => "dispersion",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulate" => Ok(Kind::Simulate),
            "pohozaev" => Ok(Kind::Pohozaev),
            "main-identity" => Ok(Kind::MainIdentity),
            "observability-scan" => Ok(Kind::ObservabilityScan),
            "dispersion" => Ok(Kind::Dispersion),
            other => Err(format!(
                "unknown kind '{other}' (expected simulate | pohozaev | main-identity | observability-scan | dispersion)"
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub kind: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    pub tank: TankSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub pohozaev: PohozaevSection,
    #[serde(default)]
    pub observability: ObservabilitySection,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankSection {
    pub l1: f64,
    #[serde(default)]
    pub l2: f64,
    pub h: f64,
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    pub n1: usize,
    #[serde(default)]
    pub n2: usize,
    pub nz: usize,
    /// Explicit step; 0 derives it from `steps_per_period` / the CFL rule.
    #[serde(default)]
    pub dt: f64,
    #[serde(default)]
    pub dealias: bool,
    /// CFL safety factor when `dt` has to be derived without a period.
    #[serde(default = "default_cfl")]
    pub c_cfl: f64,
}

fn default_g() -> f64 {
    9.81
}
fn default_d() -> usize {
    1
}
fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative residual target of the elliptic solves.
    pub elliptic: f64,
    /// Main-identity relative residual.
    pub identity: f64,
    /// Pohozaev relative residual.
    pub pohozaev: f64,
    /// Relative energy drift for plain simulations.
    pub energy: f64,
    /// Relative frequency mismatch for dispersion runs.
    pub dispersion: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            elliptic: 1e-10,
            identity: 1e-4,
            pohozaev: 1e-5,
            energy: 1e-6,
            dispersion: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Elevation cosine mode along x1 (and x2 when d = 2).
    pub mode_n: usize,
    pub mode_m: usize,
    /// Elevation amplitude relative to the depth.
    pub amplitude: f64,
    /// Potential amplitude relative to `h sqrt(g h)`.
    pub psi_amplitude: f64,
    /// Horizon in linear periods of the initial mode.
    pub periods: f64,
    pub steps_per_period: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            mode_n: 1,
            mode_m: 0,
            amplitude: 1e-4,
            psi_amplitude: 0.0,
            periods: 2.0,
            steps_per_period: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PohozaevSection {
    pub eta_mode: usize,
    pub psi_mode: usize,
    /// Elevation amplitude relative to the depth.
    pub eta_amplitude: f64,
    pub psi_amplitude: f64,
}

impl Default for PohozaevSection {
    fn default() -> Self {
        Self {
            eta_mode: 1,
            psi_mode: 2,
            eta_amplitude: 0.05,
            psi_amplitude: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservabilitySection {
    pub n_values: Vec<usize>,
    pub beta: f64,
    pub kappa: f64,
    pub c_amp: f64,
    pub k0: f64,
    /// "one" or "bump".
    pub envelope: String,
    /// Include random potential coefficients alongside the elevation.
    pub with_psi: bool,
}

impl Default for ObservabilitySection {
    fn default() -> Self {
        Self {
            n_values: vec![1, 2, 4, 8],
            beta: 0.6,
            kappa: 4.0,
            c_amp: 0.05,
            k0: 1.5,
            envelope: "one".into(),
            with_psi: true,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema != 1 {
            return Err(format!("unsupported schema {}", cfg.schema));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.tank_config().validate().map_err(|e| match e {
            wavetank_core::WaveError::Config(msg) => msg,
            other => other.to_string(),
        })?;
        let t = &self.tolerances;
        for (name, v) in [
            ("elliptic", t.elliptic),
            ("identity", t.identity),
            ("pohozaev", t.pohozaev),
            ("energy", t.energy),
            ("dispersion", t.dispersion),
        ] {
            if !(v > 0.0) {
                return Err(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if self.observability.envelope != "one" && self.observability.envelope != "bump" {
            return Err(format!(
                "observability.envelope must be 'one' or 'bump', got '{}'",
                self.observability.envelope
            ));
        }
        if matches!(self.kind, Kind::ObservabilityScan) && self.observability.n_values.is_empty() {
            return Err("observability.n_values must not be empty".into());
        }
        Ok(())
    }

    /// Tank configuration with the step resolved (a placeholder positive dt
    /// is used for validation when it still has to be derived per run).
    pub fn tank_config(&self) -> TankConfig {
        TankConfig {
            l1: self.tank.l1,
            l2: self.tank.l2,
            h: self.tank.h,
            g: self.tank.g,
            d: self.tank.d,
            n1: self.tank.n1,
            n2: self.tank.n2,
            nz: self.tank.nz,
            dt: if self.tank.dt > 0.0 { self.tank.dt } else { 1.0 },
            dealias: self.tank.dealias,
        }
    }

    /// Linear angular frequency of the configured initial mode.
    pub fn mode_omega(&self) -> f64 {
        let k1 = std::f64::consts::PI * self.simulate.mode_n as f64 / self.tank.l1;
        let k2 = if self.tank.d == 2 {
            std::f64::consts::PI * self.simulate.mode_m as f64 / self.tank.l2
        } else {
            0.0
        };
        let k = (k1 * k1 + k2 * k2).sqrt();
        (self.tank.g * k * (k * self.tank.h).tanh()).sqrt()
    }
}
