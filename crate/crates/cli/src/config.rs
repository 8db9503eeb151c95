//! Experiment configuration: presets, JSON overrides and validation.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use wbomd::borndyn::PhasePoint;
use wbomd::langevin::LangevinParams;
use wbomd::{MatrixPotential, PhaseSpaceGrid, SpatialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Full-scale grids and the reference parameter values.
    Paper,
    /// Smaller grids and mass ratios for quick runs.
    Desk,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub delta: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhaseGridConfig {
    pub half_width: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub friction: f64,
    pub dt: f64,
    pub burn_in: usize,
    pub steps: usize,
    pub paths: usize,
    pub batches: usize,
    /// States kept per path by `sample-langevin` (every `thin`-th step).
    pub thin: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiagConfig {
    pub coupling: f64,
    pub masses: Vec<f64>,
    pub grid: GridConfig,
    pub kappa: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeylConfig {
    pub masses: Vec<f64>,
    pub orders: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialConfig,
    /// Temperature of the density experiments.
    pub density_temperature: f64,
    /// Temperature of the correlation and weight experiments.
    pub temperature: f64,
    /// Mass ratio of `density` and `correlate`.
    pub mass: f64,
    pub density_grid: GridConfig,
    /// Ladder and grid of `converge-density`.
    pub density_masses: Vec<f64>,
    pub density_deltas: Vec<f64>,
    pub density_convergence_grid: GridConfig,
    pub correlation_grid: GridConfig,
    pub phase_grid: PhaseGridConfig,
    pub taus: Vec<f64>,
    /// Ladder and lags of `converge-correlation`.
    pub correlation_masses: Vec<f64>,
    pub convergence_taus: Vec<f64>,
    /// Verlet step; `null` picks a step per lag.
    pub verlet_dt: Option<f64>,
    /// MD trajectories leaving `|x| <= md_escape_bound` are stopped and counted.
    pub md_escape_bound: f64,
    pub langevin: LangevinConfig,
    pub diag: DiagConfig,
    pub weyl: WeylConfig,
    pub seed: u64,
}

/// A field-level validation failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = Self {
            potential: PotentialConfig {
                delta: 0.1,
                a: 1.0,
                b: 10.0,
            },
            density_temperature: 1.9946,
            temperature: 1.9947,
            mass: 1000.0,
            density_grid: GridConfig {
                x_min: -6.0,
                x_max: 6.0,
                intervals: 751,
            },
            density_masses: vec![125.0, 250.0, 500.0, 1000.0],
            density_deltas: vec![0.05, 0.1],
            density_convergence_grid: GridConfig {
                x_min: -6.0,
                x_max: 6.0,
                intervals: 1501,
            },
            correlation_grid: GridConfig {
                x_min: -4.5,
                x_max: 4.5,
                intervals: 2048,
            },
            phase_grid: PhaseGridConfig {
                half_width: 4.5,
                intervals: 1000,
            },
            taus: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            correlation_masses: vec![25.0, 50.0, 100.0],
            convergence_taus: vec![0.2],
            verlet_dt: None,
            md_escape_bound: 10.0,
            langevin: LangevinConfig {
                friction: 1.0,
                dt: 2e-3,
                burn_in: 5_000,
                steps: 505_000,
                paths: 8,
                batches: 20,
                thin: 100,
            },
            diag: DiagConfig {
                coupling: 0.5,
                masses: vec![1e3, 2e3, 4e3, 8e3],
                grid: GridConfig {
                    x_min: -3.0,
                    x_max: 3.0,
                    intervals: 600,
                },
                kappa: 3,
            },
            weyl: WeylConfig {
                masses: vec![8.0, 16.0, 32.0, 64.0],
                orders: vec![0, 1, 2],
            },
            seed: 2024,
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => Self {
                mass: 100.0,
                density_grid: GridConfig {
                    intervals: 301,
                    ..paper.density_grid
                },
                density_masses: vec![25.0, 50.0, 100.0],
                density_convergence_grid: GridConfig {
                    intervals: 601,
                    ..paper.density_convergence_grid
                },
                phase_grid: PhaseGridConfig {
                    half_width: 4.5,
                    intervals: 200,
                },
                langevin: LangevinConfig {
                    steps: 105_000,
                    ..paper.langevin
                },
                ..paper
            },
        }
    }

    /// The preset with a JSON document merged over it; objects merge key by key.
    pub fn from_json(preset: Preset, overrides: &str) -> Result<Self, ConfigError> {
        let user: Value = serde_json::from_str(overrides).map_err(|e| err("config", e.to_string()))?;
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut base, user, "")?;
        serde_json::from_value(base).map_err(|e| err("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(err(field, format!("must be positive and finite, got {v}")))
            }
        };
        let ladder = |field: &str, v: &[f64]| -> Result<(), ConfigError> {
            if v.is_empty() {
                return Err(err(field, "must be nonempty"));
            }
            for m in v {
                positive(field, *m)?;
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(err(field, "must be strictly increasing"));
            }
            Ok(())
        };
        positive("potential.delta", self.potential.delta)?;
        self.potential_with_delta(self.potential.delta)?;
        positive("density_temperature", self.density_temperature)?;
        positive("temperature", self.temperature)?;
        positive("mass", self.mass)?;
        ladder("density_masses", &self.density_masses)?;
        ladder("density_deltas", &self.density_deltas)?;
        for d in &self.density_deltas {
            self.potential_with_delta(*d)?;
        }
        ladder("correlation_masses", &self.correlation_masses)?;
        ladder("diag.masses", &self.diag.masses)?;
        ladder("weyl.masses", &self.weyl.masses)?;
        if self.weyl.orders.is_empty() {
            return Err(err("weyl.orders", "must be nonempty"));
        }
        for (field, g) in [
            ("density_grid", self.density_grid),
            ("density_convergence_grid", self.density_convergence_grid),
            ("correlation_grid", self.correlation_grid),
            ("diag.grid", self.diag.grid),
        ] {
            grid(field, g)?;
        }
        self.phase_grid()?;
        for (field, taus) in [("taus", &self.taus), ("convergence_taus", &self.convergence_taus)] {
            if taus.is_empty() {
                return Err(err(field, "must be nonempty"));
            }
            if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
                return Err(err(field, format!("lags must be nonnegative, got {t}")));
            }
        }
        positive("md_escape_bound", self.md_escape_bound)?;
        if let Some(dt) = self.verlet_dt {
            positive("verlet_dt", dt)?;
        }
        positive("diag.coupling", self.diag.coupling)?;
        if self.diag.kappa < 3 || self.diag.kappa > wbomd::diag::MAX_KAPPA {
            return Err(err(
                "diag.kappa",
                format!("must lie in 3..={}", wbomd::diag::MAX_KAPPA),
            ));
        }
        self.langevin_params()
            .validate()
            .map_err(|e| err("langevin", e.to_string()))?;
        if self.langevin.thin == 0 {
            return Err(err("langevin.thin", "must be positive"));
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<MatrixPotential, ConfigError> {
        self.potential_with_delta(self.potential.delta)
    }

    pub fn potential_with_delta(&self, delta: f64) -> Result<MatrixPotential, ConfigError> {
        MatrixPotential::avoided_crossing(delta, self.potential.a, self.potential.b)
            .map_err(|e| err("potential", e.to_string()))
    }

    pub fn phase_grid(&self) -> Result<PhaseSpaceGrid, ConfigError> {
        PhaseSpaceGrid::square(self.phase_grid.half_width, self.phase_grid.intervals)
            .map_err(|e| err("phase_grid", e.to_string()))
    }

    pub fn langevin_params(&self) -> LangevinParams {
        let l = &self.langevin;
        LangevinParams::new(l.friction, self.temperature, l.dt, l.burn_in, l.steps, self.seed)
            .with_paths(l.paths)
            .with_batches(l.batches)
            .with_start(PhasePoint::new(0.0, 0.0))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn grid(field: &str, g: GridConfig) -> Result<SpatialGrid, ConfigError> {
    SpatialGrid::new(g.x_min, g.x_max, g.intervals).map_err(|e| err(field, e.to_string()))
}

fn merge(base: &mut Value, user: Value, path: &str) -> Result<(), ConfigError> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let field = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &field)?,
                    None => return Err(err(&field, "unknown field")),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ExperimentConfig::preset(Preset::Paper).validate().unwrap();
        ExperimentConfig::preset(Preset::Desk).validate().unwrap();
    }

    #[test]
    fn overrides_merge_per_field() {
        let c = ExperimentConfig::from_json(Preset::Paper, r#"{"mass": 50, "potential": {"delta": 0.3}}"#)
            .unwrap();
        assert_eq!(c.mass, 50.0);
        assert_eq!(c.potential.delta, 0.3);
        assert_eq!(c.potential.b, 10.0);
        let e = ExperimentConfig::from_json(Preset::Paper, r#"{"potential": {"gamma": 1}}"#).unwrap_err();
        assert_eq!(e.field, "potential.gamma");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::preset(Preset::Desk);
        c.taus.clear();
        assert_eq!(c.validate().unwrap_err().field, "taus");
        let mut c = ExperimentConfig::preset(Preset::Desk);
        c.density_masses = vec![100.0, 50.0];
        assert_eq!(c.validate().unwrap_err().field, "density_masses");
        let mut c = ExperimentConfig::preset(Preset::Desk);
        c.taus = vec![-0.1];
        assert_eq!(c.validate().unwrap_err().field, "taus");
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::preset(Preset::Desk);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
    }
}
