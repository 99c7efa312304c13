//! Flat `key = value` configuration files.
//!
//! Keys mirror the command-line flags (`n`, `g`, `dt`, `seed`, `seeds`,
//! `steps`, `unroll-interval`, `target-amplitude`, `omega`, `time-scale`,
//! `snapshot-cadence`, `out-dir`) plus a few settings that have no flag.
//! The syntax is TOML restricted to top-level keys:
//!
//! ```
//! use reservoir_stability::experiment::config_file::Overrides;
//! use reservoir_stability::experiment::{ExperimentConfig, ExperimentKind};
//!
//! let file = Overrides::parse("n = 50\ng = 1.2\nseeds = [1, 2, 3]\n").unwrap();
//! let mut config = ExperimentConfig::new(ExperimentKind::FixedPoint);
//! file.apply(&mut config).unwrap();
//! assert_eq!(config.reservoir.n, 50);
//! assert_eq!(config.seeds, vec![1, 2, 3]);
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, UpdateCadence};
use crate::dynamics::UnrollSchedule;
use crate::error::{Error, Result};
use crate::training::TargetFunction;

/// A partial configuration; unset keys leave the base config alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Overrides {
    pub n: Option<usize>,
    pub g: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<usize>,
    pub unroll_interval: Option<usize>,
    pub target_amplitude: Option<f64>,
    pub omega: Option<f64>,
    pub time_scale: Option<f64>,
    pub snapshot_cadence: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub feedback_scale: Option<f64>,
    pub init_state_scale: Option<f64>,
    pub weight_delta_tol: Option<f64>,
    pub force_alpha: Option<f64>,
    pub test_steps: Option<usize>,
    pub pca_window: Option<usize>,
    pub pca_components: Option<Vec<usize>>,
    pub sweep_intervals: Option<Vec<usize>>,
    pub update_cadence: Option<UpdateCadence>,
}

macro_rules! layer {
    ($base:ident, $top:ident; $($field:ident),*) => {
        Overrides { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Overrides {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn layered_under(self, top: Overrides) -> Overrides {
        let base = self;
        layer!(base, top;
            n, g, dt, seed, seeds, steps, unroll_interval, target_amplitude, omega,
            time_scale, snapshot_cadence, out_dir, feedback_scale, init_state_scale,
            weight_delta_tol, force_alpha, test_steps, pca_window, pca_components,
            sweep_intervals, update_cadence)
    }

    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        let r = &mut config.reservoir;
        set(&mut r.n, self.n);
        set(&mut r.g, self.g);
        set(&mut r.dt, self.dt);
        set(&mut r.feedback_scale, self.feedback_scale);
        set(&mut r.init_state_scale, self.init_state_scale);
        set(&mut config.stopping.max_steps, self.steps);
        set(&mut config.stopping.weight_delta_tol, self.weight_delta_tol);
        set(&mut config.snapshot_cadence, self.snapshot_cadence);
        if let Some(dir) = &self.out_dir {
            config.output_dir = dir.clone();
        }
        if let Some(k) = self.unroll_interval {
            if k == 0 {
                return Err(Error::invalid("unroll-interval", "must be at least 1"));
            }
            config.schedule = UnrollSchedule::unrolled(k);
        }

        match (self.seed, &self.seeds) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid("seeds", "give either `seed` or `seeds`, not both"))
            }
            (Some(seed), None) => config.seeds = vec![seed],
            (None, Some(seeds)) => config.seeds = seeds.clone(),
            (None, None) => {}
        }
        if let Some(&first) = config.seeds.first() {
            config.reservoir.seed = first;
        }

        match &mut config.target {
            TargetFunction::FixedPoint { amplitude } => {
                if self.omega.is_some() || self.time_scale.is_some() {
                    return Err(Error::invalid(
                        "omega",
                        "frequency settings need a sinusoidal target",
                    ));
                }
                set(amplitude, self.target_amplitude);
            }
            TargetFunction::Sinusoid {
                omega,
                time_scale,
                amplitude,
            } => {
                set(omega, self.omega);
                set(time_scale, self.time_scale);
                set(amplitude, self.target_amplitude);
            }
        }

        let x = &mut config.extra;
        set(&mut x.force_alpha, self.force_alpha);
        set(&mut x.pca_window, self.pca_window);
        set(&mut x.update_cadence, self.update_cadence);
        if self.test_steps.is_some() {
            x.test_steps = self.test_steps;
        }
        if let Some(v) = &self.pca_components {
            x.pca_components = v.clone();
        }
        if let Some(v) = &self.sweep_intervals {
            x.sweep_intervals = v.clone();
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
