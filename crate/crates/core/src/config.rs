//! Run configuration shared by the library entry points and the CLI. Every
//! field is echoed into output artifacts so a run can be reproduced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::FiveLocalConfig;
use crate::qpf::QpfConfig;
use crate::spectra::{SolverOptions, DENSE_CAP, ITERATIVE_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be at least 1")]
    ZeroCap { name: &'static str },
    #[error("{name}={value} exceeds the hard limit {limit}")]
    CapTooLarge { name: &'static str, value: usize, limit: usize },
    #[error("invalid value for {name}: {value}")]
    Invalid { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dense_cap: usize,
    pub iterative_cap: usize,
    pub a_const: f64,
    pub b_const: f64,
    pub qpf: QpfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let five = FiveLocalConfig::default();
        Self {
            seed: 0x5eed,
            dense_cap: DENSE_CAP,
            iterative_cap: ITERATIVE_CAP,
            a_const: five.a_const,
            b_const: five.b_const,
            qpf: QpfConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value, limit) in [
            ("dense_cap", self.dense_cap, DENSE_CAP),
            ("iterative_cap", self.iterative_cap, ITERATIVE_CAP),
        ] {
            if value == 0 {
                return Err(ConfigError::ZeroCap { name });
            }
            if value > limit {
                return Err(ConfigError::CapTooLarge { name, value, limit });
            }
        }
        for (name, value) in [("a_const", self.a_const), ("b_const", self.b_const)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::Invalid { name, value });
            }
        }
        let q = &self.qpf;
        if !(q.eta_ee > 0.0 && q.eta_ee < 1.0) {
            return Err(ConfigError::Invalid { name: "qpf.eta_ee", value: q.eta_ee });
        }
        if !(q.eps_bin_fraction > 0.0 && q.eps_bin_fraction <= 1.0) {
            return Err(ConfigError::Invalid {
                name: "qpf.eps_bin_fraction",
                value: q.eps_bin_fraction,
            });
        }
        if q.reps_count.is_multiple_of(2) {
            return Err(ConfigError::Invalid {
                name: "qpf.reps_count",
                value: q.reps_count as f64,
            });
        }
        Ok(())
    }

    pub fn five_local(&self, mu: Option<f64>) -> FiveLocalConfig {
        FiveLocalConfig {
            a_const: self.a_const,
            b_const: self.b_const,
            mu,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            seed: self.seed,
            dense_cap: self.dense_cap,
            ..SolverOptions::default()
        }
    }
}
