//! Run configuration: a TOML file whose entries can be overridden field by
//! field from the command line.
//!
//! ```toml
//! system = "power-attract a=2"
//! seed = 7
//! samples = 100000
//! eps_ladder = [0.1, 0.01, 0.001, 0.0001]
//!
//! [integrator]
//! r_in = 1e-6
//! r_out = 2.0
//! t_max = 1e6
//! h_init = 1e-3
//! tol = 1e-9
//! h_min = 1e-14
//! certify = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::integrator::IntegratorConfig;
use crate::measure::{default_ladder, uniform_rungs, MeasureOptions, Rung};
use crate::sampling::Sampler;
use crate::system::SystemSpec;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "STABINDEX_OUT";
/// Output directory used when neither the config nor the environment sets one.
pub const DEFAULT_OUTPUT_DIR: &str = "stabindex-out";
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Samples per ladder rung.
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub sampler: Sampler,
    /// Neighbourhood radii; the default ladder when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ladder: Option<Vec<f64>>,
    /// δ values for a local run; empty for a global one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Integrator settings; the family's defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_samples() -> u64 {
    DEFAULT_SAMPLES
}

impl RunConfig {
    pub fn new(system: SystemSpec) -> Self {
        Self {
            system,
            seed: DEFAULT_SEED,
            samples: DEFAULT_SAMPLES,
            sampler: Sampler::default(),
            eps_ladder: None,
            deltas: Vec::new(),
            output_dir: None,
            threads: None,
            integrator: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.samples < 100 {
            return Err(Error::Config(format!("samples must be at least 100, got {}", self.samples)));
        }
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be below 2^63, got {}", self.seed)));
        }
        if let Some(ladder) = &self.eps_ladder {
            if ladder.is_empty() || ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(Error::Config("eps_ladder entries must be positive".into()));
            }
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Config("deltas must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.integrator_config().validate()?;
        Ok(())
    }

    pub fn ladder(&self) -> Vec<f64> {
        self.eps_ladder.clone().unwrap_or_else(default_ladder)
    }

    pub fn rungs(&self) -> Vec<Rung> {
        uniform_rungs(&self.ladder(), self.samples)
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        self.integrator.unwrap_or_else(|| IntegratorConfig::for_spec(&self.system))
    }

    pub fn measure_options(&self) -> MeasureOptions {
        MeasureOptions {
            sampler: self.sampler,
            integrator: self.integrator_config(),
            ..MeasureOptions::for_spec(&self.system)
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions::for_sampler(self.sampler)
    }

    /// The configured directory, else `$STABINDEX_OUT`, else `stabindex-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = RunConfig::from_toml_str("system = \"phi\"\n").unwrap();
        assert_eq!(cfg, RunConfig::new(SystemSpec::phi_system()));
        assert_eq!(cfg.ladder(), default_ladder());
        assert_eq!(cfg.integrator_config(), IntegratorConfig::for_spec(&SystemSpec::phi_system()));
    }

    #[test]
    fn full_file() {
        let text = r#"
            system = "power-attract a=2 p=2"
            seed = 9
            samples = 5000
            sampler = "pseudo"
            eps_ladder = [0.5, 0.1, 0.05, 0.01]
            deltas = [0.3]
            output_dir = "runs/t"
            threads = 2

            [integrator]
            r_in = 1e-5
            r_out = 3.0
            t_max = 1e5
            h_init = 1e-3
            tol = 1e-8
            h_min = 1e-13
            certify = false
        "#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.system, SystemSpec::transformed(2.0, 2.0).unwrap());
        assert_eq!(cfg.sampler, Sampler::Pseudo);
        assert_eq!(cfg.rungs().len(), 4);
        assert_eq!(cfg.integrator_config().r_out, 3.0);
        assert!(!cfg.measure_options().integrator.certify);
        assert_eq!(cfg.resolved_output_dir(), PathBuf::from("runs/t"));
    }

    #[test]
    fn bad_files_are_config_errors() {
        for text in [
            "",
            "system = \"nope\"",
            "system = \"phi\"\nsamples = 10",
            "system = \"phi\"\nextra = 1",
            "system = \"phi\"\neps_ladder = [0.1, -1.0]",
            "system = \"phi\"\nthreads = 0",
            "system = \"phi\"\n[integrator]\nr_in = 1.0\nr_out = 0.5\nt_max = 1.0\nh_init = 0.1\ntol = 1e-9\nh_min = 1e-14\ncertify = true",
        ] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(!err.is_numerical(), "{text}: {err}");
        }
    }

    fn arb_system() -> impl Strategy<Value = SystemSpec> {
        prop_oneof![
            (1.01f64..5.0).prop_map(|a| SystemSpec::power_attract(a).unwrap()),
            (0.01f64..0.99).prop_map(|a| SystemSpec::power_repel(a).unwrap()),
            (1.01f64..5.0, 1.0f64..3.0).prop_map(|(a, p)| SystemSpec::transformed(a, p).unwrap()),
            Just(SystemSpec::phi_system()),
            Just(SystemSpec::piecewise()),
        ]
    }

    proptest! {
        #[test]
        fn toml_round_trip(
            system in arb_system(),
            seed in 0u64..(i64::MAX as u64),
            samples in 100u64..10_000_000,
            pseudo in any::<bool>(),
            ladder in proptest::option::of(proptest::collection::vec(1e-6f64..1.0, 1..10)),
            deltas in proptest::collection::vec(1e-3f64..1.0, 0..4),
            threads in proptest::option::of(1usize..64),
            tol in 1e-12f64..1e-6,
            explicit_integrator in any::<bool>(),
        ) {
            let mut cfg = RunConfig::new(system);
            cfg.seed = seed;
            cfg.samples = samples;
            cfg.sampler = if pseudo { Sampler::Pseudo } else { Sampler::Sobol };
            cfg.eps_ladder = ladder;
            cfg.deltas = deltas;
            cfg.threads = threads;
            cfg.output_dir = Some(PathBuf::from("out/dir"));
            if explicit_integrator {
                cfg.integrator = Some(IntegratorConfig { tol, ..IntegratorConfig::default() });
            }
            let text = cfg.to_toml_string().unwrap();
            prop_assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }
}
