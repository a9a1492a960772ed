//! Run configuration: TOML file parsing with flag overrides.
//!
//! File layout (arrays are indexed by type label):
//!
//! ```toml
//! p0 = [0.6, 0.4]
//! b = [[1.0, 0.0], [0.0, 1.0]]
//! q = [0.0, 0.0]
//! nu = [[[1.0, 0.0], [0.5, 0.5]], [[0.5, 0.5], [0.0, 1.0]]]
//!
//! [types]
//! K = 2
//!
//! [run]
//! agents = 1000
//! periods = 5
//! seed = 0
//! replications = 1
//! ```
//!
//! Flag values override file values. Defaults: agents 1000, periods 10,
//! seed 0, replications 1.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    validate_params, MatchChangeKernelOf, ModelParamsOf, MutationMatrixOf, NoMatchVectorOf,
    TypeDistributionOf, TypeSpace, ValidationError,
};

pub const DEFAULT_AGENTS: usize = 1000;
pub const DEFAULT_PERIODS: usize = 10;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_REPLICATIONS: usize = 1;

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParamsOf<f64>,
    pub agents: usize,
    pub periods: usize,
    pub seed: u64,
    pub replications: usize,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub agents: Option<usize>,
    pub periods: Option<usize>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid parameters: {0}")]
    Validation(#[from] ValidationError),
    #[error("invalid run settings: {what}")]
    BadRun { what: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    types: TypesSection,
    p0: Vec<f64>,
    b: Vec<Vec<f64>>,
    q: Vec<f64>,
    nu: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypesSection {
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    agents: Option<usize>,
    periods: Option<usize>,
    seed: Option<u64>,
    replications: Option<usize>,
}

/// Parse and validate a configuration file, applying flag overrides.
pub fn parse_config(path: &Path, overrides: Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;

    let types = TypeSpace::new(file.types.k)?;
    let k = types.count();
    let mut nu_rows = Vec::with_capacity(file.nu.len());
    for (kdx, row) in file.nu.into_iter().enumerate() {
        if row.len() != k {
            return Err(ConfigError::Parse {
                path: path.display().to_string(),
                message: format!("nu row {} has {} entries, expected K={k}", kdx + 1, row.len()),
            });
        }
        nu_rows.push(
            row.into_iter()
                .map(TypeDistributionOf::from_weights_unchecked)
                .collect::<Vec<_>>(),
        );
    }
    let params = ModelParamsOf {
        types,
        p0: TypeDistributionOf::from_weights_unchecked(file.p0),
        b: MutationMatrixOf::from_rows_unchecked(file.b),
        q: NoMatchVectorOf::from_values_unchecked(file.q),
        nu: MatchChangeKernelOf::from_laws_unchecked(nu_rows),
    };
    let params = validate_params(params)?;

    let agents = overrides
        .agents
        .or(file.run.agents)
        .unwrap_or(DEFAULT_AGENTS);
    let periods = overrides
        .periods
        .or(file.run.periods)
        .unwrap_or(DEFAULT_PERIODS);
    let seed = overrides.seed.or(file.run.seed).unwrap_or(DEFAULT_SEED);
    let replications = overrides
        .replications
        .or(file.run.replications)
        .unwrap_or(DEFAULT_REPLICATIONS);
    if agents == 0 {
        return Err(ConfigError::BadRun {
            what: "agents must be at least 1".to_string(),
        });
    }
    if replications == 0 {
        return Err(ConfigError::BadRun {
            what: "replications must be at least 1".to_string(),
        });
    }
    Ok(RunConfig {
        params,
        agents,
        periods,
        seed,
        replications,
    })
}
