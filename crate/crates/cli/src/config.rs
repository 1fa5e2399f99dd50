// SPDX-License-Identifier: Apache-2.0

//! Resolving detector settings from defaults, a named preset, a JSON config
//! file and explicit flags, in increasing order of precedence.

use std::path::Path;

use clap::Args;
use povgraph_core::id_model::{preset, IdHyperparams, StepScheduler};
use povgraph_core::PovConfig;
use serde::{Deserialize, Serialize};

/// Level and degree used when nothing else sets them.
pub const DEFAULT_M: usize = 2;
pub const DEFAULT_THETA: f64 = 1.0;

/// Flat config file: every field optional, unknown fields rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub m: Option<usize>,
    pub theta: Option<f64>,
    pub hidden_channels: Option<usize>,
    pub dropout: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub scheduler: Option<StepScheduler>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub weighted_aggregation: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    /// Start from the published settings for this dataset
    /// (weibo, reddit, disney, books, enron, dgraph)
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON file with any of the fields below
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Level m (path length of each point of view)
    #[arg(long)]
    pub m: Option<usize>,
    /// Degree θ in [0, 1]
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub hidden_channels: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Multiply the learning rate by --scheduler-factor every this many epochs
    #[arg(long, requires = "scheduler_factor")]
    pub scheduler_step: Option<usize>,
    #[arg(long, requires = "scheduler_step")]
    pub scheduler_factor: Option<f64>,
    /// Weight of the reconstruction term in the score
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight of the graph-mean term in the score
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Average over N(v) with pov weights instead of uniformly
    #[arg(long)]
    pub weighted_aggregation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub pov: PovConfig,
    pub model: IdHyperparams,
}

impl ModelFlags {
    /// `seed` is the global `--seed` flag, which outranks the config file.
    pub fn resolve(&self, seed: Option<u64>) -> Result<Resolved, String> {
        let (mut pov, mut model) = match &self.preset {
            Some(name) => preset(name).ok_or_else(|| format!("unknown preset {name:?}"))?,
            None => (
                PovConfig {
                    m: DEFAULT_M,
                    theta: DEFAULT_THETA,
                },
                IdHyperparams::default(),
            ),
        };
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            m: self.m,
            theta: self.theta,
            hidden_channels: self.hidden_channels,
            dropout: self.dropout,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            scheduler: self
                .scheduler_step
                .zip(self.scheduler_factor)
                .map(|(step, factor)| StepScheduler { step, factor }),
            gamma: self.gamma,
            lambda: self.lambda,
            seed,
            weighted_aggregation: self.weighted_aggregation.then_some(true),
        };
        for layer in [file, flags] {
            macro_rules! take {
                ($target:expr, $field:ident) => {
                    if let Some(v) = layer.$field {
                        $target = v;
                    }
                };
            }
            take!(pov.m, m);
            take!(pov.theta, theta);
            take!(model.hidden_channels, hidden_channels);
            take!(model.dropout, dropout);
            take!(model.learning_rate, learning_rate);
            take!(model.epochs, epochs);
            take!(model.gamma, gamma);
            take!(model.lambda, lambda);
            take!(model.seed, seed);
            take!(model.weighted_aggregation, weighted_aggregation);
            if layer.scheduler.is_some() {
                model.scheduler = layer.scheduler;
            }
        }
        pov.validate().map_err(|e| e.to_string())?;
        model.validate().map_err(|e| e.to_string())?;
        Ok(Resolved { pov, model })
    }
}
