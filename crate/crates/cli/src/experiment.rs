//! Gridworld experiment config files.

use std::path::Path;

use anyhow::{bail, Context};
use dynorm_core::gridworld::{AgentSpec, EnvKind, ExperimentConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    One(f64),
    Sweep(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vanilla,
    Aup,
}

fn default_n_aux() -> usize {
    5
}

fn default_eval() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub sigma: Option<SigmaSpec>,
    #[serde(default = "default_n_aux")]
    pub n_aux: usize,
    pub episodes: usize,
    #[serde(default = "default_eval")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    pub discount: Option<f64>,
    pub aux_episodes: Option<usize>,
    /// Stop-button only: report the disable-emergence threshold over these discounts.
    pub discounts: Option<Vec<f64>>,
}

/// What a config asks for.
pub enum Plan {
    Single(ExperimentConfig),
    Sweep(ExperimentConfig, Vec<f64>, usize),
    Threshold {
        discounts: Vec<f64>,
        episodes: usize,
        eval_episodes: usize,
        seed: u64,
    },
}

impl ConfigFile {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("invalid experiment config {}", path.display()))
    }

    pub fn plan(&self, seed: Option<u64>, sigma: Option<f64>) -> anyhow::Result<Plan> {
        let seed = seed.unwrap_or(self.seed);
        if self.episodes == 0 {
            bail!("episodes must be positive");
        }
        if let Some(discounts) = &self.discounts {
            if self.env != EnvKind::StopButton || self.agent != AgentKind::Vanilla {
                bail!("`discounts` is only supported for a vanilla stop-button config");
            }
            if discounts.is_empty() || discounts.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
                bail!("`discounts` must be non-empty and inside (0, 1)");
            }
            return Ok(Plan::Threshold {
                discounts: discounts.clone(),
                episodes: self.episodes,
                eval_episodes: self.eval_episodes,
                seed,
            });
        }
        let sigma = match (sigma, &self.sigma) {
            (Some(s), _) => Some(SigmaSpec::One(s)),
            (None, s) => s.clone(),
        };
        let base = |agent| ExperimentConfig {
            env: self.env,
            agent,
            episodes: self.episodes,
            eval_episodes: self.eval_episodes,
            seed,
            discount: self.discount,
            aux_episodes: self.aux_episodes,
        };
        if let Some(d) = self.discount {
            if !(d > 0.0 && d < 1.0) {
                bail!("discount must lie in (0, 1), got {d}");
            }
        }
        match (self.agent, sigma) {
            (AgentKind::Vanilla, None) => Ok(Plan::Single(base(AgentSpec::Vanilla))),
            (AgentKind::Vanilla, Some(_)) => bail!("`sigma` needs agent \"aup\""),
            (AgentKind::Aup, None) => bail!("agent \"aup\" needs `sigma`"),
            (AgentKind::Aup, Some(spec)) => {
                if self.n_aux == 0 {
                    bail!("`n_aux` must be at least 1");
                }
                let sigmas = match &spec {
                    SigmaSpec::One(s) => vec![*s],
                    SigmaSpec::Sweep(v) => v.clone(),
                };
                if sigmas.is_empty() || sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    bail!("sigma values must be finite and non-negative");
                }
                match spec {
                    SigmaSpec::One(s) => Ok(Plan::Single(base(AgentSpec::Aup {
                        sigma: s,
                        n_aux: self.n_aux,
                    }))),
                    SigmaSpec::Sweep(v) => Ok(Plan::Sweep(
                        base(AgentSpec::Aup {
                            sigma: v[0],
                            n_aux: self.n_aux,
                        }),
                        v,
                        self.n_aux,
                    )),
                }
            }
        }
    }
}
