use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamWConfig;
use super::schedule::{ScheduleKind, ScheduleSpec, Warmup};
use super::{Result, TrainError};
use crate::corpus::MixtureSpec;
use crate::model::{AttentionMode, PoolingStrategy};
use crate::objectives::{ContrastiveConfig, MaskedObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Causal next-token prediction, used to pretrain a base model.
    Clm,
    Mlm,
    Mntp,
    Contrastive,
}

impl Objective {
    pub fn masked(self) -> Option<MaskedObjective> {
        match self {
            Self::Mlm => Some(MaskedObjective::Mlm),
            Self::Mntp => Some(MaskedObjective::Mntp),
            _ => None,
        }
    }

    /// The attention mode this objective trains under.
    pub fn mode(self) -> AttentionMode {
        match self {
            Self::Clm => AttentionMode::Causal,
            _ => AttentionMode::Bidirectional,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clm" => Ok(Self::Clm),
            "mlm" => Ok(Self::Mlm),
            "mntp" => Ok(Self::Mntp),
            "contrastive" => Ok(Self::Contrastive),
            _ => Err(TrainError::Recipe(format!("unknown objective {s:?}"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Clm => "clm",
            Self::Mlm => "mlm",
            Self::Mntp => "mntp",
            Self::Contrastive => "contrastive",
        })
    }
}

/// Everything a training run needs besides the model and the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecipe {
    pub objective: Objective,
    pub mode: AttentionMode,
    pub steps: usize,
    pub batch_size: usize,
    /// Batches per optimizer step.
    pub grad_accum: usize,
    pub schedule: ScheduleSpec,
    pub optimizer: AdamWConfig,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub mask_ratio: f64,
    pub contrastive: ContrastiveConfig,
    /// `None` picks the default for the mode.
    pub pooling: Option<PoolingStrategy>,
    /// Text-batch mixture; `None` is uniform over domains.
    pub mixture: Option<MixtureSpec>,
    /// Token budget per sequence, BOS included.
    pub max_len: usize,
}

impl TrainRecipe {
    pub const DEFAULT_SEED: u64 = 42;
    pub const DEFAULT_MASK_RATIO: f64 = 0.2;
    pub const DEFAULT_MAX_GRAD_NORM: f64 = 1.0;
    /// Share of a linear schedule spent warming up.
    pub const LINEAR_WARMUP_FRACTION: f64 = 0.1;

    /// Desk-scale defaults for an objective.
    pub fn new(objective: Objective) -> Self {
        let steps = 300;
        let schedule = match objective {
            Objective::Contrastive => ScheduleSpec {
                warmup: Warmup::Fraction(Self::LINEAR_WARMUP_FRACTION),
                ..ScheduleSpec::linear(1e-3, 0, steps)
            },
            _ => ScheduleSpec::wsd(2e-3, steps),
        };
        Self {
            objective,
            mode: objective.mode(),
            steps,
            batch_size: 16,
            grad_accum: 1,
            schedule,
            optimizer: AdamWConfig::default(),
            max_grad_norm: Self::DEFAULT_MAX_GRAD_NORM,
            seed: Self::DEFAULT_SEED,
            mask_ratio: Self::DEFAULT_MASK_RATIO,
            contrastive: ContrastiveConfig::default(),
            pooling: None,
            mixture: None,
            max_len: 64,
        }
    }

    /// Sets the run length and stretches the schedule to match.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self.schedule.total_steps = steps;
        self
    }

    pub fn pooling(&self) -> PoolingStrategy {
        self.pooling.unwrap_or_else(|| PoolingStrategy::default_for(self.mode))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Recipe(m));
        if self.mode != self.objective.mode() {
            return bad(format!(
                "objective {} trains in {} mode, recipe says {}",
                self.objective,
                self.objective.mode(),
                self.mode
            ));
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            return bad("batch_size and grad_accum must be at least 1".into());
        }
        if self.schedule.total_steps != self.steps {
            return bad(format!(
                "schedule covers {} steps, recipe runs {}",
                self.schedule.total_steps, self.steps
            ));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad(format!("max_grad_norm {} must be positive", self.max_grad_norm));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return bad(format!("mask_ratio {} outside (0, 1]", self.mask_ratio));
        }
        if !(self.contrastive.temperature > 0.0) {
            return bad(format!("temperature {} must be positive", self.contrastive.temperature));
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2".into());
        }
        if let Some(m) = &self.mixture {
            m.validate()?;
        }
        self.schedule.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RecipeFile = toml::from_str(text).map_err(|e| TrainError::Recipe(e.to_string()))?;
        file.into_recipe()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RecipeFile::from(self)).expect("recipe serializes")
    }
}

/// Flat key-value recipe file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeFile {
    pub objective: Option<Objective>,
    pub mode: Option<AttentionMode>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub grad_accum: Option<usize>,
    pub schedule: Option<ScheduleKind>,
    pub peak_lr: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub warmup_fraction: Option<f64>,
    pub decay_fraction: Option<f64>,
    pub weight_decay: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub seed: Option<u64>,
    pub mask_ratio: Option<f64>,
    pub temperature: Option<f64>,
    pub pooling: Option<PoolingStrategy>,
    pub primary_domain: Option<String>,
    pub multi_domain_ratio: Option<f64>,
    pub multi_domains: Option<Vec<String>>,
    pub max_len: Option<usize>,
}

impl RecipeFile {
    pub fn into_recipe(self) -> Result<TrainRecipe> {
        let objective = self
            .objective
            .ok_or_else(|| TrainError::Recipe("missing key `objective`".into()))?;
        let mut r = TrainRecipe::new(objective);
        if let Some(steps) = self.steps {
            r = r.with_steps(steps);
        }
        r.mode = self.mode.unwrap_or(r.mode);
        r.batch_size = self.batch_size.unwrap_or(r.batch_size);
        r.grad_accum = self.grad_accum.unwrap_or(r.grad_accum);
        if let Some(kind) = self.schedule {
            if kind != r.schedule.kind {
                r.schedule = match kind {
                    ScheduleKind::Wsd => ScheduleSpec::wsd(r.schedule.peak_lr, r.steps),
                    ScheduleKind::Linear => ScheduleSpec {
                        warmup: Warmup::Fraction(TrainRecipe::LINEAR_WARMUP_FRACTION),
                        ..ScheduleSpec::linear(r.schedule.peak_lr, 0, r.steps)
                    },
                };
            }
        }
        r.schedule.peak_lr = self.peak_lr.unwrap_or(r.schedule.peak_lr);
        match (self.warmup_steps, self.warmup_fraction) {
            (Some(_), Some(_)) => {
                return Err(TrainError::Recipe(
                    "give either `warmup_steps` or `warmup_fraction`, not both".into(),
                ))
            }
            (Some(n), None) => r.schedule.warmup = Warmup::Steps(n),
            (None, Some(f)) => r.schedule.warmup = Warmup::Fraction(f),
            (None, None) => {}
        }
        r.schedule.decay_fraction = self.decay_fraction.unwrap_or(r.schedule.decay_fraction);
        let o = &mut r.optimizer;
        o.weight_decay = self.weight_decay.unwrap_or(o.weight_decay);
        o.beta1 = self.beta1.unwrap_or(o.beta1);
        o.beta2 = self.beta2.unwrap_or(o.beta2);
        o.eps = self.adam_eps.unwrap_or(o.eps);
        r.max_grad_norm = self.max_grad_norm.unwrap_or(r.max_grad_norm);
        r.seed = self.seed.unwrap_or(r.seed);
        r.mask_ratio = self.mask_ratio.unwrap_or(r.mask_ratio);
        if let Some(t) = self.temperature {
            r.contrastive = ContrastiveConfig::new(t)?;
        }
        r.pooling = self.pooling.or(r.pooling);
        r.max_len = self.max_len.unwrap_or(r.max_len);
        match self.primary_domain {
            Some(primary) => {
                let multi = self.multi_domains.unwrap_or_default();
                let multi: Vec<&str> = multi.iter().map(String::as_str).collect();
                let ratio = self
                    .multi_domain_ratio
                    .unwrap_or(if multi.is_empty() { 0.0 } else { MixtureSpec::DEFAULT_RATIO });
                r.mixture = Some(MixtureSpec::new(primary, ratio, &multi)?);
            }
            None if self.multi_domains.is_some() || self.multi_domain_ratio.is_some() => {
                return Err(TrainError::Recipe(
                    "`multi_domains` and `multi_domain_ratio` need `primary_domain`".into(),
                ))
            }
            None => {}
        }
        r.validate()?;
        Ok(r)
    }
}

impl From<&TrainRecipe> for RecipeFile {
    fn from(r: &TrainRecipe) -> Self {
        let (warmup_steps, warmup_fraction) = match r.schedule.warmup {
            Warmup::Steps(n) => (Some(n), None),
            Warmup::Fraction(f) => (None, Some(f)),
        };
        Self {
            objective: Some(r.objective),
            mode: Some(r.mode),
            steps: Some(r.steps),
            batch_size: Some(r.batch_size),
            grad_accum: Some(r.grad_accum),
            schedule: Some(r.schedule.kind),
            peak_lr: Some(r.schedule.peak_lr),
            warmup_steps,
            warmup_fraction,
            decay_fraction: Some(r.schedule.decay_fraction),
            weight_decay: Some(r.optimizer.weight_decay),
            beta1: Some(r.optimizer.beta1),
            beta2: Some(r.optimizer.beta2),
            adam_eps: Some(r.optimizer.eps),
            max_grad_norm: Some(r.max_grad_norm),
            seed: Some(r.seed),
            mask_ratio: Some(r.mask_ratio),
            temperature: Some(r.contrastive.temperature),
            pooling: r.pooling,
            primary_domain: r.mixture.as_ref().map(|m| m.primary.clone()),
            multi_domain_ratio: r.mixture.as_ref().map(|m| m.multi_domain_ratio),
            multi_domains: r.mixture.as_ref().map(|m| m.multi_domains.clone()),
            max_len: Some(r.max_len),
        }
    }
}
