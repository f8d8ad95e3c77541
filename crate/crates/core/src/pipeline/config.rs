//! Run configuration, read from TOML with `key.path=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{GenerateConfig, TaskKind};
use crate::denoiser::DenoiserConfig;
use crate::diffusion::{NoiseSchedule, RotationStep};
use crate::encoders::{CloudEncoderConfig, PatchEncoderConfig};
use crate::graph::SparsifierConfig;
use crate::metrics::DEFAULT_PA_THRESHOLD;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Sampler visits every `stride`-th timestep.
    pub stride: usize,
    /// Re-inject posterior noise at every reverse step.
    pub stochastic: bool,
    pub rotation_step: RotationStep,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 300,
            beta_start: 1e-4,
            beta_end: 0.02,
            stride: 1,
            stochastic: false,
            rotation_step: RotationStep::Posterior,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    Adagrad,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { algorithm: Algorithm::Adagrad, lr: 1e-4, eps: 1e-10, beta1: 0.9, beta2: 0.999, clip_norm: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub translation: f64,
    pub rotation: f64,
    pub chamfer: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { translation: 1.0, rotation: 1.0, chamfer: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    /// Instances of any size share a batch.
    #[default]
    Mixed,
    /// Each batch holds instances with one piece count.
    PerSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    /// Epochs without relative improvement before stopping; 0 disables.
    pub patience: usize,
    pub min_delta: f64,
    /// Wall-clock budget in seconds; 0 means unlimited.
    pub time_budget: f64,
    /// Evaluate training-set accuracy every this many epochs (0 = never) and
    /// stop once it reaches `target_accuracy`.
    pub eval_every: usize,
    pub target_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 8,
            batch_mode: BatchMode::Mixed,
            patience: 20,
            min_delta: 1e-3,
            time_budget: 0.0,
            eval_every: 0,
            target_accuracy: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsifyConfig {
    pub enabled: bool,
    pub prune_fraction: f64,
    pub virtual_count: usize,
    pub expander_degree: usize,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        let s = SparsifierConfig::default();
        SparsifyConfig {
            enabled: false,
            prune_fraction: s.prune_fraction,
            virtual_count: s.virtual_count,
            expander_degree: s.expander_degree,
        }
    }
}

impl SparsifyConfig {
    pub fn with_seed(&self, seed: u64) -> SparsifierConfig {
        SparsifierConfig {
            prune_fraction: self.prune_fraction,
            virtual_count: self.virtual_count,
            expander_degree: self.expander_degree,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    pub pa_threshold: f64,
    /// Fraction of pieces removed before solving (puzzles only).
    pub missing: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seeds: vec![0, 1, 2, 3, 4], pa_threshold: DEFAULT_PA_THRESHOLD, missing: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub patch_size: usize,
    /// Timesteps visited per timed solve.
    pub solve_steps: usize,
    /// Sizes whose dense edge count exceeds this are recorded as skipped.
    pub max_edges: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { sizes: vec![16, 100, 400, 900], repeats: 5, patch_size: 4, solve_steps: 5, max_edges: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// Overrides applied on top of the base configuration.
    pub set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub variants: Vec<Variant>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        let prune = |p: f64| Variant {
            name: format!("prune-{p}"),
            set: vec!["sparsify.enabled=true".into(), format!("sparsify.prune_fraction={p}")],
        };
        AblateConfig { variants: vec![prune(0.0), prune(0.2), prune(0.6), prune(0.8)] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    pub patch_encoder: PatchEncoderConfig,
    pub cloud_encoder: CloudEncoderConfig,
    pub sparsify: SparsifyConfig,
    pub optimizer: OptimizerConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub data: GenerateConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub ablate: AblateConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Puzzle2d,
            seed: 0,
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig::default(),
            patch_encoder: PatchEncoderConfig::default(),
            cloud_encoder: CloudEncoderConfig::default(),
            sparsify: SparsifyConfig::default(),
            optimizer: OptimizerConfig::default(),
            loss: LossWeights::default(),
            train: TrainConfig::default(),
            data: GenerateConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            ablate: AblateConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable")
    }

    /// Applies `a.b.c=value` overrides. Values are parsed as TOML and fall
    /// back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<RunConfig> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` lacks `=`")))?;
            let value = parse_value(raw.trim());
            let mut parts: Vec<&str> = key.trim().split('.').collect();
            let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| Error::Config(format!("empty key in `{o}`")))?;
            let mut table = &mut root;
            for p in parts {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
            }
            table.insert(leaf.to_string(), value);
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.loss;
        if [w.translation, w.rotation, w.chamfer].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.optimizer.lr)));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.schedule.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if !(0.0..=0.9).contains(&self.eval.missing) {
            return Err(Error::Config(format!("eval.missing {} outside [0, 0.9]", self.eval.missing)));
        }
        if self.loss.chamfer > 0.0 && self.task == TaskKind::Puzzle2d {
            return Err(Error::Config("the Chamfer loss applies to fragments only".into()));
        }
        self.schedule.build()?;
        self.denoiser.validate()?;
        if self.sparsify.enabled {
            self.sparsify.with_seed(0).validate()?;
            if self.sparsify.virtual_count > self.denoiser.virtual_slots {
                return Err(Error::Config(format!(
                    "{} virtual nodes exceed the denoiser's {} slots",
                    self.sparsify.virtual_count, self.denoiser.virtual_slots
                )));
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.optimizer.lr, 1e-4);
        assert_eq!(cfg.optimizer.algorithm, Algorithm::Adagrad);
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::default()
            .with_overrides(&["optimizer.lr=0.01", "task=\"frag3d\"", "denoiser.backend=plain-gcn", "eval.seeds=[7, 8]"])
            .unwrap();
        assert_eq!(cfg.optimizer.lr, 0.01);
        assert_eq!(cfg.task, TaskKind::Frag3d);
        assert_eq!(cfg.denoiser.backend, crate::denoiser::Backend::PlainGcn);
        assert_eq!(cfg.eval.seeds, vec![7, 8]);
        assert!(matches!(RunConfig::default().with_overrides(&["optimizer.lr=-1"]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::default().with_overrides(&["nonsense.key=1"]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::default().with_overrides(&["loss.rotation=-0.5"]), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[optimizer]\nlearning_rate = 1.0\n"), Err(Error::Config(_))));
    }
}
