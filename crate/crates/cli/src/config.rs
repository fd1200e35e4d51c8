//! Experiment configuration: a TOML file where every field has a default,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use countlab::datagen::GestureConvention;
use countlab::training::{Pretraining, StageSettings, TrainSpec};
use countlab::{ArmGeometry, FeedbackMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUTPUT_DIR_ENV: &str = "COUNTLAB_OUTPUT_DIR";

/// Pre-training stage overrides; unset fields keep the protocol defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden_size: Option<usize>,
}

impl StageOverrides {
    fn apply(&self, s: &mut StageSettings) {
        if let Some(v) = self.epochs {
            s.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            s.learning_rate = v;
        }
        if let Some(v) = self.hidden_size {
            s.hidden_size = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// 1: one-stage training of a condition; 2: the pre-training pipeline.
    pub study: u8,
    /// Study-1 condition, 1..=8.
    pub condition: u8,
    /// Study-2 output-input gesture loop.
    pub jordan_loop: bool,
    pub convention: GestureConvention,
    pub pretraining: Pretraining,
    pub feedback_mode: FeedbackMode,
    pub base_seed: u64,
    pub repetitions: usize,
    pub test_sets: usize,
    pub sub_epochs: usize,
    /// Defaults to the protocol's rate for the chosen study/condition.
    pub learning_rate: Option<f64>,
    pub hidden_size: usize,
    pub stage1a: StageOverrides,
    pub stage1b: StageOverrides,
    /// Multiplies repetitions, sub-epochs, test sets and pre-training
    /// epochs. 1.0 is the full protocol.
    pub desk_scale: f64,
    pub output_dir: PathBuf,
    pub gesture_table: PathBuf,
    pub checkpoints: bool,
    pub arm: ArmGeometry,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            study: 1,
            condition: 1,
            jordan_loop: false,
            convention: GestureConvention::StayAtLast,
            pretraining: Pretraining::None,
            feedback_mode: FeedbackMode::FreeRunning,
            base_seed: TrainSpec::DEFAULT_SEED,
            repetitions: 15,
            test_sets: 50,
            sub_epochs: 20_000,
            learning_rate: None,
            hidden_size: 68,
            stage1a: StageOverrides::default(),
            stage1b: StageOverrides::default(),
            desk_scale: 1.0,
            output_dir: PathBuf::from("results"),
            gesture_table: PathBuf::from("gesture_table.json"),
            checkpoints: true,
            arm: ArmGeometry::default(),
        }
    }
}

fn scaled(n: usize, factor: f64) -> usize {
    ((n as f64 * factor).round() as usize).max(1)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Resolve into a training spec, applying the desk-scale factor.
    pub fn train_spec(&self) -> CliResult<TrainSpec> {
        if !(self.desk_scale.is_finite() && self.desk_scale > 0.0) {
            return Err(CliError::usage("desk_scale must be a positive number"));
        }
        let mut spec = match self.study {
            1 => {
                if self.pretraining != Pretraining::None {
                    return Err(CliError::usage(
                        "study 1 is one-stage training; use study = 2 for pre-training",
                    ));
                }
                let mut s = TrainSpec::study1(self.condition)?;
                s.condition.convention = self.convention;
                s
            }
            2 => TrainSpec::study2(self.jordan_loop, self.convention, self.pretraining),
            other => {
                return Err(CliError::usage(format!(
                    "unknown study {other}; expected 1 or 2"
                )))
            }
        };
        spec.base_seed = self.base_seed;
        spec.feedback_mode = self.feedback_mode;
        spec.hidden_size = self.hidden_size;
        if let Some(lr) = self.learning_rate {
            spec.learning_rate = lr;
        }
        self.stage1a.apply(&mut spec.stage1a);
        self.stage1b.apply(&mut spec.stage1b);
        let f = self.desk_scale;
        spec.repetitions = scaled(self.repetitions, f);
        spec.test_sets = scaled(self.test_sets, f);
        spec.sub_epochs = scaled(self.sub_epochs, f);
        spec.stage1a.epochs = scaled(spec.stage1a.epochs, f);
        spec.stage1b.epochs = scaled(spec.stage1b.epochs, f);
        spec.validate()?;
        Ok(spec)
    }

    /// Directory name of a run, from its study, wiring, convention and pre-training.
    pub fn label(&self) -> String {
        let conv = self.convention.short();
        match self.study {
            1 => format!("study1-cond{}-{conv}", self.condition),
            _ => format!(
                "study2-{}-{conv}-{}",
                if self.jordan_loop { "L" } else { "NL" },
                self.pretraining
            ),
        }
    }

    pub fn needs_gesture_table(&self) -> CliResult<bool> {
        Ok(self.train_spec()?.condition.uses_gestures())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_full_protocol() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let spec = cfg.train_spec().unwrap();
        assert_eq!(spec, TrainSpec::study1(1).unwrap());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig {
            study: 2,
            pretraining: Pretraining::Both,
            convention: GestureConvention::GoToBase,
            ..Default::default()
        };
        cfg.stage1b.epochs = Some(100);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn desk_scale_shrinks_everything() {
        let cfg = ExperimentConfig {
            study: 2,
            pretraining: Pretraining::Both,
            desk_scale: 0.1,
            ..Default::default()
        };
        let s = cfg.train_spec().unwrap();
        assert_eq!((s.repetitions, s.test_sets, s.sub_epochs), (2, 5, 2000));
        assert_eq!((s.stage1a.epochs, s.stage1b.epochs), (700, 2000));
        assert_eq!(s.learning_rate, 0.001);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let bad = [
            ExperimentConfig {
                study: 3,
                ..Default::default()
            },
            ExperimentConfig {
                condition: 9,
                ..Default::default()
            },
            ExperimentConfig {
                pretraining: Pretraining::Both,
                ..Default::default()
            },
            ExperimentConfig {
                desk_scale: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert_eq!(cfg.train_spec().unwrap_err().exit_code(), 1, "{cfg:?}");
        }
        assert!(ExperimentConfig::from_toml("studdy = 1").is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(ExperimentConfig::default().label(), "study1-cond1-S");
        let cfg = ExperimentConfig {
            study: 2,
            jordan_loop: true,
            convention: GestureConvention::GoToBase,
            pretraining: Pretraining::Stage1b,
            ..Default::default()
        };
        assert_eq!(cfg.label(), "study2-L-B-stage1b");
    }
}
