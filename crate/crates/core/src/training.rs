//! Training protocols: one-stage training of any condition, the two
//! pre-training stages, the stitched final stage, and repeated runs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    gen_sub_epoch, recitation_batch, wire_condition, ConditionSpec, GestureConvention, SubEpochSet,
};
use crate::evaluation::{aggregate, decode_numbers, evaluate, AccuracyReport, Summary, Word};
use crate::gesture::GestureTable;
use crate::network::{init_network, stitch_pretrained, FeedbackMode, NetworkState, SequenceBatch};
use crate::numerics::{adam_step, AdamState, Rng};
use crate::{Error, Result};

const STREAM_STAGE1A: u64 = 0x1A;
const STREAM_STAGE1B: u64 = 0x1B;
const STREAM_MAIN: u64 = 0x02;
const STREAM_TEST: u64 = 0x7E57;
const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pretraining {
    None,
    Stage1a,
    Stage1b,
    Both,
}

impl Pretraining {
    pub const ALL: [Pretraining; 4] = [
        Pretraining::None,
        Pretraining::Stage1a,
        Pretraining::Stage1b,
        Pretraining::Both,
    ];

    pub fn uses_recitation(&self) -> bool {
        matches!(self, Pretraining::Stage1a | Pretraining::Both)
    }

    pub fn uses_pointing(&self) -> bool {
        matches!(self, Pretraining::Stage1b | Pretraining::Both)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Pretraining::None => "none",
            Pretraining::Stage1a => "stage1a",
            Pretraining::Stage1b => "stage1b",
            Pretraining::Both => "both",
        }
    }
}

impl fmt::Display for Pretraining {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pretraining {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pretraining::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown pretraining option {s:?}")))
    }
}

/// Length, step size and width of one training stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    /// Optimizer steps (epochs for recitation, sub-epochs otherwise).
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
}

impl StageSettings {
    fn validate(&self, what: &str) -> Result<()> {
        if self.epochs == 0 || self.hidden_size == 0 {
            return Err(Error::config(format!(
                "{what}: epochs and hidden size must be positive"
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "{what}: learning rate must be positive"
            )));
        }
        Ok(())
    }
}

/// Everything needed to reproduce one experimental condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub condition: ConditionSpec,
    pub sub_epochs: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub repetitions: usize,
    pub test_sets: usize,
    pub base_seed: u64,
    pub pretraining: Pretraining,
    pub feedback_mode: FeedbackMode,
    pub stage1a: StageSettings,
    pub stage1b: StageSettings,
}

impl TrainSpec {
    pub const DEFAULT_SEED: u64 = 1;

    /// One-stage training of a study-1 condition.
    pub fn study1(id: u8) -> Result<TrainSpec> {
        let condition = ConditionSpec::study1(id)?;
        Ok(TrainSpec {
            condition,
            sub_epochs: 20_000,
            learning_rate: if id == 2 { 0.02 } else { 0.005 },
            hidden_size: 68,
            repetitions: 15,
            test_sets: 50,
            base_seed: Self::DEFAULT_SEED,
            pretraining: Pretraining::None,
            feedback_mode: FeedbackMode::FreeRunning,
            stage1a: StageSettings {
                epochs: 7_000,
                learning_rate: 0.01,
                hidden_size: 20,
            },
            stage1b: StageSettings {
                epochs: 20_000,
                learning_rate: 0.02,
                hidden_size: 48,
            },
        })
    }

    /// Final-stage training of the visual → numbers + gestures network.
    /// Without pre-training this is exactly study-1 condition 3 (or 4 with
    /// the loop), including its learning rate; with any pre-training the
    /// final stage runs at 0.001.
    pub fn study2(
        jordan_loop: bool,
        convention: GestureConvention,
        pretraining: Pretraining,
    ) -> TrainSpec {
        let base = Self::study1(3).expect("condition 3 exists");
        TrainSpec {
            condition: ConditionSpec::study2(jordan_loop, convention),
            learning_rate: if pretraining == Pretraining::None {
                0.005
            } else {
                0.001
            },
            pretraining,
            ..base
        }
    }

    pub fn convention(&self) -> GestureConvention {
        self.condition.convention
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_epochs == 0 || self.repetitions == 0 || self.test_sets == 0 {
            return Err(Error::config(
                "sub-epochs, repetitions and test sets must all be positive",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        self.condition.block_config(self.hidden_size).validate()?;
        if self.pretraining != Pretraining::None {
            let c = &self.condition;
            if !(c.visual_input && c.number_output && c.gesture_output) || c.gesture_input {
                return Err(Error::config(
                    "pre-training applies only to the visual -> numbers + gestures network",
                ));
            }
            let mut used = 0;
            if self.pretraining.uses_recitation() {
                self.stage1a.validate("stage 1A")?;
                used += self.stage1a.hidden_size;
            }
            if self.pretraining.uses_pointing() {
                self.stage1b.validate("stage 1B")?;
                used += self.stage1b.hidden_size;
            }
            let exact = self.pretraining == Pretraining::Both;
            if (exact && used != self.hidden_size) || used >= self.hidden_size + usize::from(exact)
            {
                return Err(Error::config(format!(
                    "hidden size {} does not fit the pre-trained partitions",
                    self.hidden_size
                )));
            }
        }
        Ok(())
    }

    /// Seed of repetition `index`.
    pub fn repetition_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Loss per optimizer step, measured on the batch before the update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub total: Vec<f64>,
    pub counting: Vec<f64>,
    pub gesture: Vec<f64>,
    pub wall_seconds: f64,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub network: NetworkState,
    pub trace: TrainTrace,
}

/// Adam with one update per batch: the gradient is summed over every
/// sequence the batch holds.
pub fn train_loop(
    net: &mut NetworkState,
    steps: usize,
    learning_rate: f64,
    mode: FeedbackMode,
    mut next_batch: impl FnMut(usize) -> Result<SequenceBatch>,
) -> Result<TrainTrace> {
    let start = Instant::now();
    let mut states: Vec<AdamState> = net
        .params
        .tensors()
        .iter()
        .map(|(_, m)| AdamState::for_param(m, learning_rate))
        .collect();
    let mut trace = TrainTrace {
        total: Vec::with_capacity(steps),
        counting: Vec::with_capacity(steps),
        gesture: Vec::with_capacity(steps),
        wall_seconds: 0.0,
    };
    for step in 0..steps {
        let batch = next_batch(step)?;
        let (grads, loss) = net.bptt_gradients(&batch, mode)?;
        trace.total.push(loss.total());
        trace.counting.push(loss.counting);
        trace.gesture.push(loss.gesture);
        let grads = grads.tensors();
        for ((param, (_, grad)), state) in net
            .params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(states.iter_mut())
        {
            adam_step(param, grad, state)?;
        }
    }
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok(trace)
}

/// Train `spec` from `net` on fresh sub-epochs drawn from `data_rng`.
fn train_on_sub_epochs(
    net: &mut NetworkState,
    condition: &ConditionSpec,
    steps: usize,
    learning_rate: f64,
    mode: FeedbackMode,
    table: &GestureTable,
    data_rng: &mut Rng,
) -> Result<TrainTrace> {
    train_loop(net, steps, learning_rate, mode, |_| {
        let set = gen_sub_epoch(condition.convention, table, data_rng);
        wire_condition(condition, &set.pairs)
    })
}

/// Number recitation from the trigger alone on the fixed two-sequence set.
pub fn train_stage1a(settings: &StageSettings, rng: &Rng) -> Result<StageResult> {
    settings.validate("stage 1A")?;
    let cfg = ConditionSpec::recitation().block_config(settings.hidden_size);
    let mut net = init_network(cfg, &mut rng.substream(STREAM_INIT))?;
    let batch = recitation_batch();
    let trace = train_loop(
        &mut net,
        settings.epochs,
        settings.learning_rate,
        FeedbackMode::FreeRunning,
        |_| Ok(batch.clone()),
    )?;
    Ok(StageResult {
        network: net,
        trace,
    })
}

/// Whether a recitation network says 1..10 then stops when triggered, and
/// stays silent otherwise.
pub fn recites_correctly(net: &NetworkState) -> Result<bool> {
    let batch = recitation_batch();
    let act = net.forward(&batch, FeedbackMode::FreeRunning)?;
    let off = decode_numbers(&act.sequence_numbers(0).ok_or_else(no_numbers)?);
    let on = decode_numbers(&act.sequence_numbers(1).ok_or_else(no_numbers)?);
    let want: Vec<Word> = (0..batch.steps)
        .map(|t| {
            if t < 10 {
                Word::Number(t as u8 + 1)
            } else {
                Word::Silence
            }
        })
        .collect();
    Ok(off.iter().all(|w| *w == Word::Silence) && on == want)
}

fn no_numbers() -> Error {
    Error::invalid("network has no number output")
}

/// Pointing from visual input, trained like study-1 condition 2.
pub fn train_stage1b(
    settings: &StageSettings,
    convention: GestureConvention,
    table: &GestureTable,
    rng: &Rng,
) -> Result<StageResult> {
    settings.validate("stage 1B")?;
    let condition = ConditionSpec::pointing(convention);
    let cfg = condition.block_config(settings.hidden_size);
    let mut net = init_network(cfg, &mut rng.substream(STREAM_INIT))?;
    let trace = train_on_sub_epochs(
        &mut net,
        &condition,
        settings.epochs,
        settings.learning_rate,
        FeedbackMode::FreeRunning,
        table,
        &mut rng.substream(STREAM_DATA),
    )?;
    Ok(StageResult {
        network: net,
        trace,
    })
}

/// Main training: stitched from the given pre-trained networks, or fresh
/// when neither is given.
pub fn train_stage2(
    spec: &TrainSpec,
    recitation: Option<&NetworkState>,
    pointing: Option<&NetworkState>,
    table: &GestureTable,
    rng: &Rng,
) -> Result<StageResult> {
    let cfg = spec.condition.block_config(spec.hidden_size);
    let mut init_rng = rng.substream(STREAM_INIT);
    let mut net = if recitation.is_none() && pointing.is_none() {
        init_network(cfg, &mut init_rng)?
    } else {
        stitch_pretrained(recitation, pointing, cfg, &mut init_rng)?
    };
    let trace = train_on_sub_epochs(
        &mut net,
        &spec.condition,
        spec.sub_epochs,
        spec.learning_rate,
        spec.feedback_mode,
        table,
        &mut rng.substream(STREAM_DATA),
    )?;
    Ok(StageResult {
        network: net,
        trace,
    })
}

/// Pre-trained networks of one repetition.
#[derive(Debug, Clone, Default)]
pub struct PretrainedNets {
    pub recitation: Option<StageResult>,
    pub pointing: Option<StageResult>,
}

impl PretrainedNets {
    /// Only the networks `option` asks for.
    pub fn restricted_to(&self, option: Pretraining) -> PretrainedNets {
        PretrainedNets {
            recitation: self.recitation.clone().filter(|_| option.uses_recitation()),
            pointing: self.pointing.clone().filter(|_| option.uses_pointing()),
        }
    }
}

/// Run the pre-training stages `spec` asks for, for repetition `index`.
pub fn pretrain(spec: &TrainSpec, table: &GestureTable, index: usize) -> Result<PretrainedNets> {
    let root = Rng::new(spec.repetition_seed(index));
    let recitation = spec
        .pretraining
        .uses_recitation()
        .then(|| train_stage1a(&spec.stage1a, &root.substream(STREAM_STAGE1A)))
        .transpose()?;
    let pointing = spec
        .pretraining
        .uses_pointing()
        .then(|| {
            train_stage1b(
                &spec.stage1b,
                spec.convention(),
                table,
                &root.substream(STREAM_STAGE1B),
            )
        })
        .transpose()?;
    Ok(PretrainedNets {
        recitation,
        pointing,
    })
}

/// The held-out sub-epochs of repetition `index`.
pub fn test_sets(spec: &TrainSpec, table: &GestureTable, index: usize) -> Vec<SubEpochSet> {
    let mut rng = Rng::new(spec.repetition_seed(index)).substream(STREAM_TEST);
    (0..spec.test_sets)
        .map(|_| gen_sub_epoch(spec.convention(), table, &mut rng))
        .collect()
}

/// Results of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub index: usize,
    pub seed: u64,
    pub counting: Option<f64>,
    pub gesture: Option<f64>,
    /// Recitation network passed its check (when stage 1A ran).
    pub stage1a_recites: Option<bool>,
    /// Gesture accuracy of the pointing network alone (when stage 1B ran).
    pub stage1b_gesture: Option<f64>,
    pub report: AccuracyReport,
}

#[derive(Debug, Clone)]
pub struct RepetitionOutcome {
    pub row: RepetitionRow,
    pub main: StageResult,
    pub pretrained: PretrainedNets,
}

/// Train and evaluate repetition `index` given its pre-trained networks.
pub fn run_repetition_with(
    spec: &TrainSpec,
    table: &GestureTable,
    index: usize,
    pretrained: PretrainedNets,
) -> Result<RepetitionOutcome> {
    spec.validate()?;
    if pretrained.recitation.is_some() != spec.pretraining.uses_recitation()
        || pretrained.pointing.is_some() != spec.pretraining.uses_pointing()
    {
        return Err(Error::invalid(format!(
            "pre-trained networks do not match pretraining option {}",
            spec.pretraining
        )));
    }
    let root = Rng::new(spec.repetition_seed(index));
    let main = train_stage2(
        spec,
        pretrained.recitation.as_ref().map(|s| &s.network),
        pretrained.pointing.as_ref().map(|s| &s.network),
        table,
        &root.substream(STREAM_MAIN),
    )?;
    let tests = test_sets(spec, table, index);
    let report = evaluate(&main.network, &spec.condition, table, &tests)?;
    let stage1a_recites = pretrained
        .recitation
        .as_ref()
        .map(|s| recites_correctly(&s.network))
        .transpose()?;
    let stage1b_gesture = match &pretrained.pointing {
        Some(s) => {
            evaluate(
                &s.network,
                &ConditionSpec::pointing(spec.convention()),
                table,
                &tests,
            )?
            .gesture
        }
        None => None,
    };
    Ok(RepetitionOutcome {
        row: RepetitionRow {
            index,
            seed: spec.repetition_seed(index),
            counting: report.counting,
            gesture: report.gesture,
            stage1a_recites,
            stage1b_gesture,
            report,
        },
        main,
        pretrained,
    })
}

pub fn run_repetition(
    spec: &TrainSpec,
    table: &GestureTable,
    index: usize,
) -> Result<RepetitionOutcome> {
    spec.validate()?;
    let pretrained = pretrain(spec, table, index)?;
    run_repetition_with(spec, table, index, pretrained)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    Parallel,
}

/// Aggregated results over repetitions. Wall time is deliberately absent so
/// that equal specs give equal reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: TrainSpec,
    pub rows: Vec<RepetitionRow>,
    pub counting: Option<Summary>,
    pub gesture: Option<Summary>,
    pub stage1b_gesture: Option<Summary>,
}

/// Mean and SD of the present values; SD is 0 for a single value.
fn summarize(values: impl Iterator<Item = Option<f64>>) -> Result<Option<Summary>> {
    let v: Vec<f64> = values.flatten().collect();
    match v.len() {
        0 => Ok(None),
        1 => Ok(Some(Summary {
            mean: v[0],
            sd: 0.0,
            n: 1,
        })),
        _ => aggregate(&v).map(Some),
    }
}

impl RunReport {
    pub fn from_rows(spec: TrainSpec, mut rows: Vec<RepetitionRow>) -> Result<RunReport> {
        rows.sort_by_key(|r| r.index);
        Ok(RunReport {
            counting: summarize(rows.iter().map(|r| r.counting))?,
            gesture: summarize(rows.iter().map(|r| r.gesture))?,
            stage1b_gesture: summarize(rows.iter().map(|r| r.stage1b_gesture))?,
            spec,
            rows,
        })
    }
}

pub struct ExperimentOutput {
    pub report: RunReport,
    pub repetitions: Vec<RepetitionOutcome>,
}

/// All repetitions of `spec`. Repetitions share no state, and results are
/// merged by repetition index, so both execution modes agree exactly.
pub fn run_experiment(
    spec: &TrainSpec,
    table: &GestureTable,
    execution: Execution,
) -> Result<ExperimentOutput> {
    spec.validate()?;
    let run = |i| run_repetition(spec, table, i);
    let outcomes: Result<Vec<RepetitionOutcome>> = match execution {
        Execution::Serial => (0..spec.repetitions).map(run).collect(),
        Execution::Parallel => (0..spec.repetitions).into_par_iter().map(run).collect(),
    };
    let outcomes = outcomes?;
    let report = RunReport::from_rows(*spec, outcomes.iter().map(|o| o.row.clone()).collect())?;
    Ok(ExperimentOutput {
        report,
        repetitions: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{build_gesture_table, ArmGeometry, ArmModel};

    fn table() -> GestureTable {
        build_gesture_table(&ArmModel::new(ArmGeometry::default()).unwrap()).unwrap()
    }

    fn tiny(mut spec: TrainSpec) -> TrainSpec {
        spec.sub_epochs = 30;
        spec.repetitions = 3;
        spec.test_sets = 2;
        spec.stage1a.epochs = 20;
        spec.stage1b.epochs = 20;
        spec
    }

    #[test]
    fn defaults() {
        let s = TrainSpec::study1(1).unwrap();
        assert_eq!(
            (s.sub_epochs, s.repetitions, s.test_sets, s.hidden_size),
            (20_000, 15, 50, 68)
        );
        assert_eq!(s.learning_rate, 0.005);
        assert_eq!(TrainSpec::study1(2).unwrap().learning_rate, 0.02);
        assert_eq!(
            (
                s.stage1a.epochs,
                s.stage1a.learning_rate,
                s.stage1a.hidden_size
            ),
            (7_000, 0.01, 20)
        );
        assert_eq!(s.stage1b.hidden_size, 48);
        let s2 = TrainSpec::study2(false, GestureConvention::GoToBase, Pretraining::Both);
        assert_eq!(s2.learning_rate, 0.001);
        assert!(s2.validate().is_ok());
    }

    #[test]
    fn pretraining_round_trips_through_strings() {
        for p in Pretraining::ALL {
            assert_eq!(p.as_str().parse::<Pretraining>().unwrap(), p);
        }
        assert!("stage1c".parse::<Pretraining>().is_err());
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut s = TrainSpec::study1(1).unwrap();
        s.repetitions = 0;
        assert!(s.validate().is_err());
        let mut s = TrainSpec::study1(7).unwrap();
        s.pretraining = Pretraining::Both;
        assert!(s.validate().is_err());
        let mut s = TrainSpec::study2(false, GestureConvention::StayAtLast, Pretraining::Both);
        s.hidden_size = 60;
        assert!(s.validate().is_err());
    }

    #[test]
    fn trace_components_sum_to_total() {
        let table = table();
        let spec = tiny(TrainSpec::study1(3).unwrap());
        let out = run_repetition(&spec, &table, 0).unwrap();
        let t = &out.main.trace;
        assert_eq!(t.len(), 30);
        for i in 0..t.len() {
            assert!(t.counting[i] >= 0.0 && t.gesture[i] >= 0.0);
            assert_eq!(t.total[i], t.counting[i] + t.gesture[i]);
        }
    }

    #[test]
    fn training_does_not_touch_the_table() {
        let table = table();
        let before = table.clone();
        let spec = tiny(TrainSpec::study1(8).unwrap());
        run_repetition(&spec, &table, 0).unwrap();
        assert_eq!(table, before);
    }

    #[test]
    fn same_seed_same_report_serial_or_parallel() {
        let table = table();
        let spec = tiny(TrainSpec::study2(
            true,
            GestureConvention::GoToBase,
            Pretraining::Both,
        ));
        let a = run_experiment(&spec, &table, Execution::Serial)
            .unwrap()
            .report;
        let b = run_experiment(&spec, &table, Execution::Serial)
            .unwrap()
            .report;
        let c = run_experiment(&spec, &table, Execution::Parallel)
            .unwrap()
            .report;
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.rows.len(), 3);
        assert!(a.rows.iter().all(|r| r.stage1a_recites.is_some()));
        assert!(a.stage1b_gesture.is_some());
    }

    #[test]
    fn repetitions_use_different_data() {
        let table = table();
        let spec = tiny(TrainSpec::study1(1).unwrap());
        assert_ne!(test_sets(&spec, &table, 0), test_sets(&spec, &table, 1));
        assert_eq!(test_sets(&spec, &table, 1), test_sets(&spec, &table, 1));
    }

    #[test]
    fn mismatched_pretrained_nets_are_rejected() {
        let table = table();
        let spec = tiny(TrainSpec::study2(
            false,
            GestureConvention::StayAtLast,
            Pretraining::Both,
        ));
        let err = run_repetition_with(&spec, &table, 0, PretrainedNets::default());
        assert!(err.is_err());
    }
}
