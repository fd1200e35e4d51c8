//! Decoding network outputs into words and pointing targets, and scoring
//! trained networks on held-out sub-epochs.

mod stats;

pub use stats::{
    aggregate, f_upper_tail, ln_gamma, one_way_anova, regularized_incomplete_beta, AnovaResult,
    Summary,
};

use serde::{Deserialize, Serialize};

use crate::datagen::{
    wire_condition, ConditionSpec, GestureConvention, SequencePair, SubEpochSet, SEQUENCE_LEN,
};
use crate::gesture::{GestureTable, BASE_INDEX, POSITIONS};
use crate::network::{FeedbackMode, NetworkState, NUMBER_WIDTH};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Output value below which a number unit does not count as spoken.
pub const SPEAK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Word {
    Silence,
    /// 1..=10
    Number(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pointed {
    /// The zero gesture vector.
    Rest,
    Position(u8),
    Base,
}

/// Winner-take-all over the 10 number units per row, silence when the
/// winner is below [`SPEAK_THRESHOLD`]. Ties go to the lower number.
pub fn decode_numbers(outputs: &Matrix) -> Vec<Word> {
    (0..outputs.rows())
        .map(|t| {
            let row = outputs.row(t);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().take(NUMBER_WIDTH) {
                if v > row[best] {
                    best = k;
                }
            }
            if row[best] < SPEAK_THRESHOLD {
                Word::Silence
            } else {
                Word::Number(best as u8 + 1)
            }
        })
        .collect()
}

/// Nearest labelled gesture per row. Candidates are the 20 pointing
/// positions, the base posture and, under stay-at-last, the zero vector.
pub fn decode_gestures(
    outputs: &Matrix,
    table: &GestureTable,
    convention: GestureConvention,
) -> Vec<Pointed> {
    let mut candidates: Vec<(Pointed, [f64; 3])> = (0..POSITIONS)
        .map(|i| (Pointed::Position(i as u8), table.position(i)))
        .collect();
    candidates.push((Pointed::Base, table.vectors[BASE_INDEX]));
    if convention == GestureConvention::StayAtLast {
        candidates.push((Pointed::Rest, [0.0; 3]));
    }
    (0..outputs.rows())
        .map(|t| {
            let row = outputs.row(t);
            let mut best = (candidates[0].0, f64::INFINITY);
            for (label, v) in &candidates {
                let d: f64 = v.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (*label, d);
                }
            }
            best.0
        })
        .collect()
}

/// Counting is correct only if every step's word matches.
pub fn counting_correct(decoded: &[Word], target: &[Word]) -> bool {
    decoded == target
}

/// Correct pointing labels among the first `n + 1` steps.
pub fn gesture_hits(decoded: &[Pointed], target: &[Pointed], n_objects: usize) -> usize {
    let span = (n_objects + 1).min(target.len());
    decoded
        .iter()
        .zip(target)
        .take(span)
        .filter(|(a, b)| a == b)
        .count()
}

/// Decoded on-sequence of one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSequence {
    pub words: Option<Vec<Word>>,
    pub pointed: Option<Vec<Pointed>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    /// 0 or 1.
    pub counting: Option<f64>,
    pub gesture: Option<f64>,
}

/// Score a decoded on-sequence against its pair's targets.
pub fn score_pair(decoded: &DecodedSequence, pair: &SequencePair) -> PairScore {
    let n = pair.n_objects();
    PairScore {
        counting: decoded.words.as_ref().map(|w| {
            if counting_correct(w, &pair.on.words) {
                1.0
            } else {
                0.0
            }
        }),
        gesture: decoded.pointed.as_ref().map(|p| {
            gesture_hits(p, &pair.on.pointing, n) as f64 / (n + 1).min(SEQUENCE_LEN) as f64
        }),
    }
}

/// Accuracies are fractions in `[0, 1]`. `None` where the condition has no
/// such output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Mean over numerosities 1..=10 of exact-sequence counting.
    pub counting: Option<f64>,
    /// Mean over numerosities 1..=10 of per-step pointing accuracy.
    pub gesture: Option<f64>,
    /// Index `n` holds the accuracy for numerosity `n`, 0..=10.
    pub counting_by_numerosity: Option<Vec<f64>>,
    pub gesture_by_numerosity: Option<Vec<f64>>,
    /// Trigger-off sequences whose number outputs stayed silent throughout.
    pub off_silence: Option<f64>,
    pub test_sets: usize,
}

#[derive(Default)]
struct Tally {
    sequences: [usize; 11],
    counting: [usize; 11],
    gesture_hits: [usize; 11],
    gesture_steps: [usize; 11],
    off_total: usize,
    off_silent: usize,
}

impl Tally {
    fn add_pair(
        &mut self,
        pair: &SequencePair,
        words: Option<(&[Word], &[Word])>,
        pointed: Option<&[Pointed]>,
    ) {
        let n = pair.n_objects();
        self.sequences[n] += 1;
        if let Some((on, off)) = words {
            if counting_correct(on, &pair.on.words) {
                self.counting[n] += 1;
            }
            self.off_total += 1;
            if off.iter().all(|w| *w == Word::Silence) {
                self.off_silent += 1;
            }
        }
        if let Some(p) = pointed {
            self.gesture_hits[n] += gesture_hits(p, &pair.on.pointing, n);
            self.gesture_steps[n] += (n + 1).min(pair.on.pointing.len());
        }
    }
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

fn mean_over_counted(v: &[f64]) -> f64 {
    v[1..].iter().sum::<f64>() / (v.len() - 1) as f64
}

/// Run `net` free-running over every pair of every test set and score it.
/// Per-numerosity hits are accumulated as integers, so the result does not
/// depend on the order of `sets`.
pub fn evaluate(
    net: &NetworkState,
    spec: &ConditionSpec,
    table: &GestureTable,
    sets: &[SubEpochSet],
) -> Result<AccuracyReport> {
    if sets.is_empty() {
        return Err(Error::invalid("no test sets to evaluate on"));
    }
    let owned: Vec<SequencePair> = sets.iter().flat_map(|s| s.pairs.iter().cloned()).collect();
    let batch = wire_condition(spec, &owned)?;
    let act = net.forward(&batch, FeedbackMode::FreeRunning)?;
    let mut tally = Tally::default();
    for (i, pair) in owned.iter().enumerate() {
        let (off_b, on_b) = (2 * i, 2 * i + 1);
        let words = match (act.sequence_numbers(off_b), act.sequence_numbers(on_b)) {
            (Some(off), Some(on)) => Some((decode_numbers(&on), decode_numbers(&off))),
            _ => None,
        };
        let pointed = if spec.gesture_output {
            act.sequence_gestures(on_b)
                .map(|g| decode_gestures(&g, table, spec.convention))
        } else {
            None
        };
        tally.add_pair(
            pair,
            words
                .as_ref()
                .map(|(on, off)| (on.as_slice(), off.as_slice())),
            pointed.as_deref(),
        );
    }

    let counting_by: Option<Vec<f64>> = act.numbers.as_ref().map(|_| {
        (0..11)
            .map(|n| fraction(tally.counting[n], tally.sequences[n]))
            .collect()
    });
    let gesture_by: Option<Vec<f64>> = pointed_enabled(spec, &act).then(|| {
        (0..11)
            .map(|n| fraction(tally.gesture_hits[n], tally.gesture_steps[n]))
            .collect()
    });
    Ok(AccuracyReport {
        counting: counting_by.as_deref().map(mean_over_counted),
        gesture: gesture_by.as_deref().map(mean_over_counted),
        counting_by_numerosity: counting_by,
        gesture_by_numerosity: gesture_by,
        off_silence: act
            .numbers
            .as_ref()
            .map(|_| fraction(tally.off_silent, tally.off_total)),
        test_sets: sets.len(),
    })
}

fn pointed_enabled(spec: &ConditionSpec, act: &crate::network::Activations) -> bool {
    spec.gesture_output && act.gestures.is_some()
}
