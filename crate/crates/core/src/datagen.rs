//! Scenes, counting sequences and per-condition wiring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::evaluation::{Pointed, Word};
use crate::gesture::{GestureTable, GestureVector, POSITIONS};
use crate::network::{BlockConfig, SequenceBatch, GESTURE_WIDTH, NUMBER_WIDTH, VISUAL_WIDTH};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

pub const SEQUENCE_LEN: usize = 12;
pub const MAX_OBJECTS: usize = 10;
/// Numerosities 0..=10 per sub-epoch.
pub const NUMEROSITIES: usize = MAX_OBJECTS + 1;

/// What the gesture stream does once counting has finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureConvention {
    /// Keep pointing at the last object; silent sequences use the zero vector.
    StayAtLast,
    /// Return to the rest posture; silent sequences hold the rest posture.
    GoToBase,
}

impl GestureConvention {
    pub fn short(&self) -> &'static str {
        match self {
            GestureConvention::StayAtLast => "S",
            GestureConvention::GoToBase => "B",
        }
    }

    /// Label used whenever no object is being pointed at.
    pub fn rest_label(&self) -> Pointed {
        match self {
            GestureConvention::StayAtLast => Pointed::Rest,
            GestureConvention::GoToBase => Pointed::Base,
        }
    }

    /// Vector for the rest label: zeros, or the base posture.
    pub fn rest_vector(&self, table: &GestureTable) -> GestureVector {
        match self {
            GestureConvention::StayAtLast => [0.0; GESTURE_WIDTH],
            GestureConvention::GoToBase => table.base(),
        }
    }
}

impl std::str::FromStr for GestureConvention {
    type Err = Error;

    /// Accepts the long names and the short `S` / `B` forms.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stay_at_last" | "S" => Ok(GestureConvention::StayAtLast),
            "go_to_base" | "B" => Ok(GestureConvention::GoToBase),
            _ => Err(Error::invalid(format!("unknown gesture convention {s:?}"))),
        }
    }
}

impl fmt::Display for GestureConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GestureConvention::StayAtLast => "stay_at_last",
            GestureConvention::GoToBase => "go_to_base",
        })
    }
}

/// Objects placed on the 20-position line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub occupancy: [bool; POSITIONS],
    /// Occupied indices, ascending (left to right).
    pub positions: Vec<usize>,
}

impl Scene {
    pub fn from_positions(mut positions: Vec<usize>) -> Result<Scene> {
        positions.sort_unstable();
        positions.dedup();
        if positions.len() > MAX_OBJECTS || positions.iter().any(|&p| p >= POSITIONS) {
            return Err(Error::invalid(format!(
                "invalid object positions {positions:?}"
            )));
        }
        let mut occupancy = [false; POSITIONS];
        for &p in &positions {
            occupancy[p] = true;
        }
        Ok(Scene {
            occupancy,
            positions,
        })
    }

    pub fn n_objects(&self) -> usize {
        self.positions.len()
    }

    /// Occupancy normalised to sum to one (all zeros for an empty scene).
    pub fn visual(&self) -> [f64; VISUAL_WIDTH] {
        let mut v = [0.0; VISUAL_WIDTH];
        let n = self.n_objects();
        if n > 0 {
            let w = 1.0 / n as f64;
            for &p in &self.positions {
                v[p] = w;
            }
        }
        v
    }
}

/// Random scene with `n_objects` distinct uniformly chosen positions.
pub fn gen_scene(n_objects: usize, rng: &mut Rng) -> Result<Scene> {
    if n_objects > MAX_OBJECTS {
        return Err(Error::invalid(format!(
            "at most {MAX_OBJECTS} objects per scene, got {n_objects}"
        )));
    }
    Scene::from_positions(rng.choose_distinct(POSITIONS, n_objects))
}

/// One 12-step sequence: constant trigger and visual input, per-step word
/// and pointing targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub trigger: f64,
    pub words: Vec<Word>,
    pub pointing: Vec<Pointed>,
    pub gestures: Vec<GestureVector>,
    /// Jordan-loop gesture input before the first output exists.
    pub rest_vector: GestureVector,
}

/// Trigger-off and trigger-on sequences over the same scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePair {
    pub scene: Scene,
    pub convention: GestureConvention,
    pub off: Sequence,
    pub on: Sequence,
}

impl SequencePair {
    pub fn n_objects(&self) -> usize {
        self.scene.n_objects()
    }
}

fn label_vector(
    label: Pointed,
    convention: GestureConvention,
    table: &GestureTable,
) -> GestureVector {
    match label {
        Pointed::Position(p) => table.position(p as usize),
        Pointed::Base => table.base(),
        Pointed::Rest => convention.rest_vector(table),
    }
}

pub fn build_sequence_pair(
    scene: Scene,
    convention: GestureConvention,
    table: &GestureTable,
) -> SequencePair {
    let n = scene.n_objects();
    let rest = convention.rest_label();
    let off_labels = vec![rest; SEQUENCE_LEN];
    let on_labels: Vec<Pointed> = (0..SEQUENCE_LEN)
        .map(|t| {
            if t < n {
                Pointed::Position(scene.positions[t] as u8)
            } else {
                match (convention, n) {
                    (GestureConvention::StayAtLast, n) if n > 0 => {
                        Pointed::Position(scene.positions[n - 1] as u8)
                    }
                    _ => rest,
                }
            }
        })
        .collect();
    let vectors = |labels: &[Pointed]| {
        labels
            .iter()
            .map(|&l| label_vector(l, convention, table))
            .collect()
    };
    let rest_vector = convention.rest_vector(table);
    let on_words = (0..SEQUENCE_LEN)
        .map(|t| {
            if t < n {
                Word::Number(t as u8 + 1)
            } else {
                Word::Silence
            }
        })
        .collect();
    SequencePair {
        off: Sequence {
            trigger: 0.0,
            words: vec![Word::Silence; SEQUENCE_LEN],
            gestures: vectors(&off_labels),
            pointing: off_labels,
            rest_vector,
        },
        on: Sequence {
            trigger: 1.0,
            words: on_words,
            gestures: vectors(&on_labels),
            pointing: on_labels,
            rest_vector,
        },
        scene,
        convention,
    }
}

/// One pair per numerosity 0..=10 in random order: 22 sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEpochSet {
    pub pairs: Vec<SequencePair>,
}

impl SubEpochSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn gen_sub_epoch(
    convention: GestureConvention,
    table: &GestureTable,
    rng: &mut Rng,
) -> SubEpochSet {
    let mut order: Vec<usize> = (0..NUMEROSITIES).collect();
    rng.shuffle(&mut order);
    let pairs = order
        .into_iter()
        .map(|n| {
            let scene = gen_scene(n, rng).expect("numerosity within range");
            build_sequence_pair(scene, convention, table)
        })
        .collect();
    SubEpochSet { pairs }
}

/// Which streams a condition feeds in and trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub visual_input: bool,
    pub gesture_input: bool,
    pub number_output: bool,
    pub gesture_output: bool,
    pub jordan_loop: bool,
    pub convention: GestureConvention,
}

impl ConditionSpec {
    /// Study-1 condition 1..=8 (stay-at-last convention):
    ///
    /// | id | inputs       | outputs |
    /// |----|--------------|---------|
    /// | 1  | V            | N       |
    /// | 2  | V            | G       |
    /// | 3  | V            | N, G    |
    /// | 4  | V (+G loop)  | N, G    |
    /// | 5  | G            | N       |
    /// | 6  | G            | N, G    |
    /// | 7  | V, G         | N       |
    /// | 8  | V, G         | N, G    |
    pub fn study1(id: u8) -> Result<ConditionSpec> {
        let (v, gi, n, go, j) = match id {
            1 => (true, false, true, false, false),
            2 => (true, false, false, true, false),
            3 => (true, false, true, true, false),
            4 => (true, false, true, true, true),
            5 => (false, true, true, false, false),
            6 => (false, true, true, true, false),
            7 => (true, true, true, false, false),
            8 => (true, true, true, true, false),
            _ => return Err(Error::invalid(format!("no study-1 condition {id}"))),
        };
        Ok(ConditionSpec {
            visual_input: v,
            gesture_input: gi,
            number_output: n,
            gesture_output: go,
            jordan_loop: j,
            convention: GestureConvention::StayAtLast,
        })
    }

    /// Study-2 main stage: visual in, numbers and gestures out, optional loop.
    pub fn study2(jordan_loop: bool, convention: GestureConvention) -> ConditionSpec {
        ConditionSpec {
            jordan_loop,
            convention,
            ..Self::study1(3).unwrap()
        }
    }

    /// Pointing pre-training: wired like condition 2.
    pub fn pointing(convention: GestureConvention) -> ConditionSpec {
        ConditionSpec {
            convention,
            ..Self::study1(2).unwrap()
        }
    }

    /// Number recitation pre-training: trigger only, numbers out.
    pub fn recitation() -> ConditionSpec {
        ConditionSpec {
            visual_input: false,
            ..Self::study1(1).unwrap()
        }
    }

    pub fn block_config(&self, hidden_size: usize) -> BlockConfig {
        BlockConfig {
            use_visual_input: self.visual_input,
            use_gesture_input: self.gesture_input,
            use_number_output: self.number_output,
            use_gesture_output: self.gesture_output,
            use_jordan_loop: self.jordan_loop,
            hidden_size,
        }
    }

    pub fn uses_gestures(&self) -> bool {
        self.gesture_input || self.gesture_output
    }

    /// Which study-1 id this spec corresponds to, ignoring the convention.
    pub fn study1_id(&self) -> Option<u8> {
        (1..=8).find(|&id| {
            let s = Self::study1(id).unwrap();
            ConditionSpec {
                convention: self.convention,
                ..s
            } == *self
        })
    }
}

/// Lay the pairs out as a network batch: for each pair the trigger-off
/// sequence, then the trigger-on sequence.
pub fn wire_condition(spec: &ConditionSpec, pairs: &[SequencePair]) -> Result<SequenceBatch> {
    if let Some(p) = pairs.iter().find(|p| p.convention != spec.convention) {
        return Err(Error::invalid(format!(
            "pair built for {} but condition expects {}",
            p.convention, spec.convention
        )));
    }
    let seqs: Vec<(&Sequence, [f64; VISUAL_WIDTH])> = pairs
        .iter()
        .flat_map(|p| {
            let v = p.scene.visual();
            [(&p.off, v), (&p.on, v)]
        })
        .collect();
    wire_sequences(spec, &seqs)
}

fn wire_sequences(
    spec: &ConditionSpec,
    seqs: &[(&Sequence, [f64; VISUAL_WIDTH])],
) -> Result<SequenceBatch> {
    if seqs.is_empty() {
        return Err(Error::invalid("no sequences to wire"));
    }
    let cfg = spec.block_config(1);
    let bs = seqs.len();
    let rows = bs * SEQUENCE_LEN;
    let ext_w = cfg.external_width();
    let mut external = Matrix::zeros(rows, ext_w);
    let mut numbers = spec
        .number_output
        .then(|| Matrix::zeros(rows, NUMBER_WIDTH));
    let mut gestures = spec
        .gesture_output
        .then(|| Matrix::zeros(rows, GESTURE_WIDTH));
    let mut rest = spec.jordan_loop.then(|| Matrix::zeros(bs, GESTURE_WIDTH));

    for (b, (seq, visual)) in seqs.iter().enumerate() {
        if seq.words.len() != SEQUENCE_LEN || seq.gestures.len() != SEQUENCE_LEN {
            return Err(Error::invalid("sequences must have 12 steps"));
        }
        for t in 0..SEQUENCE_LEN {
            let r = t * bs + b;
            let x = external.row_mut(r);
            x[0] = seq.trigger;
            let mut off = 1;
            if spec.visual_input {
                x[off..off + VISUAL_WIDTH].copy_from_slice(visual);
                off += VISUAL_WIDTH;
            }
            if spec.gesture_input {
                x[off..off + GESTURE_WIDTH].copy_from_slice(&seq.gestures[t]);
            }
            if let Some(n) = numbers.as_mut() {
                if let Word::Number(k) = seq.words[t] {
                    n.set(r, k as usize - 1, 1.0);
                }
            }
            if let Some(g) = gestures.as_mut() {
                g.row_mut(r).copy_from_slice(&seq.gestures[t]);
            }
        }
        if let Some(rest) = rest.as_mut() {
            rest.row_mut(b).copy_from_slice(&seq.rest_vector);
        }
    }
    Ok(SequenceBatch {
        batch: bs,
        steps: SEQUENCE_LEN,
        external,
        number_targets: numbers,
        gesture_targets: gestures,
        gesture_rest: rest,
    })
}

/// The fixed recitation set: trigger off → silence; trigger on → words
/// 1..10 then two silent steps.
pub fn recitation_batch() -> SequenceBatch {
    let spec = ConditionSpec::recitation();
    let off = Sequence {
        trigger: 0.0,
        words: vec![Word::Silence; SEQUENCE_LEN],
        pointing: vec![Pointed::Rest; SEQUENCE_LEN],
        gestures: vec![[0.0; GESTURE_WIDTH]; SEQUENCE_LEN],
        rest_vector: [0.0; GESTURE_WIDTH],
    };
    let on = Sequence {
        trigger: 1.0,
        words: (0..SEQUENCE_LEN)
            .map(|t| {
                if t < MAX_OBJECTS {
                    Word::Number(t as u8 + 1)
                } else {
                    Word::Silence
                }
            })
            .collect(),
        ..off.clone()
    };
    wire_sequences(
        &spec,
        &[(&off, [0.0; VISUAL_WIDTH]), (&on, [0.0; VISUAL_WIDTH])],
    )
    .expect("recitation set is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::decode_numbers;
    use crate::gesture::{build_gesture_table, ArmGeometry, ArmModel, BASE_INDEX};

    fn table() -> GestureTable {
        build_gesture_table(&ArmModel::new(ArmGeometry::default()).unwrap()).unwrap()
    }

    #[test]
    fn empty_scene_has_zero_visual() {
        let s = gen_scene(0, &mut Rng::new(1)).unwrap();
        assert_eq!(s.visual(), [0.0; VISUAL_WIDTH]);
    }

    #[test]
    fn visual_is_normalised() {
        let s = gen_scene(4, &mut Rng::new(2)).unwrap();
        let v = s.visual();
        assert_eq!(v.iter().filter(|&&x| x == 0.25).count(), 4);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert!(gen_scene(11, &mut Rng::new(2)).is_err());
    }

    #[test]
    fn single_object_positions_are_uniform() {
        let mut rng = Rng::new(99);
        let draws = 100_000;
        let mut counts = [0usize; POSITIONS];
        for _ in 0..draws {
            counts[gen_scene(1, &mut rng).unwrap().positions[0]] += 1;
        }
        let p = 1.0 / POSITIONS as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn four_objects_count_one_to_four() {
        let t = table();
        let pair = build_sequence_pair(
            Scene::from_positions(vec![1, 5, 9, 17]).unwrap(),
            GestureConvention::StayAtLast,
            &t,
        );
        let mut want = vec![Word::Silence; SEQUENCE_LEN];
        for (k, w) in want.iter_mut().take(4).enumerate() {
            *w = Word::Number(k as u8 + 1);
        }
        assert_eq!(pair.on.words, want);
        assert!(pair.off.words.iter().all(|w| *w == Word::Silence));
        assert_eq!(pair.on.trigger, 1.0);
        assert_eq!(pair.off.trigger, 0.0);
    }

    #[test]
    fn gesture_targets_follow_the_convention() {
        let t = table();
        let scene = Scene::from_positions(vec![7, 3]).unwrap();
        let s = build_sequence_pair(scene.clone(), GestureConvention::StayAtLast, &t);
        assert_eq!(s.on.gestures[0], t.position(3));
        assert_eq!(s.on.gestures[1], t.position(7));
        assert!(s.on.gestures[2..].iter().all(|g| *g == t.position(7)));
        assert!(s.off.gestures.iter().all(|g| *g == [0.0; 3]));

        let b = build_sequence_pair(scene, GestureConvention::GoToBase, &t);
        assert_eq!(b.on.gestures[1], t.position(7));
        assert!(b.on.gestures[2..]
            .iter()
            .all(|g| *g == t.vectors[BASE_INDEX]));
        assert!(b.off.gestures.iter().all(|g| *g == t.base()));
        assert_eq!(b.on.pointing[2], Pointed::Base);
    }

    #[test]
    fn sub_epoch_covers_every_numerosity_once() {
        let t = table();
        let mut rng = Rng::new(5);
        let a = gen_sub_epoch(GestureConvention::GoToBase, &t, &mut rng);
        let b = gen_sub_epoch(GestureConvention::GoToBase, &t, &mut rng);
        let mut ns: Vec<usize> = a.pairs.iter().map(|p| p.n_objects()).collect();
        ns.sort_unstable();
        assert_eq!(ns, (0..=10).collect::<Vec<_>>());
        assert_ne!(a, b);
        for p in &a.pairs {
            assert_eq!(p.on.words.len(), SEQUENCE_LEN);
            assert_eq!(p.off.gestures.len(), SEQUENCE_LEN);
        }
        let again = gen_sub_epoch(GestureConvention::GoToBase, &t, &mut Rng::new(5));
        assert_eq!(a, again);
    }

    #[test]
    fn number_targets_decode_to_the_word_list() {
        let t = table();
        let mut rng = Rng::new(8);
        let set = gen_sub_epoch(GestureConvention::StayAtLast, &t, &mut rng);
        let batch = wire_condition(&ConditionSpec::study1(1).unwrap(), &set.pairs).unwrap();
        let targets = batch.number_targets.unwrap();
        for (i, pair) in set.pairs.iter().enumerate() {
            for (k, seq) in [&pair.off, &pair.on].into_iter().enumerate() {
                let b = 2 * i + k;
                let m = Matrix::from_vec(
                    SEQUENCE_LEN,
                    NUMBER_WIDTH,
                    (0..SEQUENCE_LEN)
                        .flat_map(|s| targets.row(s * batch.batch + b).to_vec())
                        .collect(),
                )
                .unwrap();
                assert_eq!(decode_numbers(&m), seq.words);
            }
        }
    }

    #[test]
    fn wiring_matches_the_condition_table() {
        let t = table();
        let pair = build_sequence_pair(
            Scene::from_positions(vec![2, 4]).unwrap(),
            GestureConvention::StayAtLast,
            &t,
        );
        let pairs = [pair];
        let c1 = wire_condition(&ConditionSpec::study1(1).unwrap(), &pairs).unwrap();
        assert_eq!(c1.external.cols(), 21);
        assert!(c1.number_targets.is_some() && c1.gesture_targets.is_none());

        let c4 = wire_condition(&ConditionSpec::study1(4).unwrap(), &pairs).unwrap();
        assert_eq!(c4.external.cols(), 21);
        assert!(c4.number_targets.is_some() && c4.gesture_targets.is_some());
        assert!(c4.gesture_rest.is_some());

        let c7 = wire_condition(&ConditionSpec::study1(7).unwrap(), &pairs).unwrap();
        assert_eq!(c7.external.cols(), 24);
        assert!(c7.number_targets.is_some() && c7.gesture_targets.is_none());
        // on-sequence (batch row 1), step 1 carries the second pointing
        assert_eq!(&c7.external.row(c7.batch + 1)[21..], &t.position(4));

        let c5 = wire_condition(&ConditionSpec::study1(5).unwrap(), &pairs).unwrap();
        assert_eq!(c5.external.cols(), 4);

        let wrong = ConditionSpec::study2(false, GestureConvention::GoToBase);
        assert!(wire_condition(&wrong, &pairs).is_err());
        assert!(ConditionSpec::study1(9).is_err());
    }

    #[test]
    fn recitation_set_targets() {
        let b = recitation_batch();
        assert_eq!((b.batch, b.steps), (2, SEQUENCE_LEN));
        assert_eq!(b.external.cols(), 1);
        let n = b.number_targets.unwrap();
        for t in 0..SEQUENCE_LEN {
            assert!(n.row(2 * t).iter().all(|&x| x == 0.0));
            let on = n.row(2 * t + 1);
            if t < 10 {
                assert_eq!(on[t], 1.0);
                assert_eq!(on.iter().sum::<f64>(), 1.0);
            } else {
                assert!(on.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn study1_ids_round_trip() {
        for id in 1..=8 {
            assert_eq!(ConditionSpec::study1(id).unwrap().study1_id(), Some(id));
        }
        assert_eq!(ConditionSpec::recitation().study1_id(), None);
    }
}
