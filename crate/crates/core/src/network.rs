//! Elman network with configurable input/output blocks and an optional
//! Jordan loop feeding the previous gesture output back as input.
//!
//! Input layout per step: `[trigger | visual(20)? | gesture-in(3)? | context(H)]`
//! where the gesture-in slot is either an external stream or, with the
//! Jordan loop, the network's own previous gesture output.
//!
//! ```text
//! h_t = sigmoid(W_in · x_t + b_h)
//! n_t = sigmoid(W_num · h_t + b_num)
//! g_t = W_ges · h_t + b_ges
//! ```
//!
//! All sequences of a [`SequenceBatch`] advance in lock-step, so each step is
//! a small dense GEMM over the whole batch.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{gemm_into, glorot_uniform, sigmoid, MatView, Matrix, Rng};
use crate::{Error, Result};

pub const VISUAL_WIDTH: usize = 20;
pub const NUMBER_WIDTH: usize = 10;
pub const GESTURE_WIDTH: usize = 3;

/// Which blocks are wired into the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockConfig {
    pub use_visual_input: bool,
    pub use_gesture_input: bool,
    pub use_number_output: bool,
    pub use_gesture_output: bool,
    pub use_jordan_loop: bool,
    pub hidden_size: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::invalid("hidden_size must be positive"));
        }
        if !self.use_number_output && !self.use_gesture_output {
            return Err(Error::invalid("at least one output block must be enabled"));
        }
        if self.use_jordan_loop && (!self.use_gesture_output || self.use_gesture_input) {
            return Err(Error::invalid(
                "the Jordan loop needs gesture output and replaces the external gesture input",
            ));
        }
        Ok(())
    }

    /// Width of the gesture-in slot (external stream or Jordan feedback).
    pub fn gesture_in_width(&self) -> usize {
        if self.use_gesture_input || self.use_jordan_loop {
            GESTURE_WIDTH
        } else {
            0
        }
    }

    /// Columns supplied from outside the network: trigger, visual, external gestures.
    pub fn external_width(&self) -> usize {
        1 + self.visual_width()
            + if self.use_gesture_input {
                GESTURE_WIDTH
            } else {
                0
            }
    }

    pub fn visual_width(&self) -> usize {
        if self.use_visual_input {
            VISUAL_WIDTH
        } else {
            0
        }
    }

    /// Column offset of the gesture-in slot.
    pub fn gesture_in_offset(&self) -> usize {
        1 + self.visual_width()
    }

    /// Column offset of the Elman context block.
    pub fn context_offset(&self) -> usize {
        self.gesture_in_offset() + self.gesture_in_width()
    }

    pub fn input_width(&self) -> usize {
        self.context_offset() + self.hidden_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Jordan input is the network's own previous gesture output.
    FreeRunning,
    /// Jordan input is the previous gesture target.
    TeacherForced,
}

impl std::fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeedbackMode::FreeRunning => "free_running",
            FeedbackMode::TeacherForced => "teacher_forced",
        })
    }
}

impl std::str::FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free_running" => Ok(FeedbackMode::FreeRunning),
            "teacher_forced" => Ok(FeedbackMode::TeacherForced),
            _ => Err(Error::invalid(format!("unknown feedback mode {s:?}"))),
        }
    }
}

/// Trainable tensors. Also used to hold gradients of the same shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub w_in: Matrix,
    pub b_hidden: Matrix,
    pub w_num: Option<Matrix>,
    pub b_num: Option<Matrix>,
    pub w_ges: Option<Matrix>,
    pub b_ges: Option<Matrix>,
}

impl Params {
    pub fn zeros(cfg: &BlockConfig) -> Self {
        let h = cfg.hidden_size;
        let on = |flag: bool, r, c| flag.then(|| Matrix::zeros(r, c));
        Params {
            w_in: Matrix::zeros(h, cfg.input_width()),
            b_hidden: Matrix::zeros(1, h),
            w_num: on(cfg.use_number_output, NUMBER_WIDTH, h),
            b_num: on(cfg.use_number_output, 1, NUMBER_WIDTH),
            w_ges: on(cfg.use_gesture_output, GESTURE_WIDTH, h),
            b_ges: on(cfg.use_gesture_output, 1, GESTURE_WIDTH),
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("w_in", &self.w_in), ("b_hidden", &self.b_hidden)];
        let opt = [
            ("w_num", &self.w_num),
            ("b_num", &self.b_num),
            ("w_ges", &self.w_ges),
            ("b_ges", &self.b_ges),
        ];
        out.extend(
            opt.into_iter()
                .filter_map(|(n, m)| m.as_ref().map(|m| (n, m))),
        );
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w_in, &mut self.b_hidden];
        for m in [
            &mut self.w_num,
            &mut self.b_num,
            &mut self.w_ges,
            &mut self.b_ges,
        ] {
            if let Some(m) = m.as_mut() {
                out.push(m);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}

/// Weights plus the wiring they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub config: BlockConfig,
    pub params: Params,
}

/// A batch of equal-length sequences laid out step-major: row `t * batch + b`
/// holds step `t` of sequence `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub steps: usize,
    /// `(steps·batch) × external_width`: trigger, visual, external gesture.
    pub external: Matrix,
    pub number_targets: Option<Matrix>,
    pub gesture_targets: Option<Matrix>,
    /// `batch × 3`: Jordan gesture input at step 0.
    pub gesture_rest: Option<Matrix>,
}

impl SequenceBatch {
    pub fn rows(&self) -> usize {
        self.batch * self.steps
    }

    /// Inputs, targets and rest values uniform in `[-1, 1]`, shaped for `cfg`.
    /// Used for gradient checks and benchmarks.
    pub fn random(cfg: &BlockConfig, batch: usize, steps: usize, rng: &mut Rng) -> SequenceBatch {
        let rows = batch * steps;
        let mut m = |rows: usize, cols: usize| {
            Matrix::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            )
            .expect("length matches shape")
        };
        SequenceBatch {
            batch,
            steps,
            external: m(rows, cfg.external_width()),
            number_targets: cfg.use_number_output.then(|| m(rows, NUMBER_WIDTH)),
            gesture_targets: cfg.use_gesture_output.then(|| m(rows, GESTURE_WIDTH)),
            gesture_rest: cfg.use_jordan_loop.then(|| m(batch, GESTURE_WIDTH)),
        }
    }

    fn check(&self, cfg: &BlockConfig, need_targets: bool, mode: FeedbackMode) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::invalid("empty sequence batch"));
        }
        if self.external.shape() != (self.rows(), cfg.external_width()) {
            return Err(Error::invalid(format!(
                "external input is {:?}, network expects {}x{}",
                self.external.shape(),
                self.rows(),
                cfg.external_width()
            )));
        }
        let check_targets =
            |t: &Option<Matrix>, enabled: bool, width: usize, what: &str| match (enabled, t) {
                (true, Some(m)) if m.shape() != (self.rows(), width) => Err(Error::invalid(
                    format!("{what} targets have shape {:?}", m.shape()),
                )),
                (true, None) if need_targets => {
                    Err(Error::invalid(format!("missing {what} targets")))
                }
                _ => Ok(()),
            };
        check_targets(
            &self.number_targets,
            cfg.use_number_output,
            NUMBER_WIDTH,
            "number",
        )?;
        check_targets(
            &self.gesture_targets,
            cfg.use_gesture_output,
            GESTURE_WIDTH,
            "gesture",
        )?;
        if cfg.use_jordan_loop {
            match &self.gesture_rest {
                Some(m) if m.shape() == (self.batch, GESTURE_WIDTH) => {}
                _ => return Err(Error::invalid("Jordan loop needs a batch x 3 rest input")),
            }
            if mode == FeedbackMode::TeacherForced && self.gesture_targets.is_none() {
                return Err(Error::invalid("teacher forcing needs gesture targets"));
            }
        }
        Ok(())
    }
}

/// Everything computed by a forward pass, step-major like the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub batch: usize,
    pub steps: usize,
    /// Full network input rows `x_t` (including gesture-in and context).
    pub inputs: Matrix,
    pub hidden: Matrix,
    pub numbers: Option<Matrix>,
    pub gestures: Option<Matrix>,
}

impl Activations {
    /// Number outputs of sequence `b` as a `steps × 10` matrix.
    pub fn sequence_numbers(&self, b: usize) -> Option<Matrix> {
        self.numbers.as_ref().map(|m| self.gather(m, b))
    }

    pub fn sequence_gestures(&self, b: usize) -> Option<Matrix> {
        self.gestures.as_ref().map(|m| self.gather(m, b))
    }

    fn gather(&self, m: &Matrix, b: usize) -> Matrix {
        let mut out = Matrix::zeros(self.steps, m.cols());
        for t in 0..self.steps {
            out.row_mut(t).copy_from_slice(m.row(t * self.batch + b));
        }
        out
    }
}

/// Loss split by output block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub counting: f64,
    pub gesture: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.counting + self.gesture
    }
}

fn view_rows(m: &Matrix, start: usize, end: usize) -> MatView<'_> {
    m.view().row_range(start, end)
}

impl NetworkState {
    /// Glorot-uniform weights, zero biases.
    pub fn init(cfg: BlockConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = Params::zeros(&cfg);
        params.w_in = glorot_uniform(cfg.hidden_size, cfg.input_width(), rng)?;
        if cfg.use_number_output {
            params.w_num = Some(glorot_uniform(NUMBER_WIDTH, cfg.hidden_size, rng)?);
        }
        if cfg.use_gesture_output {
            params.w_ges = Some(glorot_uniform(GESTURE_WIDTH, cfg.hidden_size, rng)?);
        }
        Ok(NetworkState {
            config: cfg,
            params,
        })
    }

    fn check_shapes(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let expected = Params::zeros(cfg);
        let ok = self
            .params
            .tensors()
            .iter()
            .map(|(n, m)| (*n, m.shape()))
            .eq(expected.tensors().iter().map(|(n, m)| (*n, m.shape())));
        if !ok {
            return Err(Error::invalid("network tensors do not match block config"));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &SequenceBatch, mode: FeedbackMode) -> Result<Activations> {
        self.check_shapes()?;
        batch.check(&self.config, false, mode)?;
        Ok(self.forward_unchecked(batch, mode))
    }

    fn forward_unchecked(&self, batch: &SequenceBatch, mode: FeedbackMode) -> Activations {
        let cfg = &self.config;
        let p = &self.params;
        let (bs, steps) = (batch.batch, batch.steps);
        let rows = bs * steps;
        let width = cfg.input_width();
        let h = cfg.hidden_size;
        let ext_w = cfg.external_width();
        let g_off = cfg.gesture_in_offset();
        let ctx_off = cfg.context_offset();

        let mut inputs = Matrix::zeros(rows, width);
        let mut hidden = Matrix::zeros(rows, h);
        let mut numbers = p.w_num.as_ref().map(|_| Matrix::zeros(rows, NUMBER_WIDTH));
        let mut gestures = p.w_ges.as_ref().map(|_| Matrix::zeros(rows, GESTURE_WIDTH));

        for t in 0..steps {
            let r0 = t * bs;
            for b in 0..bs {
                let r = r0 + b;
                let ext = batch.external.row(r);
                let x = inputs.row_mut(r);
                x[..ext_w].copy_from_slice(ext);
                if cfg.use_jordan_loop {
                    let fed: &[f64] = if t == 0 {
                        batch.gesture_rest.as_ref().unwrap().row(b)
                    } else {
                        match mode {
                            FeedbackMode::FreeRunning => gestures.as_ref().unwrap().row(r - bs),
                            FeedbackMode::TeacherForced => {
                                batch.gesture_targets.as_ref().unwrap().row(r - bs)
                            }
                        }
                    };
                    x[g_off..g_off + GESTURE_WIDTH].copy_from_slice(fed);
                }
                if t > 0 {
                    x[ctx_off..].copy_from_slice(hidden.row(r - bs));
                }
            }

            let x_t = view_rows(&inputs, r0, r0 + bs);
            let h_t = hidden.row_block_mut(r0, r0 + bs);
            gemm_into(1.0, x_t, p.w_in.t(), 0.0, h_t);
            for row in h_t.chunks_exact_mut(h) {
                for (z, bias) in row.iter_mut().zip(p.b_hidden.as_slice()) {
                    *z = sigmoid(*z + bias);
                }
            }

            let h_view = view_rows(&hidden, r0, r0 + bs);
            if let (Some(out), Some(w), Some(bias)) = (numbers.as_mut(), &p.w_num, &p.b_num) {
                let o = out.row_block_mut(r0, r0 + bs);
                gemm_into(1.0, h_view, w.t(), 0.0, o);
                for row in o.chunks_exact_mut(NUMBER_WIDTH) {
                    for (z, b) in row.iter_mut().zip(bias.as_slice()) {
                        *z = sigmoid(*z + b);
                    }
                }
            }
            if let (Some(out), Some(w), Some(bias)) = (gestures.as_mut(), &p.w_ges, &p.b_ges) {
                let o = out.row_block_mut(r0, r0 + bs);
                gemm_into(1.0, h_view, w.t(), 0.0, o);
                for row in o.chunks_exact_mut(GESTURE_WIDTH) {
                    for (z, b) in row.iter_mut().zip(bias.as_slice()) {
                        *z += b;
                    }
                }
            }
        }

        Activations {
            batch: bs,
            steps,
            inputs,
            hidden,
            numbers,
            gestures,
        }
    }

    /// Sum-squared-error over every enabled output with targets.
    pub fn loss(&self, batch: &SequenceBatch, mode: FeedbackMode) -> Result<LossParts> {
        let acts = self.forward(batch, mode)?;
        Ok(loss_of(&acts, batch))
    }

    /// Exact gradient of the summed SSE by backpropagation through time,
    /// including flow through the Elman context and (free-running) the
    /// Jordan gesture loop.
    pub fn bptt_gradients(
        &self,
        batch: &SequenceBatch,
        mode: FeedbackMode,
    ) -> Result<(Params, LossParts)> {
        self.check_shapes()?;
        batch.check(&self.config, true, mode)?;
        let acts = self.forward_unchecked(batch, mode);
        let loss = loss_of(&acts, batch);
        Ok((self.backward(batch, mode, &acts), loss))
    }

    fn backward(&self, batch: &SequenceBatch, mode: FeedbackMode, acts: &Activations) -> Params {
        let cfg = &self.config;
        let p = &self.params;
        let (bs, steps) = (batch.batch, batch.steps);
        let rows = bs * steps;
        let h = cfg.hidden_size;
        let g_off = cfg.gesture_in_offset();
        let ctx_off = cfg.context_offset();
        let width = cfg.input_width();
        // columns of W_in whose inputs depend on earlier steps
        let jordan_free = cfg.use_jordan_loop && mode == FeedbackMode::FreeRunning;
        let rec_off = if jordan_free { g_off } else { ctx_off };
        let rec_w = width - rec_off;

        // dL/d(pre-activation) of each block, step-major
        let mut d_num = acts.numbers.as_ref().map(|n| {
            let mut d = Matrix::zeros(rows, NUMBER_WIDTH);
            let tgt = batch.number_targets.as_ref().unwrap();
            for ((d, &y), &t) in d
                .as_mut_slice()
                .iter_mut()
                .zip(n.as_slice())
                .zip(tgt.as_slice())
            {
                *d = 2.0 * (y - t) * y * (1.0 - y);
            }
            d
        });
        let mut d_ges = acts.gestures.as_ref().map(|g| {
            let mut d = Matrix::zeros(rows, GESTURE_WIDTH);
            let tgt = batch.gesture_targets.as_ref().unwrap();
            for ((d, &y), &t) in d
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(tgt.as_slice())
            {
                *d = 2.0 * (y - t);
            }
            d
        });
        let mut d_hid = Matrix::zeros(rows, h);
        // gradient w.r.t. the recurrent slice of x_{t+1}
        let mut d_rec = vec![0.0; bs * rec_w];
        let w_rec = p.w_in.view().columns(rec_off, width);

        for t in (0..steps).rev() {
            let r0 = t * bs;
            let r1 = r0 + bs;
            let later = t + 1 < steps;
            if later {
                // d_rec = dZ_{t+1} · W_in[:, rec_off..]
                gemm_into(1.0, view_rows(&d_hid, r1, r1 + bs), w_rec, 0.0, &mut d_rec);
                if jordan_free {
                    let d = d_ges.as_mut().unwrap();
                    for b in 0..bs {
                        let src = &d_rec[b * rec_w..b * rec_w + GESTURE_WIDTH];
                        for (x, s) in d.row_mut(r0 + b).iter_mut().zip(src) {
                            *x += s;
                        }
                    }
                }
            }
            let dh = d_hid.row_block_mut(r0, r1);
            if let (Some(d), Some(w)) = (&d_num, &p.w_num) {
                gemm_into(1.0, view_rows(d, r0, r1), w.view(), 1.0, dh);
            }
            if let (Some(d), Some(w)) = (&d_ges, &p.w_ges) {
                gemm_into(1.0, view_rows(d, r0, r1), w.view(), 1.0, dh);
            }
            if later {
                let skip = ctx_off - rec_off;
                for b in 0..bs {
                    let src = &d_rec[b * rec_w + skip..(b + 1) * rec_w];
                    for (x, s) in dh[b * h..(b + 1) * h].iter_mut().zip(src) {
                        *x += s;
                    }
                }
            }
            let hs = acts.hidden.row_block(r0, r1);
            for (d, &y) in dh.iter_mut().zip(hs) {
                *d *= y * (1.0 - y);
            }
        }

        let mut grads = Params::zeros(cfg);
        gemm_into(
            1.0,
            d_hid.t(),
            acts.inputs.view(),
            0.0,
            grads.w_in.as_mut_slice(),
        );
        grads.b_hidden = d_hid.column_sums();
        if let Some(d) = d_num.take() {
            let mut w = Matrix::zeros(NUMBER_WIDTH, h);
            gemm_into(1.0, d.t(), acts.hidden.view(), 0.0, w.as_mut_slice());
            grads.w_num = Some(w);
            grads.b_num = Some(d.column_sums());
        }
        if let Some(d) = d_ges.take() {
            let mut w = Matrix::zeros(GESTURE_WIDTH, h);
            gemm_into(1.0, d.t(), acts.hidden.view(), 0.0, w.as_mut_slice());
            grads.w_ges = Some(w);
            grads.b_ges = Some(d.column_sums());
        }
        grads
    }

    pub fn to_json(&self) -> Result<String> {
        checkpoint::encode(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net = checkpoint::decode(text)?;
        net.check_shapes()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn loss_of(acts: &Activations, batch: &SequenceBatch) -> LossParts {
    let sse = |out: &Option<Matrix>, tgt: &Option<Matrix>| match (out, tgt) {
        (Some(o), Some(t)) => o
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
        _ => 0.0,
    };
    LossParts {
        counting: sse(&acts.numbers, &batch.number_targets),
        gesture: sse(&acts.gestures, &batch.gesture_targets),
    }
}

/// Central finite-difference estimate of the loss gradient, one parameter at
/// a time. Slow; meant as an independent check of [`NetworkState::bptt_gradients`].
pub fn finite_difference_gradients(
    net: &NetworkState,
    batch: &SequenceBatch,
    mode: FeedbackMode,
    eps: f64,
) -> Result<Params> {
    let mut probe = net.clone();
    let mut out = Params::zeros(&net.config);
    let n_tensors = out.tensors().len();
    for k in 0..n_tensors {
        let len = out.tensors()[k].1.len();
        for i in 0..len {
            let orig = probe.params.tensors_mut()[k].as_slice()[i];
            probe.params.tensors_mut()[k].as_mut_slice()[i] = orig + eps;
            let plus = probe.loss(batch, mode)?.total();
            probe.params.tensors_mut()[k].as_mut_slice()[i] = orig - eps;
            let minus = probe.loss(batch, mode)?.total();
            probe.params.tensors_mut()[k].as_mut_slice()[i] = orig;
            out.tensors_mut()[k].as_mut_slice()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(out)
}

/// Outcome of comparing two gradients entry by entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientComparison {
    pub checked: usize,
    pub mismatches: usize,
    /// Largest `|a - b| / max(|a|, |b|)` over entries above the absolute floor.
    pub max_relative_error: f64,
}

/// Entries agree when `|a - b| <= rel_tol * max(|a|, |b|)` or
/// `|a - b| <= abs_floor`.
pub fn compare_gradients(
    a: &Params,
    b: &Params,
    rel_tol: f64,
    abs_floor: f64,
) -> GradientComparison {
    let mut cmp = GradientComparison {
        checked: 0,
        mismatches: 0,
        max_relative_error: 0.0,
    };
    for ((_, x), (_, y)) in a.tensors().iter().zip(b.tensors()) {
        for (&u, &v) in x.as_slice().iter().zip(y.as_slice()) {
            cmp.checked += 1;
            let diff = (u - v).abs();
            let scale = u.abs().max(v.abs());
            if diff > abs_floor {
                cmp.max_relative_error = cmp.max_relative_error.max(diff / scale);
            }
            if !(diff <= rel_tol * scale || diff <= abs_floor) {
                cmp.mismatches += 1;
            }
        }
    }
    cmp
}

/// Glorot-uniform weights and zero biases for `cfg`.
pub fn init_network(cfg: BlockConfig, rng: &mut Rng) -> Result<NetworkState> {
    NetworkState::init(cfg, rng)
}

/// Combine a number-recitation network (hidden units `H_A`) and a pointing
/// network (hidden units `H_B`) into one network with hidden layer
/// `[H_A | H_B]`.
///
/// Copied blocks: trigger→H_A, H_A→H_A context, H_A→numbers from the
/// recitation net; trigger→H_B, visual→H_B, H_B→H_B context, H_B→gestures
/// from the pointing net. Everything else keeps the fresh Glorot values of
/// `init_network(cfg, rng)`. Biases are copied for pre-trained units and
/// zero elsewhere. A missing source leaves its partition fresh; the
/// recitation partition then has `hidden_size - H_B` units.
pub fn stitch_pretrained(
    recitation: Option<&NetworkState>,
    pointing: Option<&NetworkState>,
    cfg: BlockConfig,
    rng: &mut Rng,
) -> Result<NetworkState> {
    let mut net = NetworkState::init(cfg, rng)?;
    if !(cfg.use_visual_input && cfg.use_number_output && cfg.use_gesture_output)
        || cfg.use_gesture_input
    {
        return Err(Error::invalid(
            "stitched network must map trigger+visual to numbers and gestures",
        ));
    }
    let size_error = || {
        Error::invalid(format!(
            "stage-2 hidden size {} cannot hold the pre-trained partitions",
            cfg.hidden_size
        ))
    };
    let hb = match pointing {
        Some(nb) => nb.config.hidden_size,
        None => cfg
            .hidden_size
            .checked_sub(recitation.map_or(0, |na| na.config.hidden_size))
            .ok_or_else(size_error)?,
    };
    let ha = match recitation {
        Some(na) => na.config.hidden_size,
        None => cfg.hidden_size.checked_sub(hb).ok_or_else(size_error)?,
    };
    if ha + hb != cfg.hidden_size {
        return Err(Error::invalid(format!(
            "stage-2 hidden size {} is not {ha} + {hb}",
            cfg.hidden_size
        )));
    }
    let ctx = cfg.context_offset();
    let p = &mut net.params;

    if let Some(na) = recitation {
        let c = &na.config;
        if c.use_visual_input
            || c.gesture_in_width() > 0
            || !c.use_number_output
            || c.use_gesture_output
        {
            return Err(Error::invalid(
                "recitation network must be trigger -> numbers",
            ));
        }
        na.check_shapes()?;
        let src = &na.params;
        p.w_in.set_block(0, 0, &src.w_in.block(0, 0, ha, 1));
        p.w_in
            .set_block(0, ctx, &src.w_in.block(0, c.context_offset(), ha, ha));
        p.b_hidden.set_block(0, 0, &src.b_hidden);
        let w_num = p.w_num.as_mut().unwrap();
        w_num.set_block(0, 0, src.w_num.as_ref().unwrap());
        *p.b_num.as_mut().unwrap() = src.b_num.clone().unwrap();
    }
    if let Some(nb) = pointing {
        let c = &nb.config;
        if !c.use_visual_input
            || c.gesture_in_width() > 0
            || c.use_number_output
            || !c.use_gesture_output
        {
            return Err(Error::invalid(
                "pointing network must be trigger+visual -> gestures",
            ));
        }
        nb.check_shapes()?;
        let src = &nb.params;
        p.w_in
            .set_block(ha, 0, &src.w_in.block(0, 0, hb, 1 + VISUAL_WIDTH));
        p.w_in
            .set_block(ha, ctx + ha, &src.w_in.block(0, c.context_offset(), hb, hb));
        p.b_hidden.set_block(0, ha, &src.b_hidden);
        let w_ges = p.w_ges.as_mut().unwrap();
        w_ges.set_block(0, ha, src.w_ges.as_ref().unwrap());
        *p.b_ges.as_mut().unwrap() = src.b_ges.clone().unwrap();
    }
    Ok(net)
}

mod checkpoint {
    use super::*;

    const FORMAT: &str = "countlab-checkpoint";
    const VERSION: u32 = 1;

    #[derive(Serialize, Deserialize)]
    struct Tensor {
        name: String,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    #[derive(Serialize, Deserialize)]
    struct File {
        format: String,
        version: u32,
        config: BlockConfig,
        tensors: Vec<Tensor>,
    }

    pub(super) fn encode(net: &NetworkState) -> Result<String> {
        let file = File {
            format: FORMAT.into(),
            version: VERSION,
            config: net.config,
            tensors: net
                .params
                .tensors()
                .into_iter()
                .map(|(name, m)| Tensor {
                    name: name.into(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.as_slice().to_vec(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub(super) fn decode(text: &str) -> Result<NetworkState> {
        let file: File = serde_json::from_str(text)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let mut params = Params::zeros(&file.config);
        let mut tensors = file.tensors.into_iter();
        let names: Vec<&str> = params.tensors().iter().map(|(n, _)| *n).collect();
        for (name, slot) in names.into_iter().zip(params.tensors_mut()) {
            let t = tensors
                .next()
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {name}")))?;
            if t.name != name || (t.rows, t.cols) != slot.shape() {
                return Err(Error::Format(format!(
                    "tensor {} ({}x{}) does not match expected {name} {:?}",
                    t.name,
                    t.rows,
                    t.cols,
                    slot.shape()
                )));
            }
            *slot = Matrix::from_vec(t.rows, t.cols, t.data)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        if tensors.next().is_some() {
            return Err(Error::Format("checkpoint has extra tensors".into()));
        }
        Ok(NetworkState {
            config: file.config,
            params,
        })
    }
}
