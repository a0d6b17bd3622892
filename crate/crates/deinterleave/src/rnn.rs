//! Recurrent sequence labeler built from scratch: a simple tanh cell or an
//! LSTM, softmax cross-entropy, exact backpropagation through time, Adam,
//! and validation-based early stopping.
//!
//! Inputs are symbol indices (one-hot conceptually; weight columns are picked
//! directly). The label at step `t` is predicted from the hidden state after
//! consuming input `t`. Training slices the sequence into consecutive
//! windows, carries the hidden state across windows within an epoch (so
//! gradients are truncated at window boundaries but the forward pass is not),
//! and takes one Adam step per window. All arithmetic is `f64` and fully
//! deterministic for a given seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Simple,
    Lstm,
}

/// Architecture and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub window: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_scale: f64,
}

impl RnnConfig {
    pub fn new(cell: CellKind, input_dim: usize, output_dim: usize) -> Self {
        RnnConfig {
            cell,
            input_dim,
            hidden_dim: 64,
            output_dim,
            window: 50,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 50,
            patience: 5,
            init_scale: 0.08,
        }
    }
}

/// All matrices are row-major `Vec<f64>`; `w_x*` are hidden x input, `w_h*`
/// hidden x hidden, biases length hidden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleCellParams {
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w_xi: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub b_i: Vec<f64>,
    pub w_xf: Vec<f64>,
    pub w_hf: Vec<f64>,
    pub b_f: Vec<f64>,
    pub w_xo: Vec<f64>,
    pub w_ho: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_xg: Vec<f64>,
    pub w_hg: Vec<f64>,
    pub b_g: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellParams {
    Simple(SimpleCellParams),
    Lstm(LstmCellParams),
}

/// Full parameter set. `readout` is output x hidden; there is no output bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub cell: CellParams,
    pub readout: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("input symbol {x} out of range for input_dim {dim}")]
    BadInput { x: usize, dim: usize },
    #[error("label {y} out of range for output_dim {dim}")]
    BadLabel { y: usize, dim: usize },
    #[error("inputs and labels differ in length: {xs} vs {ys}")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("{which} sequence is empty")]
    EmptySequence { which: &'static str },
}

impl RnnParams {
    /// Zero parameters of the given shape.
    pub fn zeros(config: &RnnConfig) -> Self {
        let (h, x, o) = (config.hidden_dim, config.input_dim, config.output_dim);
        let cell = match config.cell {
            CellKind::Simple => CellParams::Simple(SimpleCellParams {
                w_x: vec![0.0; h * x],
                w_h: vec![0.0; h * h],
                b: vec![0.0; h],
            }),
            CellKind::Lstm => CellParams::Lstm(LstmCellParams {
                w_xi: vec![0.0; h * x],
                w_hi: vec![0.0; h * h],
                b_i: vec![0.0; h],
                w_xf: vec![0.0; h * x],
                w_hf: vec![0.0; h * h],
                b_f: vec![0.0; h],
                w_xo: vec![0.0; h * x],
                w_ho: vec![0.0; h * h],
                b_o: vec![0.0; h],
                w_xg: vec![0.0; h * x],
                w_hg: vec![0.0; h * h],
                b_g: vec![0.0; h],
            }),
        };
        RnnParams {
            input_dim: x,
            hidden_dim: h,
            output_dim: o,
            cell,
            readout: vec![0.0; o * h],
        }
    }

    /// Random initialization: every weight matrix is filled with uniform
    /// draws from `[-init_scale, init_scale)` in a fixed order (input
    /// weights, then hidden weights, gate order i/f/o/g, then the readout).
    /// Biases take no draws: all zero except the forget bias, which starts
    /// at one so early training does not erase the cell state.
    pub fn init(config: &RnnConfig, rng: &mut SimRng) -> Self {
        let mut p = Self::zeros(config);
        let s = config.init_scale;
        let fill = |v: &mut Vec<f64>, rng: &mut SimRng| {
            for slot in v.iter_mut() {
                *slot = rng.range_f64(-s, s);
            }
        };
        match &mut p.cell {
            CellParams::Simple(c) => {
                fill(&mut c.w_x, rng);
                fill(&mut c.w_h, rng);
            }
            CellParams::Lstm(c) => {
                fill(&mut c.w_xi, rng);
                fill(&mut c.w_hi, rng);
                fill(&mut c.w_xf, rng);
                fill(&mut c.w_hf, rng);
                fill(&mut c.w_xo, rng);
                fill(&mut c.w_ho, rng);
                fill(&mut c.w_xg, rng);
                fill(&mut c.w_hg, rng);
                c.b_f.iter_mut().for_each(|v| *v = 1.0);
            }
        }
        fill(&mut p.readout, rng);
        p
    }

    /// Tensors in a fixed order shared by gradients and optimizer state.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = match &self.cell {
            CellParams::Simple(c) => vec![&c.w_x, &c.w_h, &c.b],
            CellParams::Lstm(c) => vec![
                &c.w_xi, &c.w_hi, &c.b_i, &c.w_xf, &c.w_hf, &c.b_f, &c.w_xo, &c.w_ho, &c.b_o,
                &c.w_xg, &c.w_hg, &c.b_g,
            ],
        };
        out.push(&self.readout);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = match &mut self.cell {
            CellParams::Simple(c) => vec![&mut c.w_x, &mut c.w_h, &mut c.b],
            CellParams::Lstm(c) => vec![
                &mut c.w_xi, &mut c.w_hi, &mut c.b_i, &mut c.w_xf, &mut c.w_hf, &mut c.b_f,
                &mut c.w_xo, &mut c.w_ho, &mut c.b_o, &mut c.w_xg, &mut c.w_hg, &mut c.b_g,
            ],
        };
        out.push(&mut self.readout);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zeros_like(&self) -> RnnParams {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }
}

/// Recurrent state: `c` is unused by the simple cell and stays empty.
#[derive(Clone, Debug)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(params: &RnnParams) -> Self {
        let h = vec![0.0; params.hidden_dim];
        let c = match params.cell {
            CellParams::Simple(_) => Vec::new(),
            CellParams::Lstm(_) => vec![0.0; params.hidden_dim],
        };
        HiddenState { h, c }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `dst += mat[:, col]` for a row-major `rows x cols` matrix.
fn add_col(dst: &mut [f64], mat: &[f64], cols: usize, col: usize) {
    for (r, d) in dst.iter_mut().enumerate() {
        *d += mat[r * cols + col];
    }
}

/// `dst += mat * v` for a row-major `rows x cols` matrix.
fn add_matvec(dst: &mut [f64], mat: &[f64], v: &[f64], cols: usize) {
    for (r, d) in dst.iter_mut().enumerate() {
        let row = &mat[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *d += acc;
    }
}

/// `dst += mat^T * v`, `dst` of length `cols`.
fn add_matvec_t(dst: &mut [f64], mat: &[f64], v: &[f64], cols: usize) {
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        let row = &mat[r * cols..(r + 1) * cols];
        for (d, &m) in dst.iter_mut().zip(row) {
            *d += m * vr;
        }
    }
}

/// `gmat += v * e_col^T`: rank-one update against a one-hot input.
fn add_outer_col(gmat: &mut [f64], v: &[f64], cols: usize, col: usize) {
    for (r, &vr) in v.iter().enumerate() {
        gmat[r * cols + col] += vr;
    }
}

/// `gmat += v * u^T`.
fn add_outer(gmat: &mut [f64], v: &[f64], u: &[f64], cols: usize) {
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        let row = &mut gmat[r * cols..(r + 1) * cols];
        for (g, &uj) in row.iter_mut().zip(u) {
            *g += vr * uj;
        }
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the softmax over `logits` against class `y`.
pub fn softmax_xent(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    lse - logits[y]
}

fn logits(params: &RnnParams, h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; params.output_dim];
    add_matvec(&mut out, &params.readout, h, params.hidden_dim);
    out
}

/// One forward step; returns the new state and, for the LSTM, the gate
/// activations needed by backprop (i, f, o, g).
fn cell_step(params: &RnnParams, x: usize, state: &HiddenState) -> (HiddenState, Vec<Vec<f64>>) {
    let (hd, xd) = (params.hidden_dim, params.input_dim);
    match &params.cell {
        CellParams::Simple(c) => {
            let mut a = c.b.clone();
            add_col(&mut a, &c.w_x, xd, x);
            add_matvec(&mut a, &c.w_h, &state.h, hd);
            a.iter_mut().for_each(|v| *v = v.tanh());
            (HiddenState { h: a, c: Vec::new() }, Vec::new())
        }
        CellParams::Lstm(c) => {
            let gate = |wx: &[f64], wh: &[f64], b: &[f64]| {
                let mut a = b.to_vec();
                add_col(&mut a, wx, xd, x);
                add_matvec(&mut a, wh, &state.h, hd);
                a
            };
            let mut i = gate(&c.w_xi, &c.w_hi, &c.b_i);
            let mut f = gate(&c.w_xf, &c.w_hf, &c.b_f);
            let mut o = gate(&c.w_xo, &c.w_ho, &c.b_o);
            let mut g = gate(&c.w_xg, &c.w_hg, &c.b_g);
            i.iter_mut().for_each(|v| *v = sigmoid(*v));
            f.iter_mut().for_each(|v| *v = sigmoid(*v));
            o.iter_mut().for_each(|v| *v = sigmoid(*v));
            g.iter_mut().for_each(|v| *v = v.tanh());
            let cc: Vec<f64> = (0..hd)
                .map(|j| f[j] * state.c[j] + i[j] * g[j])
                .collect();
            let h: Vec<f64> = (0..hd).map(|j| o[j] * cc[j].tanh()).collect();
            (HiddenState { h, c: cc }, vec![i, f, o, g])
        }
    }
}

/// Mean cross-entropy of one window, forward only. Returns the loss and the
/// state after the window.
pub fn window_loss(
    params: &RnnParams,
    xs: &[usize],
    ys: &[usize],
    state: &HiddenState,
) -> (f64, HiddenState) {
    let mut st = state.clone();
    let mut total = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let (next, _) = cell_step(params, x, &st);
        total += softmax_xent(&logits(params, &next.h), y);
        st = next;
    }
    (total / xs.len() as f64, st)
}

/// Mean cross-entropy of one window plus exact gradients through it.
/// Gradients are truncated at the window boundary: the incoming state is
/// treated as a constant.
pub fn window_loss_and_grads(
    params: &RnnParams,
    xs: &[usize],
    ys: &[usize],
    state: &HiddenState,
) -> (f64, RnnParams, HiddenState) {
    let k = xs.len();
    let hd = params.hidden_dim;
    let mut states = Vec::with_capacity(k + 1);
    let mut gates = Vec::with_capacity(k);
    states.push(state.clone());
    let mut total = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let (next, gate) = cell_step(params, x, states.last().unwrap());
        total += softmax_xent(&logits(params, &next.h), y);
        states.push(next);
        gates.push(gate);
    }
    let loss = total / k as f64;

    let mut grads = params.zeros_like();
    let mut dh = vec![0.0; hd];
    let mut dc = vec![0.0; hd];
    let scale = 1.0 / k as f64;
    for t in (0..k).rev() {
        let h_t = &states[t + 1].h;
        let mut dl = softmax(&logits(params, h_t));
        dl[ys[t]] -= 1.0;
        dl.iter_mut().for_each(|v| *v *= scale);
        add_outer(&mut grads.readout, &dl, h_t, hd);
        add_matvec_t(&mut dh, &params.readout, &dl, hd);

        match (&params.cell, &mut grads.cell) {
            (CellParams::Simple(c), CellParams::Simple(gc)) => {
                let da: Vec<f64> = (0..hd).map(|j| dh[j] * (1.0 - h_t[j] * h_t[j])).collect();
                add_outer_col(&mut gc.w_x, &da, params.input_dim, xs[t]);
                add_outer(&mut gc.w_h, &da, &states[t].h, hd);
                for (g, &d) in gc.b.iter_mut().zip(&da) {
                    *g += d;
                }
                dh.iter_mut().for_each(|v| *v = 0.0);
                add_matvec_t(&mut dh, &c.w_h, &da, hd);
            }
            (CellParams::Lstm(c), CellParams::Lstm(gc)) => {
                let [gi, gf, go, gg] = &gates[t][..] else { unreachable!() };
                let c_t = &states[t + 1].c;
                let c_prev = &states[t].c;
                let mut da_i = vec![0.0; hd];
                let mut da_f = vec![0.0; hd];
                let mut da_o = vec![0.0; hd];
                let mut da_g = vec![0.0; hd];
                for j in 0..hd {
                    let tc = c_t[j].tanh();
                    dc[j] += dh[j] * go[j] * (1.0 - tc * tc);
                    da_o[j] = dh[j] * tc * go[j] * (1.0 - go[j]);
                    da_f[j] = dc[j] * c_prev[j] * gf[j] * (1.0 - gf[j]);
                    da_i[j] = dc[j] * gg[j] * gi[j] * (1.0 - gi[j]);
                    da_g[j] = dc[j] * gi[j] * (1.0 - gg[j] * gg[j]);
                }
                let h_prev = &states[t].h;
                let x = xs[t];
                let xd = params.input_dim;
                for (da, wx, wh, b) in [
                    (&da_i, &mut gc.w_xi, &mut gc.w_hi, &mut gc.b_i),
                    (&da_f, &mut gc.w_xf, &mut gc.w_hf, &mut gc.b_f),
                    (&da_o, &mut gc.w_xo, &mut gc.w_ho, &mut gc.b_o),
                    (&da_g, &mut gc.w_xg, &mut gc.w_hg, &mut gc.b_g),
                ] {
                    add_outer_col(wx, da, xd, x);
                    add_outer(wh, da, h_prev, hd);
                    for (g, &d) in b.iter_mut().zip(da) {
                        *g += d;
                    }
                }
                dh.iter_mut().for_each(|v| *v = 0.0);
                add_matvec_t(&mut dh, &c.w_hi, &da_i, hd);
                add_matvec_t(&mut dh, &c.w_hf, &da_f, hd);
                add_matvec_t(&mut dh, &c.w_ho, &da_o, hd);
                add_matvec_t(&mut dh, &c.w_hg, &da_g, hd);
                for j in 0..hd {
                    dc[j] *= gf[j];
                }
            }
            _ => unreachable!("grads mirror params"),
        }
    }
    (loss, grads, states.pop().unwrap())
}

/// Bias-corrected Adam over the flattened tensor list.
pub struct AdamState {
    m: RnnParams,
    v: RnnParams,
    t: usize,
}

impl AdamState {
    pub fn new(params: &RnnParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut RnnParams, grads: &RnnParams, config: &RnnConfig) {
        self.t += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let mut ps = params.tensors_mut();
        let mut ms = self.m.tensors_mut();
        let mut vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for i in 0..ps.len() {
            let (p, m, v, g) = (&mut ps[i], &mut ms[i], &mut vs[i], gs[i]);
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= config.lr * mhat / (vhat.sqrt() + config.eps);
            }
        }
    }
}

/// Greedy labels for a whole sequence, scanning statefully from a zero
/// state. Argmax ties go to the lower class index.
pub fn predict(params: &RnnParams, inputs: &[usize]) -> Result<Vec<usize>, RnnError> {
    check_symbols(inputs, params.input_dim, "input")?;
    let mut st = HiddenState::zeros(params);
    let mut out = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (next, _) = cell_step(params, x, &st);
        let lg = logits(params, &next.h);
        let mut best = 0;
        for (k, &v) in lg.iter().enumerate() {
            if v > lg[best] {
                best = k;
            }
        }
        out.push(best);
        st = next;
    }
    Ok(out)
}

fn check_symbols(xs: &[usize], dim: usize, what: &'static str) -> Result<(), RnnError> {
    for &x in xs {
        if x >= dim {
            return match what {
                "input" => Err(RnnError::BadInput { x, dim }),
                _ => Err(RnnError::BadLabel { y: x, dim }),
            };
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: RnnParams,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochStats>,
}

fn val_accuracy(params: &RnnParams, xs: &[usize], ys: &[usize]) -> Result<f64, RnnError> {
    let pred = predict(params, xs)?;
    let hits = pred.iter().zip(ys).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / ys.len() as f64)
}

/// Trains from a fresh random initialization. Epoch 0 is the untrained
/// model's validation score; afterwards the model with the best validation
/// accuracy is kept (strict improvements only, so the earliest best epoch
/// wins ties) and training stops after `patience` epochs without one.
pub fn train(
    config: &RnnConfig,
    train_inputs: &[usize],
    train_labels: &[usize],
    val_inputs: &[usize],
    val_labels: &[usize],
    rng: &mut SimRng,
) -> Result<TrainOutcome, RnnError> {
    if train_inputs.is_empty() {
        return Err(RnnError::EmptySequence { which: "training" });
    }
    if val_inputs.is_empty() {
        return Err(RnnError::EmptySequence { which: "validation" });
    }
    if train_inputs.len() != train_labels.len() {
        return Err(RnnError::LengthMismatch {
            xs: train_inputs.len(),
            ys: train_labels.len(),
        });
    }
    if val_inputs.len() != val_labels.len() {
        return Err(RnnError::LengthMismatch {
            xs: val_inputs.len(),
            ys: val_labels.len(),
        });
    }
    check_symbols(train_inputs, config.input_dim, "input")?;
    check_symbols(val_inputs, config.input_dim, "input")?;
    check_symbols(train_labels, config.output_dim, "label")?;
    check_symbols(val_labels, config.output_dim, "label")?;

    let mut params = RnnParams::init(config, rng);
    let mut adam = AdamState::new(&params);

    let mut best_params = params.clone();
    let mut best_acc = val_accuracy(&params, val_inputs, val_labels)?;
    let mut best_epoch = 0;
    let mut history = vec![EpochStats {
        epoch: 0,
        train_loss: f64::NAN,
        val_accuracy: best_acc,
    }];
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let mut state = HiddenState::zeros(&params);
        let mut loss_sum = 0.0;
        let mut windows = 0;
        for start in (0..train_inputs.len()).step_by(config.window) {
            let end = (start + config.window).min(train_inputs.len());
            let (loss, grads, next_state) = window_loss_and_grads(
                &params,
                &train_inputs[start..end],
                &train_labels[start..end],
                &state,
            );
            if !loss.is_finite() {
                return Err(RnnError::Diverged { epoch });
            }
            adam.step(&mut params, &grads, config);
            state = next_state;
            loss_sum += loss;
            windows += 1;
        }
        let acc = val_accuracy(&params, val_inputs, val_labels)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / windows as f64,
            val_accuracy: acc,
        });
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        best_val_accuracy: best_acc,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(cell: CellKind, hidden: usize) -> RnnConfig {
        let mut c = RnnConfig::new(cell, 3, 2);
        c.hidden_dim = hidden;
        c
    }

    #[test]
    fn softmax_and_xent_hand_values() {
        let p = softmax(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let loss = softmax_xent(&[0.0, 0.0], 1);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        // Shift invariance and stability at large magnitudes.
        let a = softmax_xent(&[1.0, 3.0], 0);
        let b = softmax_xent(&[1001.0, 1003.0], 0);
        assert!((a - b).abs() < 1e-9);
        assert!(softmax(&[1e308, 0.0])[0].is_finite());
    }

    #[test]
    fn simple_cell_scalar_forward() {
        let mut p = RnnParams::zeros(&RnnConfig {
            hidden_dim: 1,
            input_dim: 1,
            ..tiny_config(CellKind::Simple, 1)
        });
        match &mut p.cell {
            CellParams::Simple(c) => {
                c.w_x[0] = 0.5;
                c.w_h[0] = 0.25;
                c.b[0] = 0.1;
            }
            _ => unreachable!(),
        }
        p.readout = vec![2.0, -1.0];
        let h = 0.6f64.tanh();
        let (loss, st) = window_loss(&p, &[0], &[0], &HiddenState::zeros(&p));
        assert!((st.h[0] - h).abs() < 1e-15);
        // logits (2h, -h); loss for class 0 is ln(1 + e^{-3h}).
        let expect = (1.0 + (-3.0 * h).exp()).ln();
        assert!((loss - expect).abs() < 1e-15);
        // Second step folds the recurrent weight in: a = 0.1 + 0.5 + 0.25 h.
        let (_, st2) = window_loss(&p, &[0, 0], &[0, 0], &HiddenState::zeros(&p));
        let h2 = (0.6 + 0.25 * h).tanh();
        assert!((st2.h[0] - h2).abs() < 1e-15);
    }

    #[test]
    fn lstm_cell_scalar_forward() {
        let mut p = RnnParams::zeros(&RnnConfig {
            hidden_dim: 1,
            input_dim: 1,
            ..tiny_config(CellKind::Lstm, 1)
        });
        match &mut p.cell {
            CellParams::Lstm(c) => {
                c.w_xi[0] = 0.3;
                c.b_i[0] = 0.1;
                c.w_xf[0] = -0.2;
                c.b_f[0] = 1.0;
                c.w_xo[0] = 0.5;
                c.w_xg[0] = 0.6;
            }
            _ => unreachable!(),
        }
        p.readout = vec![2.0, -1.0];
        let i = sigmoid(0.4);
        let o = sigmoid(0.5);
        let g = 0.6f64.tanh();
        let c1 = i * g;
        let h1 = o * c1.tanh();
        let (loss, st) = window_loss(&p, &[0], &[1], &HiddenState::zeros(&p));
        assert!((st.c[0] - c1).abs() < 1e-15);
        assert!((st.h[0] - h1).abs() < 1e-15);
        let expect = (1.0 + (3.0 * h1).exp()).ln();
        assert!((loss - expect).abs() < 1e-14);
    }

    fn fd_check(cell: CellKind, seed: u64) {
        // A healthy init scale keeps activations in the nonlinear regime so
        // no gradient is small enough for finite differences to drown in
        // float cancellation noise.
        let config = RnnConfig {
            init_scale: 0.5,
            ..tiny_config(cell, 4)
        };
        let mut rng = SimRng::new(seed);
        let params = RnnParams::init(&config, &mut rng);
        let xs: Vec<usize> = (0..7).map(|_| rng.index(3)).collect();
        let ys: Vec<usize> = (0..7).map(|_| rng.index(2)).collect();
        let state = HiddenState::zeros(&params);
        let (_, grads, _) = window_loss_and_grads(&params, &xs, &ys, &state);

        let eps = 1e-5;
        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            for j in 0..params.tensors()[ti].len() {
                let mut plus = params.clone();
                plus.tensors_mut()[ti][j] += eps;
                let (lp, _) = window_loss(&plus, &xs, &ys, &state);
                let mut minus = params.clone();
                minus.tensors_mut()[ti][j] -= eps;
                let (lm, _) = window_loss(&minus, &xs, &ys, &state);
                let fd = (lp - lm) / (2.0 * eps);
                let an = grads.tensors()[ti][j];
                let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
                assert!(
                    rel <= 1e-4,
                    "tensor {ti} entry {j}: analytic {an} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_simple() {
        fd_check(CellKind::Simple, 11);
        fd_check(CellKind::Simple, 12);
    }

    #[test]
    fn gradients_match_finite_differences_lstm() {
        fd_check(CellKind::Lstm, 13);
        fd_check(CellKind::Lstm, 14);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let config = tiny_config(CellKind::Simple, 2);
        let mut params = RnnParams::zeros(&config);
        let mut grads = params.zeros_like();
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 1.0);
        }
        let mut adam = AdamState::new(&params);
        adam.step(&mut params, &grads, &config);
        // mhat = vhat = 1 after bias correction, so every entry moves by
        // -lr / (1 + eps).
        let expect = -config.lr / (1.0 + config.eps);
        for t in params.tensors() {
            for &v in t {
                assert!((v - expect).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_noop() {
        let config = tiny_config(CellKind::Lstm, 2);
        let mut rng = SimRng::new(15);
        let mut params = RnnParams::init(&config, &mut rng);
        let before = params.clone();
        let grads = params.zeros_like();
        let mut adam = AdamState::new(&params);
        adam.step(&mut params, &grads, &config);
        assert_eq!(params, before);
    }

    #[test]
    fn lstm_forget_bias_starts_at_one() {
        let config = tiny_config(CellKind::Lstm, 3);
        let mut rng = SimRng::new(16);
        let p = RnnParams::init(&config, &mut rng);
        match &p.cell {
            CellParams::Lstm(c) => {
                assert!(c.b_f.iter().all(|&v| v == 1.0));
                assert!(c.b_i.iter().all(|&v| v == 0.0));
                assert!(c.w_xi.iter().all(|&v| v.abs() <= 0.08 && v != 0.0));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn carried_state_makes_windows_equal_one_pass() {
        let config = tiny_config(CellKind::Lstm, 5);
        let mut rng = SimRng::new(17);
        let params = RnnParams::init(&config, &mut rng);
        let xs: Vec<usize> = (0..10).map(|_| rng.index(3)).collect();
        let ys: Vec<usize> = (0..10).map(|_| rng.index(2)).collect();
        let z = HiddenState::zeros(&params);
        let (full, end_full) = window_loss(&params, &xs, &ys, &z);
        let (l1, mid) = window_loss(&params, &xs[..4], &ys[..4], &z);
        let (l2, end_split) = window_loss(&params, &xs[4..], &ys[4..], &mid);
        assert!((full * 10.0 - (l1 * 4.0 + l2 * 6.0)).abs() < 1e-12);
        for (a, b) in end_full.h.iter().zip(&end_split.h) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let config = RnnConfig {
            max_epochs: 3,
            window: 8,
            ..tiny_config(CellKind::Lstm, 6)
        };
        let mut data_rng = SimRng::new(18);
        let xs: Vec<usize> = (0..60).map(|_| data_rng.index(3)).collect();
        let ys: Vec<usize> = xs.iter().map(|&x| usize::from(x == 1)).collect();
        let run = |seed| {
            let mut rng = SimRng::new(seed);
            train(&config, &xs, &ys, &xs, &ys, &mut rng).unwrap()
        };
        let a = run(99);
        let b = run(99);
        assert_eq!(a.params, b.params);
        assert_eq!(a.best_epoch, b.best_epoch);
        let c = run(100);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn learns_an_echo_task() {
        // Label = current symbol is 1: linearly readable from one-hot input,
        // so even the simple cell should hit perfect validation accuracy.
        let config = RnnConfig {
            max_epochs: 40,
            window: 16,
            hidden_dim: 8,
            lr: 0.01,
            ..tiny_config(CellKind::Simple, 8)
        };
        let mut data_rng = SimRng::new(19);
        let xs: Vec<usize> = (0..400).map(|_| data_rng.index(3)).collect();
        let ys: Vec<usize> = xs.iter().map(|&x| usize::from(x == 1)).collect();
        let vx: Vec<usize> = (0..100).map(|_| data_rng.index(3)).collect();
        let vy: Vec<usize> = vx.iter().map(|&x| usize::from(x == 1)).collect();
        let mut rng = SimRng::new(20);
        let out = train(&config, &xs, &ys, &vx, &vy, &mut rng).unwrap();
        assert!(
            out.best_val_accuracy > 0.99,
            "echo task should be solved, got {}",
            out.best_val_accuracy
        );
    }

    #[test]
    fn early_stopping_respects_patience() {
        let config = RnnConfig {
            max_epochs: 50,
            patience: 2,
            window: 10,
            hidden_dim: 4,
            lr: 0.05,
            ..tiny_config(CellKind::Simple, 4)
        };
        let mut data_rng = SimRng::new(21);
        let xs: Vec<usize> = (0..80).map(|_| data_rng.index(3)).collect();
        // Constant labels: accuracy saturates at 1.0 almost immediately and
        // can never strictly improve afterwards.
        let ys = vec![0usize; 80];
        let mut rng = SimRng::new(22);
        let out = train(&config, &xs, &ys, &xs, &ys, &mut rng).unwrap();
        assert!((out.best_val_accuracy - 1.0).abs() < 1e-12);
        let last = out.history.last().unwrap().epoch;
        assert!(
            last == out.best_epoch + config.patience,
            "stopped at {last}, best {}",
            out.best_epoch
        );
        assert!(last < config.max_epochs);
    }

    #[test]
    fn divergence_is_reported() {
        let config = RnnConfig {
            init_scale: 1e308,
            max_epochs: 2,
            window: 10,
            hidden_dim: 8,
            ..tiny_config(CellKind::Simple, 8)
        };
        let mut data_rng = SimRng::new(23);
        let xs: Vec<usize> = (0..20).map(|_| data_rng.index(3)).collect();
        let ys: Vec<usize> = (0..20).map(|_| data_rng.index(2)).collect();
        let mut rng = SimRng::new(24);
        let err = train(&config, &xs, &ys, &xs, &ys, &mut rng).unwrap_err();
        assert!(matches!(err, RnnError::Diverged { .. }));
    }

    #[test]
    fn zero_params_predict_all_class_zero() {
        let config = tiny_config(CellKind::Simple, 4);
        let params = RnnParams::zeros(&config);
        let out = predict(&params, &[0, 1, 2, 1]).unwrap();
        assert_eq!(out, vec![0, 0, 0, 0]);
        assert!(matches!(
            predict(&params, &[3]),
            Err(RnnError::BadInput { x: 3, dim: 3 })
        ));
    }

    #[test]
    fn train_input_validation() {
        let config = tiny_config(CellKind::Simple, 4);
        let mut rng = SimRng::new(25);
        assert!(matches!(
            train(&config, &[], &[], &[0], &[0], &mut rng),
            Err(RnnError::EmptySequence { which: "training" })
        ));
        assert!(matches!(
            train(&config, &[0, 1], &[0], &[0], &[0], &mut rng),
            Err(RnnError::LengthMismatch { xs: 2, ys: 1 })
        ));
        assert!(matches!(
            train(&config, &[0], &[5], &[0], &[0], &mut rng),
            Err(RnnError::BadLabel { y: 5, dim: 2 })
        ));
    }

    #[test]
    fn n_params_counts_everything() {
        let config = tiny_config(CellKind::Lstm, 4);
        let p = RnnParams::zeros(&config);
        // 4 gates x (4x3 + 4x4 + 4) plus readout 2x4.
        assert_eq!(p.n_params(), 4 * (12 + 16 + 4) + 8);
    }
}
