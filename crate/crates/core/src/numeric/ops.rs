//! Scalar math kernels shared by the tape and the inference path.
//!
//! Everything here is plain slice arithmetic over f64. The loops are written
//! row-contiguous so the autovectorizer can do its job; this is the hot path
//! for training.

use super::NumericError;

/// Scaled exponential linear unit constants.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn selu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

#[inline]
pub fn selu_grad_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

pub fn selu_slice(xs: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = selu_scalar(x);
    }
}

/// Four-lane dot product; the split accumulators break the add dependency
/// chain that would otherwise serialize the reduction.
#[inline]
fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (qa, qb) in (&mut ca).zip(&mut cb) {
        acc[0] += qa[0] * qb[0];
        acc[1] += qa[1] * qb[1];
        acc[2] += qa[2] * qb[2];
        acc[3] += qa[3] * qb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// out += W x, with W given row-major as rows x cols.
pub fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot_lanes(row, x);
    }
}

/// gx += W^T gy. Iterates rows of W so memory access stays contiguous.
pub fn matvec_t_add(w: &[f64], rows: usize, cols: usize, gy: &[f64], gx: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(gy.len(), rows);
    debug_assert_eq!(gx.len(), cols);
    for (&g, row) in gy.iter().zip(w.chunks_exact(cols)) {
        if g == 0.0 {
            continue;
        }
        for (o, &a) in gx.iter_mut().zip(row) {
            *o += g * a;
        }
    }
}

/// gw += gy (outer) x.
pub fn outer_add(gy: &[f64], x: &[f64], gw: &mut [f64]) {
    debug_assert_eq!(gw.len(), gy.len() * x.len());
    for (&g, grow) in gy.iter().zip(gw.chunks_exact_mut(x.len())) {
        if g == 0.0 {
            continue;
        }
        for (o, &a) in grow.iter_mut().zip(x) {
            *o += g * a;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    dot_lanes(a, b)
}

/// out += c * x.
pub fn axpy(c: f64, x: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += c * v;
    }
}

/// Numerically stable softmax. Errors on empty input.
pub fn softmax_slice(xs: &[f64], out: &mut [f64]) -> Result<(), NumericError> {
    if xs.is_empty() {
        return Err(NumericError::EmptyInput {
            context: "softmax".into(),
        });
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(())
}

/// log(sum(exp(xs))) with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Per-cell forward scratch kept for the backward pass: activated gates in
/// input, forget, candidate, output order.
#[derive(Debug, Clone)]
pub struct LstmGates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
}

/// One LSTM step. Writes the new hidden state into `h_out`, the new cell
/// state into `c_out`, and returns activated gates. `h_prev`/`c_prev` of
/// `None` mean zero initial state.
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: Option<&[f64]>,
    c_prev: Option<&[f64]>,
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    input_dim: usize,
    hidden: usize,
    h_out: &mut [f64],
    c_out: &mut [f64],
) -> LstmGates {
    debug_assert_eq!(x.len(), input_dim);
    let mut pre = b.to_vec();
    matvec_add(wx, 4 * hidden, input_dim, x, &mut pre);
    if let Some(h) = h_prev {
        matvec_add(wh, 4 * hidden, hidden, h, &mut pre);
    }
    let mut gates = LstmGates {
        i: vec![0.0; hidden],
        f: vec![0.0; hidden],
        g: vec![0.0; hidden],
        o: vec![0.0; hidden],
    };
    for j in 0..hidden {
        gates.i[j] = sigmoid(pre[j]);
        gates.f[j] = sigmoid(pre[hidden + j]);
        gates.g[j] = pre[2 * hidden + j].tanh();
        gates.o[j] = sigmoid(pre[3 * hidden + j]);
        let c = gates.f[j] * c_prev.map_or(0.0, |c| c[j]) + gates.i[j] * gates.g[j];
        c_out[j] = c;
        h_out[j] = gates.o[j] * c.tanh();
    }
    gates
}

/// Reverse-mode step matching `lstm_cell_forward`. `gh`/`gc` are gradients
/// w.r.t. the cell's outputs; all `g*` output slices are accumulated into.
#[allow(clippy::too_many_arguments)]
pub struct LstmBackwardArgs<'a> {
    pub x: &'a [f64],
    pub h_prev: Option<&'a [f64]>,
    pub c_prev: Option<&'a [f64]>,
    pub c_new: &'a [f64],
    pub gates: &'a LstmGates,
    pub wx: &'a [f64],
    pub wh: &'a [f64],
    pub gh: &'a [f64],
    pub gc: &'a [f64],
}

#[allow(clippy::too_many_arguments)]
pub struct LstmBackwardOut<'a> {
    pub gx: &'a mut [f64],
    pub gh_prev: Option<&'a mut [f64]>,
    pub gc_prev: Option<&'a mut [f64]>,
    pub gwx: &'a mut [f64],
    pub gwh: &'a mut [f64],
    pub gb: &'a mut [f64],
}

pub fn lstm_cell_backward(
    args: &LstmBackwardArgs<'_>,
    out: &mut LstmBackwardOut<'_>,
    input_dim: usize,
    hidden: usize,
) {
    let LstmGates { i, f, g, o } = args.gates;
    // d(pre-activation) for the four gate blocks.
    let mut dpre = vec![0.0; 4 * hidden];
    for j in 0..hidden {
        let tc = args.c_new[j].tanh();
        let dh = args.gh[j];
        let dc = args.gc[j] + dh * o[j] * (1.0 - tc * tc);
        let d_o = dh * tc;
        let d_i = dc * g[j];
        let d_g = dc * i[j];
        let d_f = dc * args.c_prev.map_or(0.0, |c| c[j]);
        dpre[j] = d_i * i[j] * (1.0 - i[j]);
        dpre[hidden + j] = d_f * f[j] * (1.0 - f[j]);
        dpre[2 * hidden + j] = d_g * (1.0 - g[j] * g[j]);
        dpre[3 * hidden + j] = d_o * o[j] * (1.0 - o[j]);
        if let Some(gc_prev) = out.gc_prev.as_deref_mut() {
            gc_prev[j] += dc * f[j];
        }
    }
    matvec_t_add(args.wx, 4 * hidden, input_dim, &dpre, out.gx);
    if let (Some(h_prev), Some(gh_prev)) = (args.h_prev, out.gh_prev.as_deref_mut()) {
        matvec_t_add(args.wh, 4 * hidden, hidden, &dpre, gh_prev);
        outer_add(&dpre, h_prev, out.gwh);
    }
    outer_add(&dpre, args.x, out.gwx);
    axpy(1.0, &dpre, out.gb);
}
