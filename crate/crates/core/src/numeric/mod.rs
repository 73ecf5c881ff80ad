//! Dense float64 linear algebra, activations, a reverse-mode gradient tape
//! and the Adam optimizer — the numeric substrate for the whole model.

pub mod adam;
pub mod check;
pub mod linalg;
pub mod ops;
pub mod rng;
pub mod store;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use rng::SplitMix64;
pub use store::{LstmParams, ParamId, ParamStore};
pub use tape::{NodeRef, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
    #[error("empty input in {context}")]
    EmptyInput { context: String },
    #[error("backward called twice on the same tape")]
    BackwardReplay,
    #[error("{context} must be a scalar")]
    NotScalar { context: String },
    #[error("singular system: {context}")]
    SingularSystem { context: String },
    #[error("unknown parameter path {0}")]
    UnknownParam(String),
    #[error("duplicate parameter path {0}")]
    DuplicateParam(String),
}

/// Standard LSTM step as a checked tensor-level operation: sigmoid gates,
/// tanh candidate and output nonlinearities, gate order input/forget/
/// candidate/output.
pub fn lstm_cell(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    params: &LstmParams,
    store: &ParamStore,
) -> Result<(Tensor, Tensor), NumericError> {
    let (d, h) = (params.input_dim, params.hidden);
    if x.numel() != d || h_prev.numel() != h || c_prev.numel() != h {
        return Err(NumericError::ShapeMismatch {
            context: "lstm_cell".into(),
            expected: format!("x[{d}], h[{h}], c[{h}]"),
            got: format!("x[{}], h[{}], c[{}]", x.numel(), h_prev.numel(), c_prev.numel()),
        });
    }
    x.check_finite("lstm_cell x")?;
    h_prev.check_finite("lstm_cell h_prev")?;
    c_prev.check_finite("lstm_cell c_prev")?;
    let mut h_out = vec![0.0; h];
    let mut c_out = vec![0.0; h];
    ops::lstm_cell_forward(
        x.data(),
        Some(h_prev.data()),
        Some(c_prev.data()),
        store.value(params.wx).data(),
        store.value(params.wh).data(),
        store.value(params.b).data(),
        d,
        h,
        &mut h_out,
        &mut c_out,
    );
    Ok((Tensor::vector(h_out), Tensor::vector(c_out)))
}

/// Elementwise SeLU.
pub fn selu(x: &Tensor) -> Result<Tensor, NumericError> {
    x.check_finite("selu input")?;
    let mut out = vec![0.0; x.numel()];
    ops::selu_slice(x.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Stable softmax onto the probability simplex.
pub fn softmax(x: &Tensor) -> Result<Tensor, NumericError> {
    let mut out = vec![0.0; x.numel()];
    ops::softmax_slice(x.data(), &mut out)?;
    Ok(Tensor::vector(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent scalar-loop reference for one LSTM step: indexes raw
    /// weight layouts directly instead of going through the kernels.
    fn lstm_reference(
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        wx: &[f64],
        wh: &[f64],
        b: &[f64],
        d: usize,
        h: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |gate: usize, j: usize| {
            let row = gate * h + j;
            let mut acc = b[row];
            for (c, &xc) in x.iter().enumerate().take(d) {
                acc += wx[row * d + c] * xc;
            }
            for (c, &hc) in h_prev.iter().enumerate().take(h) {
                acc += wh[row * h + c] * hc;
            }
            acc
        };
        let mut h_out = vec![0.0; h];
        let mut c_out = vec![0.0; h];
        for j in 0..h {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c_out[j] = f * c_prev[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn lstm_cell_matches_scalar_reference() {
        let (d, h) = (3, 3);
        let mut rng = SplitMix64::new(7);
        let mut store = ParamStore::new();
        let params = LstmParams::register(&mut store, "ref", d, h, &mut rng).unwrap();
        let x = Tensor::vector(vec![1.0; d]);
        let h_prev = Tensor::vector((0..h).map(|i| 0.1 * i as f64).collect());
        let c_prev = Tensor::vector((0..h).map(|i| -0.2 * i as f64).collect());
        let (h_got, c_got) = lstm_cell(&x, &h_prev, &c_prev, &params, &store).unwrap();
        let (h_want, c_want) = lstm_reference(
            x.data(),
            h_prev.data(),
            c_prev.data(),
            store.value(params.wx).data(),
            store.value(params.wh).data(),
            store.value(params.b).data(),
            d,
            h,
        );
        for j in 0..h {
            assert!((h_got.data()[j] - h_want[j]).abs() < 1e-12);
            assert!((c_got.data()[j] - c_want[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_cell_rejects_bad_shapes_and_nan() {
        let (d, h) = (2, 2);
        let mut rng = SplitMix64::new(1);
        let mut store = ParamStore::new();
        let params = LstmParams::register(&mut store, "l", d, h, &mut rng).unwrap();
        let bad = lstm_cell(
            &Tensor::vector(vec![0.0; 3]),
            &Tensor::zeros(vec![h]),
            &Tensor::zeros(vec![h]),
            &params,
            &store,
        );
        assert!(matches!(bad, Err(NumericError::ShapeMismatch { .. })));
        let nan = lstm_cell(
            &Tensor::vector(vec![f64::NAN, 0.0]),
            &Tensor::zeros(vec![h]),
            &Tensor::zeros(vec![h]),
            &params,
            &store,
        );
        assert!(matches!(nan, Err(NumericError::NonFinite { .. })));
    }
}
