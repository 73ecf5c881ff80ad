//! Named parameter storage with gradient accumulators.

use std::collections::BTreeMap;

use super::rng::SplitMix64;
use super::tensor::Tensor;
use super::NumericError;

/// Stable handle to a parameter. Indices are assigned at registration and
/// never reused, so they stay valid as new parameters are added (bootstrap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Borrowed view of one parameter.
#[derive(Debug)]
pub struct Param<'a> {
    pub value: &'a Tensor,
    pub grad: &'a Tensor,
}

/// Map from parameter path (e.g. `encoder.word_fwd.wx`) to value + gradient.
///
/// Values and gradients live in separate arrays so the backward pass can
/// read weights while accumulating into gradient buffers without copies.
/// Iteration is lexicographic by path, which fixes initialization order,
/// serialization order and digest order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    by_name: BTreeMap<String, ParamId>,
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, path: &str, value: Tensor) -> Result<ParamId, NumericError> {
        if self.by_name.contains_key(path) {
            return Err(NumericError::DuplicateParam(path.to_string()));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape().to_vec()));
        self.values.push(value);
        self.names.push(path.to_string());
        self.by_name.insert(path.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, path: &str) -> Result<ParamId, NumericError> {
        self.by_name
            .get(path)
            .copied()
            .ok_or_else(|| NumericError::UnknownParam(path.to_string()))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.by_name.contains_key(path)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    /// Reads one parameter value while mutably borrowing another's gradient
    /// buffer; values and gradients are disjoint storage.
    pub fn value_and_grad_mut(&mut self, read: ParamId, write: ParamId) -> (&Tensor, &mut Tensor) {
        (&self.values[read.0], &mut self.grads[write.0])
    }

    /// Simultaneous slots for an LSTM cell's backward pass: weight values
    /// read-only, weight and bias gradients writable.
    pub fn lstm_slots(
        &mut self,
        p: &LstmParams,
    ) -> (&Tensor, &Tensor, &mut Tensor, &mut Tensor, &mut Tensor) {
        let [gwx, gwh, gb] = self
            .grads
            .get_disjoint_mut([p.wx.0, p.wh.0, p.b.0])
            .expect("lstm parameter ids are distinct");
        (&self.values[p.wx.0], &self.values[p.wh.0], gwx, gwh, gb)
    }

    /// Reads one parameter's gradient while mutably borrowing its value
    /// (the optimizer update direction).
    pub fn grad_and_value_mut(&mut self, id: ParamId) -> (&Tensor, &mut Tensor) {
        (&self.grads[id.0], &mut self.values[id.0])
    }

    /// Writable gradients for an affine layer's weight and bias.
    pub fn affine_grads(&mut self, w: ParamId, b: ParamId) -> (&mut Tensor, &mut Tensor) {
        let [gw, gb] = self
            .grads
            .get_disjoint_mut([w.0, b.0])
            .expect("affine parameter ids are distinct");
        (gw, gb)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Lexicographic iteration over (path, param).
    pub fn iter(&self) -> impl Iterator<Item = (&str, Param<'_>)> {
        self.by_name.iter().map(move |(name, id)| {
            (
                name.as_str(),
                Param {
                    value: &self.values[id.0],
                    grad: &self.grads[id.0],
                },
            )
        })
    }

    /// All ids in lexicographic path order.
    pub fn ids(&self) -> Vec<ParamId> {
        self.by_name.values().copied().collect()
    }

    /// Ids whose path starts with `prefix`, lexicographic.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.by_name
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, id)| *id)
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Registers a tensor initialized uniform in [-scale, scale).
    pub fn register_uniform(
        &mut self,
        path: &str,
        shape: Vec<usize>,
        rng: &mut SplitMix64,
        scale: f64,
    ) -> Result<ParamId, NumericError> {
        let mut t = Tensor::zeros(shape);
        t.fill_uniform(rng, -scale, scale);
        self.register(path, t)
    }
}

/// LSTM parameter handles. Gate blocks are ordered input, forget,
/// cell-candidate, output inside every 4h-sized axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Registers `prefix.wx` (4h x d), `prefix.wh` (4h x h) and `prefix.b`
    /// (4h). Weights are uniform(-0.1, 0.1); the forget-gate bias block is
    /// set to 1.0 so cells start in a carrying regime.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut SplitMix64,
    ) -> Result<Self, NumericError> {
        let wx = store.register_uniform(
            &format!("{prefix}.wx"),
            vec![4 * hidden, input_dim],
            rng,
            0.1,
        )?;
        let wh =
            store.register_uniform(&format!("{prefix}.wh"), vec![4 * hidden, hidden], rng, 0.1)?;
        let mut bias = Tensor::zeros(vec![4 * hidden]);
        for i in hidden..2 * hidden {
            bias.data_mut()[i] = 1.0;
        }
        let b = store.register(&format!("{prefix}.b"), bias)?;
        Ok(LstmParams {
            wx,
            wh,
            b,
            input_dim,
            hidden,
        })
    }

    /// Looks up previously registered handles.
    pub fn resolve(
        store: &ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Result<Self, NumericError> {
        Ok(LstmParams {
            wx: store.id(&format!("{prefix}.wx"))?,
            wh: store.id(&format!("{prefix}.wh"))?,
            b: store.id(&format!("{prefix}.b"))?,
            input_dim,
            hidden,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_paths_rejected() {
        let mut store = ParamStore::new();
        store.register("a.b", Tensor::zeros(vec![2])).unwrap();
        assert!(store.register("a.b", Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn iteration_is_lexicographic() {
        let mut store = ParamStore::new();
        store.register("z", Tensor::zeros(vec![1])).unwrap();
        store.register("a", Tensor::zeros(vec![1])).unwrap();
        store.register("m", Tensor::zeros(vec![1])).unwrap();
        let names: Vec<&str> = store.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["a", "m", "z"]);
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(1);
        let p = LstmParams::register(&mut store, "lstm", 3, 4, &mut rng).unwrap();
        let b = store.value(p.b);
        for i in 0..16 {
            let expect_one = (4..8).contains(&i);
            assert_eq!(b.data()[i] == 1.0, expect_one, "bias index {i}");
        }
    }
}
