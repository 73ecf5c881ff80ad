//! Reverse-mode autodiff over a recorded computation tape.
//!
//! Forward calls append nodes (values computed eagerly) and return `NodeRef`
//! handles; `backward` walks the tape once in reverse and accumulates
//! gradients into the `ParamStore`. Ops are layer-grained (whole LSTM cell,
//! affine, softmax) rather than scalar-grained, which keeps tapes short and
//! the backward pass cache-friendly. Nodes can be shared: the same `NodeRef`
//! used by several consumers accumulates all their contributions.

use super::ops::{self, LstmGates};
use super::store::{LstmParams, ParamId, ParamStore};
use super::tensor::Tensor;
use super::NumericError;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef(usize);

enum Op {
    Input,
    Param(ParamId),
    Row {
        param: ParamId,
        row: usize,
    },
    Concat {
        parts: Vec<NodeRef>,
    },
    Slice {
        src: NodeRef,
        start: usize,
    },
    AddN {
        parts: Vec<NodeRef>,
    },
    Scale {
        src: NodeRef,
        c: f64,
    },
    /// Value is [h ; c], length 2*hidden; gates cached for backward.
    LstmCell {
        x: NodeRef,
        h_prev: Option<NodeRef>,
        c_prev: Option<NodeRef>,
        params: LstmParams,
        gates: LstmGates,
    },
    Affine {
        x: NodeRef,
        w: ParamId,
        b: ParamId,
    },
    Selu {
        x: NodeRef,
    },
    Softmax {
        x: NodeRef,
    },
    Dot {
        a: NodeRef,
        b: NodeRef,
    },
    /// sum_i weights[i] * items[i]; the attention context combination.
    WeightedSum {
        weights: NodeRef,
        items: Vec<NodeRef>,
    },
    /// -log softmax(z)[pick], the building block of every loss here.
    NegLogSoftmaxPick {
        z: NodeRef,
        pick: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    spent: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, r: NodeRef) -> &Tensor {
        &self.nodes[r.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeRef {
        self.nodes.push(Node { value, op });
        NodeRef(self.nodes.len() - 1)
    }

    fn expect_len(&self, r: NodeRef, len: usize, context: &str) -> Result<(), NumericError> {
        let got = self.nodes[r.0].value.numel();
        if got != len {
            return Err(NumericError::ShapeMismatch {
                context: context.into(),
                expected: format!("{len}"),
                got: format!("{got}"),
            });
        }
        Ok(())
    }

    pub fn input(&mut self, value: Tensor) -> NodeRef {
        self.push(value, Op::Input)
    }

    pub fn scalar_input(&mut self, x: f64) -> NodeRef {
        self.push(Tensor::scalar(x), Op::Input)
    }

    /// Leaf bound to a whole parameter tensor (used for small vectors such
    /// as domain embeddings; matrices enter through dedicated ops instead).
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeRef {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// One row of a 2-d parameter (embedding lookup).
    pub fn row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> NodeRef {
        let value = Tensor::vector(store.value(id).row(row).to_vec());
        self.push(value, Op::Row { param: id, row })
    }

    pub fn concat(&mut self, parts: &[NodeRef]) -> Result<NodeRef, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::EmptyInput {
                context: "concat".into(),
            });
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        Ok(self.push(
            Tensor::vector(data),
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn slice(&mut self, src: NodeRef, start: usize, len: usize) -> Result<NodeRef, NumericError> {
        let total = self.nodes[src.0].value.numel();
        if start + len > total {
            return Err(NumericError::ShapeMismatch {
                context: "slice".into(),
                expected: format!("start+len <= {total}"),
                got: format!("{start}+{len}"),
            });
        }
        let value = Tensor::vector(self.nodes[src.0].value.data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice { src, start }))
    }

    /// Elementwise sum of same-shape nodes.
    pub fn add_n(&mut self, parts: &[NodeRef]) -> Result<NodeRef, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::EmptyInput {
                context: "add_n".into(),
            });
        }
        let len = self.nodes[parts[0].0].value.numel();
        for &p in parts {
            self.expect_len(p, len, "add_n")?;
        }
        let mut data = vec![0.0; len];
        for &p in parts {
            for (o, &v) in data.iter_mut().zip(self.nodes[p.0].value.data()) {
                *o += v;
            }
        }
        Ok(self.push(
            Tensor::vector(data),
            Op::AddN {
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn scale(&mut self, src: NodeRef, c: f64) -> NodeRef {
        let data: Vec<f64> = self.nodes[src.0].value.data().iter().map(|&v| c * v).collect();
        self.push(Tensor::vector(data), Op::Scale { src, c })
    }

    /// Records one LSTM step; returns (h, c) as separate nodes.
    pub fn lstm_cell(
        &mut self,
        store: &ParamStore,
        params: &LstmParams,
        x: NodeRef,
        h_prev: Option<NodeRef>,
        c_prev: Option<NodeRef>,
    ) -> Result<(NodeRef, NodeRef), NumericError> {
        let (d, h) = (params.input_dim, params.hidden);
        self.expect_len(x, d, "lstm_cell input")?;
        if let Some(hp) = h_prev {
            self.expect_len(hp, h, "lstm_cell h_prev")?;
        }
        if let Some(cp) = c_prev {
            self.expect_len(cp, h, "lstm_cell c_prev")?;
        }
        let mut hc = vec![0.0; 2 * h];
        let (h_out, c_out) = hc.split_at_mut(h);
        let gates = {
            let xv = self.nodes[x.0].value.data();
            let hv = h_prev.map(|r| self.nodes[r.0].value.data());
            let cv = c_prev.map(|r| self.nodes[r.0].value.data());
            ops::lstm_cell_forward(
                xv,
                hv,
                cv,
                store.value(params.wx).data(),
                store.value(params.wh).data(),
                store.value(params.b).data(),
                d,
                h,
                h_out,
                c_out,
            )
        };
        let cell = self.push(
            Tensor::vector(hc),
            Op::LstmCell {
                x,
                h_prev,
                c_prev,
                params: *params,
                gates,
            },
        );
        let h_ref = self.slice(cell, 0, h)?;
        let c_ref = self.slice(cell, h, h)?;
        Ok((h_ref, c_ref))
    }

    /// y = W x + b.
    pub fn affine(
        &mut self,
        store: &ParamStore,
        w: ParamId,
        b: ParamId,
        x: NodeRef,
    ) -> Result<NodeRef, NumericError> {
        let wt = store.value(w);
        let (rows, cols) = (wt.rows(), wt.cols());
        self.expect_len(x, cols, "affine input")?;
        if store.value(b).numel() != rows {
            return Err(NumericError::ShapeMismatch {
                context: "affine bias".into(),
                expected: format!("{rows}"),
                got: format!("{}", store.value(b).numel()),
            });
        }
        let mut out = store.value(b).data().to_vec();
        ops::matvec_add(wt.data(), rows, cols, self.nodes[x.0].value.data(), &mut out);
        Ok(self.push(Tensor::vector(out), Op::Affine { x, w, b }))
    }

    pub fn selu(&mut self, x: NodeRef) -> NodeRef {
        let mut out = vec![0.0; self.nodes[x.0].value.numel()];
        ops::selu_slice(self.nodes[x.0].value.data(), &mut out);
        self.push(Tensor::vector(out), Op::Selu { x })
    }

    pub fn softmax(&mut self, x: NodeRef) -> Result<NodeRef, NumericError> {
        let mut out = vec![0.0; self.nodes[x.0].value.numel()];
        ops::softmax_slice(self.nodes[x.0].value.data(), &mut out)?;
        Ok(self.push(Tensor::vector(out), Op::Softmax { x }))
    }

    pub fn dot(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef, NumericError> {
        let len = self.nodes[a.0].value.numel();
        self.expect_len(b, len, "dot")?;
        let v = ops::dot(self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        Ok(self.push(Tensor::scalar(v), Op::Dot { a, b }))
    }

    /// sum_i weights[i] * items[i], where each item has the same length.
    pub fn weighted_sum(
        &mut self,
        weights: NodeRef,
        items: &[NodeRef],
    ) -> Result<NodeRef, NumericError> {
        self.expect_len(weights, items.len(), "weighted_sum weights")?;
        if items.is_empty() {
            return Err(NumericError::EmptyInput {
                context: "weighted_sum".into(),
            });
        }
        let m = self.nodes[items[0].0].value.numel();
        let mut out = vec![0.0; m];
        for (i, &item) in items.iter().enumerate() {
            self.expect_len(item, m, "weighted_sum item")?;
            let w = self.nodes[weights.0].value.data()[i];
            ops::axpy(w, self.nodes[item.0].value.data(), &mut out);
        }
        Ok(self.push(
            Tensor::vector(out),
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        ))
    }

    /// Scalar loss -log softmax(z)[pick].
    pub fn neg_log_softmax_pick(
        &mut self,
        z: NodeRef,
        pick: usize,
    ) -> Result<NodeRef, NumericError> {
        let zv = self.nodes[z.0].value.data();
        if pick >= zv.len() {
            return Err(NumericError::ShapeMismatch {
                context: "neg_log_softmax_pick".into(),
                expected: format!("pick < {}", zv.len()),
                got: format!("{pick}"),
            });
        }
        let loss = ops::log_sum_exp(zv) - zv[pick];
        Ok(self.push(Tensor::scalar(loss), Op::NegLogSoftmaxPick { z, pick }))
    }

    /// Walks the tape in reverse from `loss`, accumulating d(loss)/d(param)
    /// into each parameter's gradient buffer. Parameters not reachable from
    /// `loss` are left untouched. Consumable: a second call errors.
    pub fn backward(&mut self, loss: NodeRef, store: &mut ParamStore) -> Result<(), NumericError> {
        if self.spent {
            return Err(NumericError::BackwardReplay);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NumericError::NotScalar {
                context: "backward loss".into(),
            });
        }
        self.nodes[loss.0].value.check_finite("backward loss")?;
        self.spent = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    ops::axpy(1.0, &g, store.grad_mut(*p).data_mut());
                }
                Op::Row { param, row } => {
                    ops::axpy(1.0, &g, store.grad_mut(*param).row_mut(*row));
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].value.numel();
                        let slot = ensure(&mut grads, p, len);
                        ops::axpy(1.0, &g[off..off + len], slot);
                        off += len;
                    }
                }
                Op::Slice { src, start } => {
                    let len = self.nodes[src.0].value.numel();
                    let slot = ensure(&mut grads, *src, len);
                    ops::axpy(1.0, &g, &mut slot[*start..*start + g.len()]);
                }
                Op::AddN { parts } => {
                    for &p in parts {
                        let slot = ensure(&mut grads, p, g.len());
                        ops::axpy(1.0, &g, slot);
                    }
                }
                Op::Scale { src, c } => {
                    let slot = ensure(&mut grads, *src, g.len());
                    ops::axpy(*c, &g, slot);
                }
                Op::LstmCell {
                    x,
                    h_prev,
                    c_prev,
                    params,
                    gates,
                } => {
                    let (d, h) = (params.input_dim, params.hidden);
                    // Small carries stay local; weight/bias gradients
                    // accumulate straight into the store.
                    let mut gx = vec![0.0; d];
                    let mut gh_prev = h_prev.map(|_| vec![0.0; h]);
                    let mut gc_prev = c_prev.map(|_| vec![0.0; h]);
                    {
                        let (wx_t, wh_t, gwx, gwh, gb) = store.lstm_slots(params);
                        let args = ops::LstmBackwardArgs {
                            x: self.nodes[x.0].value.data(),
                            h_prev: h_prev.map(|r| self.nodes[r.0].value.data()),
                            c_prev: c_prev.map(|r| self.nodes[r.0].value.data()),
                            c_new: &node.value.data()[h..2 * h],
                            gates,
                            wx: wx_t.data(),
                            wh: wh_t.data(),
                            gh: &g[0..h],
                            gc: &g[h..2 * h],
                        };
                        let mut out = ops::LstmBackwardOut {
                            gx: &mut gx,
                            gh_prev: gh_prev.as_deref_mut(),
                            gc_prev: gc_prev.as_deref_mut(),
                            gwx: gwx.data_mut(),
                            gwh: gwh.data_mut(),
                            gb: gb.data_mut(),
                        };
                        ops::lstm_cell_backward(&args, &mut out, d, h);
                    }
                    ops::axpy(1.0, &gx, ensure(&mut grads, *x, d));
                    if let (Some(hp), Some(ghp)) = (h_prev, &gh_prev) {
                        ops::axpy(1.0, ghp, ensure(&mut grads, *hp, h));
                    }
                    if let (Some(cp), Some(gcp)) = (c_prev, &gc_prev) {
                        ops::axpy(1.0, gcp, ensure(&mut grads, *cp, h));
                    }
                }
                Op::Affine { x, w, b } => {
                    let xv = self.nodes[x.0].value.data();
                    {
                        let (gw, gb) = store.affine_grads(*w, *b);
                        ops::outer_add(&g, xv, gw.data_mut());
                        ops::axpy(1.0, &g, gb.data_mut());
                    }
                    let wt = store.value(*w);
                    ops::matvec_t_add(
                        wt.data(),
                        wt.rows(),
                        wt.cols(),
                        &g,
                        ensure(&mut grads, *x, wt.cols()),
                    );
                }
                Op::Selu { x } => {
                    let xv = self.nodes[x.0].value.data();
                    let slot = ensure(&mut grads, *x, xv.len());
                    for ((o, &gi), &xi) in slot.iter_mut().zip(&g).zip(xv) {
                        *o += gi * ops::selu_grad_scalar(xi);
                    }
                }
                Op::Softmax { x } => {
                    let s = node.value.data();
                    let inner = ops::dot(s, &g);
                    let slot = ensure(&mut grads, *x, s.len());
                    for ((o, &si), &gi) in slot.iter_mut().zip(s).zip(&g) {
                        *o += si * (gi - inner);
                    }
                }
                Op::Dot { a, b } => {
                    let gs = g[0];
                    let len = self.nodes[a.0].value.numel();
                    ops::axpy(gs, self.nodes[b.0].value.data(), ensure(&mut grads, *a, len));
                    ops::axpy(gs, self.nodes[a.0].value.data(), ensure(&mut grads, *b, len));
                }
                Op::WeightedSum { weights, items } => {
                    let wv = self.nodes[weights.0].value.data();
                    for (i, &item) in items.iter().enumerate() {
                        let iv = self.nodes[item.0].value.data();
                        let contribution = ops::dot(&g, iv);
                        ensure(&mut grads, *weights, wv.len())[i] += contribution;
                        ops::axpy(wv[i], &g, ensure(&mut grads, item, g.len()));
                    }
                }
                Op::NegLogSoftmaxPick { z, pick } => {
                    let zv = self.nodes[z.0].value.data();
                    let mut soft = vec![0.0; zv.len()];
                    ops::softmax_slice(zv, &mut soft).expect("non-empty by construction");
                    let gs = g[0];
                    let slot = ensure(&mut grads, *z, zv.len());
                    for (j, (o, &sj)) in slot.iter_mut().zip(&soft).enumerate() {
                        let indicator = if j == *pick { 1.0 } else { 0.0 };
                        *o += gs * (sj - indicator);
                    }
                }
            }
        }
        Ok(())
    }
}

fn ensure<'a>(grads: &'a mut [Option<Vec<f64>>], r: NodeRef, len: usize) -> &'a mut Vec<f64> {
    grads[r.0].get_or_insert_with(|| vec![0.0; len])
}
