//! LSTM cell and (bi)directional sequence runners with backpropagation
//! through time.
//!
//! Gates use the common formulation without peepholes:
//!
//! ```text
//! i = σ(W_i [x; s; h] + b_i)      f = σ(W_f [x; s; h] + b_f)
//! g = tanh(W_g [x; s; h] + b_g)   o = σ(W_o [x; s; h] + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! `s` is an optional static input that is identical at every step (the
//! response encoding in the inference network). Its contribution is folded
//! into the bias once per sequence instead of being recomputed per step.

use super::linalg::{matvec_cols_acc, matvec_t_cols_acc, outer_cols_acc};
use super::{check_dim, sigmoid, NnError, ParamStore, Real, RngStream, Seq, Slot, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w: Slot,
    pub b: Slot,
    /// Width of the per-step input.
    pub input: usize,
    /// Width of the static input (0 when unused).
    pub cond: usize,
    pub hidden: usize,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace<F> {
    /// Hidden state after each step (`T × H`).
    pub h: Seq<F>,
    /// Cell state after each step (`T × H`).
    pub c: Seq<F>,
    /// Activated gates `[i, f, g, o]` per step (`T × 4H`).
    gates: Seq<F>,
    h0: Vec<F>,
    c0: Vec<F>,
}

/// Running state for step-by-step evaluation.
#[derive(Debug, Clone)]
pub struct LstmState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
    bias: Vec<F>,
    gates: Vec<F>,
}

#[inline]
fn gate_update<F: Real>(z: &mut [F], hidden: usize, c_prev: &[F], h: &mut [F], c: &mut [F]) {
    for k in 0..hidden {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hidden + k]);
        let g = z[2 * hidden + k].tanh();
        let o = sigmoid(z[3 * hidden + k]);
        z[k] = i;
        z[hidden + k] = f;
        z[2 * hidden + k] = g;
        z[3 * hidden + k] = o;
        let cn = f * c_prev[k] + i * g;
        c[k] = cn;
        h[k] = o * cn.tanh();
    }
}

impl LstmCell {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        cond: usize,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let w = store.add_uniform(
            format!("{name}.w"),
            vec![4 * hidden, input + cond + hidden],
            bound,
            rng,
        );
        let b = store.add_uniform(format!("{name}.b"), vec![4 * hidden], bound, rng);
        Self {
            w,
            b,
            input,
            cond,
            hidden,
        }
    }

    #[inline]
    fn stride(&self) -> usize {
        self.input + self.cond + self.hidden
    }

    fn effective_bias<F: Real>(&self, params: &[F], cond: Option<&[F]>) -> Result<Vec<F>, NnError> {
        let mut bias = self.b.of(params).to_vec();
        match cond {
            Some(s) => {
                check_dim("lstm static input", self.cond, s.len())?;
                if self.cond > 0 {
                    matvec_cols_acc(self.w.of(params), self.stride(), self.input, s, &mut bias);
                }
            }
            None => check_dim("lstm static input", self.cond, 0)?,
        }
        Ok(bias)
    }

    pub fn start<F: Real>(&self, params: &[F], cond: Option<&[F]>) -> Result<LstmState<F>, NnError> {
        Ok(LstmState {
            h: vec![F::zero(); self.hidden],
            c: vec![F::zero(); self.hidden],
            bias: self.effective_bias(params, cond)?,
            gates: vec![F::zero(); 4 * self.hidden],
        })
    }

    /// Advances `state` by one input vector.
    pub fn step<F: Real>(&self, params: &[F], state: &mut LstmState<F>, x: &[F]) -> Result<(), NnError> {
        check_dim("lstm input", self.input, x.len())?;
        let w = self.w.of(params);
        let stride = self.stride();
        state.gates.copy_from_slice(&state.bias);
        matvec_cols_acc(w, stride, 0, x, &mut state.gates);
        matvec_cols_acc(w, stride, self.input + self.cond, &state.h, &mut state.gates);
        let c_prev = state.c.clone();
        gate_update(&mut state.gates, self.hidden, &c_prev, &mut state.h, &mut state.c);
        Ok(())
    }

    /// Runs the cell over `xs` starting from zero state.
    pub fn run<F: Real>(&self, params: &[F], xs: &Seq<F>, cond: Option<&[F]>) -> Result<LstmTrace<F>, NnError> {
        let zeros = vec![F::zero(); self.hidden];
        self.run_from(params, xs, cond, &zeros, &zeros)
    }

    pub fn run_from<F: Real>(
        &self,
        params: &[F],
        xs: &Seq<F>,
        cond: Option<&[F]>,
        h0: &[F],
        c0: &[F],
    ) -> Result<LstmTrace<F>, NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptySequence("lstm"));
        }
        check_dim("lstm input", self.input, xs.dim())?;
        check_dim("lstm initial hidden", self.hidden, h0.len())?;
        check_dim("lstm initial cell", self.hidden, c0.len())?;
        let hsz = self.hidden;
        let t_len = xs.len();
        let bias = self.effective_bias(params, cond)?;
        let w = self.w.of(params);
        let stride = self.stride();
        let mut h = Seq::zeros(t_len, hsz);
        let mut c = Seq::zeros(t_len, hsz);
        let mut gates = Seq::zeros(t_len, 4 * hsz);
        let mut h_prev = h0.to_vec();
        let mut c_prev = c0.to_vec();
        let mut h_new = vec![F::zero(); hsz];
        let mut c_new = vec![F::zero(); hsz];
        for t in 0..t_len {
            let z = gates.row_mut(t);
            z.copy_from_slice(&bias);
            matvec_cols_acc(w, stride, 0, xs.row(t), z);
            matvec_cols_acc(w, stride, self.input + self.cond, &h_prev, z);
            gate_update(z, hsz, &c_prev, &mut h_new, &mut c_new);
            h.row_mut(t).copy_from_slice(&h_new);
            c.row_mut(t).copy_from_slice(&c_new);
            std::mem::swap(&mut h_prev, &mut h_new);
            std::mem::swap(&mut c_prev, &mut c_new);
        }
        Ok(LstmTrace {
            h,
            c,
            gates,
            h0: h0.to_vec(),
            c0: c0.to_vec(),
        })
    }

    /// Backpropagation through time. `dh_out` holds the loss gradient with
    /// respect to every emitted hidden state. Parameter gradients are
    /// accumulated into `grads`; input gradients into `dxs` / `dcond` when
    /// given. Returns the gradients with respect to the initial state.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        xs: &Seq<F>,
        cond: Option<&[F]>,
        trace: &LstmTrace<F>,
        dh_out: &Seq<F>,
        mut dxs: Option<&mut Seq<F>>,
        dcond: Option<&mut [F]>,
    ) -> (Vec<F>, Vec<F>) {
        let hsz = self.hidden;
        let stride = self.stride();
        let hcol = self.input + self.cond;
        let w = self.w.of(params);
        let t_len = xs.len();
        let mut dh_next = vec![F::zero(); hsz];
        let mut dc_next = vec![F::zero(); hsz];
        let mut dz = vec![F::zero(); 4 * hsz];
        let mut dz_sum = vec![F::zero(); 4 * hsz];
        let one = F::one();
        for t in (0..t_len).rev() {
            let gates = trace.gates.row(t);
            let c_t = trace.c.row(t);
            let c_prev = if t == 0 { &trace.c0[..] } else { trace.c.row(t - 1) };
            let dh = dh_out.row(t);
            for k in 0..hsz {
                let i = gates[k];
                let f = gates[hsz + k];
                let g = gates[2 * hsz + k];
                let o = gates[3 * hsz + k];
                let tc = c_t[k].tanh();
                let dht = dh[k] + dh_next[k];
                let dct = dc_next[k] + dht * o * (one - tc * tc);
                dz[k] = dct * g * i * (one - i);
                dz[hsz + k] = dct * c_prev[k] * f * (one - f);
                dz[2 * hsz + k] = dct * i * (one - g * g);
                dz[3 * hsz + k] = dht * tc * o * (one - o);
                dc_next[k] = dct * f;
            }
            let h_prev = if t == 0 { &trace.h0[..] } else { trace.h.row(t - 1) };
            {
                let gw = self.w.of_mut(grads);
                outer_cols_acc(gw, stride, 0, &dz, xs.row(t));
                outer_cols_acc(gw, stride, hcol, &dz, h_prev);
            }
            for (gb, d) in self.b.of_mut(grads).iter_mut().zip(&dz) {
                *gb += *d;
            }
            for (s, d) in dz_sum.iter_mut().zip(&dz) {
                *s += *d;
            }
            if let Some(dxs) = dxs.as_deref_mut() {
                matvec_t_cols_acc(w, stride, 0, &dz, dxs.row_mut(t));
            }
            dh_next.iter_mut().for_each(|v| *v = F::zero());
            matvec_t_cols_acc(w, stride, hcol, &dz, &mut dh_next);
        }
        if self.cond > 0 {
            if let Some(s) = cond {
                outer_cols_acc(self.w.of_mut(grads), stride, self.input, &dz_sum, s);
                if let Some(ds) = dcond {
                    matvec_t_cols_acc(w, stride, self.input, &dz_sum, ds);
                }
            }
        }
        (dh_next, dc_next)
    }
}

/// Bidirectional LSTM: output `t` is `[forward h_t; backward h_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace<F> {
    pub out: Seq<F>,
    fwd: LstmTrace<F>,
    bwd: LstmTrace<F>,
    reversed: Seq<F>,
}

impl BiLstm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let fwd = LstmCell::new(store, &format!("{name}.fwd"), input, 0, hidden, rng);
        let bwd = LstmCell::new(store, &format!("{name}.bwd"), input, 0, hidden, rng);
        Self { fwd, bwd }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward<F: Real>(&self, params: &[F], xs: &Seq<F>) -> Result<BiLstmTrace<F>, NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptySequence("bilstm"));
        }
        let reversed = xs.reversed();
        let fwd = self.fwd.run(params, xs, None)?;
        let bwd = self.bwd.run(params, &reversed, None)?;
        let t_len = xs.len();
        let hsz = self.hidden();
        let mut out = Seq::zeros(t_len, 2 * hsz);
        for t in 0..t_len {
            let row = out.row_mut(t);
            row[..hsz].copy_from_slice(fwd.h.row(t));
            row[hsz..].copy_from_slice(bwd.h.row(t_len - 1 - t));
        }
        Ok(BiLstmTrace {
            out,
            fwd,
            bwd,
            reversed,
        })
    }

    /// Accumulates parameter gradients and returns the input gradients.
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        xs: &Seq<F>,
        trace: &BiLstmTrace<F>,
        d_out: &Seq<F>,
    ) -> Seq<F> {
        let t_len = xs.len();
        let hsz = self.hidden();
        let mut dh_f = Seq::zeros(t_len, hsz);
        let mut dh_b = Seq::zeros(t_len, hsz);
        for t in 0..t_len {
            let d = d_out.row(t);
            dh_f.row_mut(t).copy_from_slice(&d[..hsz]);
            dh_b.row_mut(t_len - 1 - t).copy_from_slice(&d[hsz..]);
        }
        let mut dxs = Seq::zeros(t_len, xs.dim());
        self.fwd
            .backward(params, grads, xs, None, &trace.fwd, &dh_f, Some(&mut dxs), None);
        let mut dxs_rev = Seq::zeros(t_len, xs.dim());
        self.bwd.backward(
            params,
            grads,
            &trace.reversed,
            None,
            &trace.bwd,
            &dh_b,
            Some(&mut dxs_rev),
            None,
        );
        for t in 0..t_len {
            let src = dxs_rev.row(t_len - 1 - t).to_vec();
            for (a, b) in dxs.row_mut(t).iter_mut().zip(src) {
                *a += b;
            }
        }
        dxs
    }
}

fn tensor_dims<F: Real>(w: &Tensor<F>) -> Result<(usize, usize), NnError> {
    match w.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(NnError::Shape {
            shape: s.to_vec(),
            len: w.len(),
        }),
    }
}

/// One LSTM step on explicit tensors: `w` is `4H × (I + H)`, `b` is `4H`.
pub fn lstm_step<F: Real>(
    x: &[F],
    h_prev: &[F],
    c_prev: &[F],
    w: &Tensor<F>,
    b: &Tensor<F>,
) -> Result<(Vec<F>, Vec<F>), NnError> {
    let (rows, cols) = tensor_dims(w)?;
    if rows % 4 != 0 {
        return Err(NnError::Shape {
            shape: w.shape().to_vec(),
            len: w.len(),
        });
    }
    let hidden = rows / 4;
    check_dim("lstm hidden", hidden, h_prev.len())?;
    check_dim("lstm cell", hidden, c_prev.len())?;
    check_dim("lstm input", cols.saturating_sub(hidden), x.len())?;
    check_dim("lstm bias", rows, b.len())?;
    let mut z = b.data().to_vec();
    matvec_cols_acc(w.data(), cols, 0, x, &mut z);
    matvec_cols_acc(w.data(), cols, x.len(), h_prev, &mut z);
    let mut h = vec![F::zero(); hidden];
    let mut c = vec![F::zero(); hidden];
    gate_update(&mut z, hidden, c_prev, &mut h, &mut c);
    Ok((h, c))
}

/// Runs a bidirectional layer over a list of vectors.
pub fn bilstm_sequence<F: Real>(seq: &[Vec<F>], layer: &BiLstm, params: &[F]) -> Result<Vec<Vec<F>>, NnError> {
    if seq.is_empty() {
        return Err(NnError::EmptySequence("bilstm"));
    }
    let xs = Seq::from_rows(layer.fwd.input, seq)?;
    let trace = layer.forward(params, &xs)?;
    Ok((0..trace.out.len()).map(|t| trace.out.row(t).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Gate equations evaluated one scalar at a time.
    fn scalar_reference(x: &[f64], h: &[f64], c: &[f64], w: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hs = h.len();
        let cols = x.len() + hs;
        let pre = |row: usize| -> f64 {
            let mut s = b[row];
            for j in 0..x.len() {
                s += w[row * cols + j] * x[j];
            }
            for j in 0..hs {
                s += w[row * cols + x.len() + j] * h[j];
            }
            s
        };
        let mut h_out = vec![0.0; hs];
        let mut c_out = vec![0.0; hs];
        for k in 0..hs {
            let i = sig(pre(k));
            let f = sig(pre(hs + k));
            let g = pre(2 * hs + k).tanh();
            let o = sig(pre(3 * hs + k));
            c_out[k] = f * c[k] + i * g;
            h_out[k] = o * c_out[k].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let w = Tensor::<f64>::zeros(vec![8, 5]);
        let b = Tensor::zeros(vec![8]);
        let (h, c) = lstm_step(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &w, &b).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn saturated_gates_preserve_cell() {
        let hs = 3;
        let w = Tensor::<f64>::zeros(vec![4 * hs, 2 + hs]);
        let mut b = vec![0.0; 4 * hs];
        for k in 0..hs {
            b[k] = -20.0; // input gate closed
            b[hs + k] = 20.0; // forget gate open
        }
        let b = Tensor::new(vec![4 * hs], b).unwrap();
        let c_prev = [0.7, -1.3, 0.2];
        let (_, c) = lstm_step(&[0.4, 0.9], &[0.1, 0.2, 0.3], &c_prev, &w, &b).unwrap();
        for (a, e) in c.iter().zip(c_prev) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn random_step_matches_scalar_reference() {
        let mut rng = RngStream::new(11, 0);
        let (d, hs) = (3, 3);
        let w: Vec<f64> = (0..4 * hs * (d + hs)).map(|_| rng.normal() * 0.5).collect();
        let b: Vec<f64> = (0..4 * hs).map(|_| rng.normal() * 0.5).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let h: Vec<f64> = (0..hs).map(|_| rng.normal()).collect();
        let c: Vec<f64> = (0..hs).map(|_| rng.normal()).collect();
        let (ho, co) = lstm_step(
            &x,
            &h,
            &c,
            &Tensor::new(vec![4 * hs, d + hs], w.clone()).unwrap(),
            &Tensor::new(vec![4 * hs], b.clone()).unwrap(),
        )
        .unwrap();
        let (he, ce) = scalar_reference(&x, &h, &c, &w, &b);
        for k in 0..hs {
            assert!((ho[k] - he[k]).abs() < 1e-12);
            assert!((co[k] - ce[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_rejects_bad_dimensions() {
        let w = Tensor::<f64>::zeros(vec![8, 5]);
        let b = Tensor::zeros(vec![8]);
        assert!(lstm_step(&[1.0, 2.0], &[0.0; 2], &[0.0; 2], &w, &b).is_err());
        assert!(lstm_step(&[1.0, 2.0, 3.0], &[0.0; 3], &[0.0; 2], &w, &b).is_err());
    }

    fn layer(input: usize, hidden: usize, seed: u64) -> (BiLstm, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(seed, 0);
        let l = BiLstm::new(&mut store, "bi", input, hidden, &mut rng);
        (l, store)
    }

    fn random_seq(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 1);
        (0..len).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect()
    }

    #[test]
    fn bilstm_single_element() {
        let (l, store) = layer(2, 3, 1);
        let x = random_seq(1, 2, 2);
        let out = bilstm_sequence(&x, &l, store.values()).unwrap();
        let p = store.values();
        let wf = Tensor::new(vec![12, 5], l.fwd.w.of(p).to_vec()).unwrap();
        let bf = Tensor::new(vec![12], l.fwd.b.of(p).to_vec()).unwrap();
        let wb = Tensor::new(vec![12, 5], l.bwd.w.of(p).to_vec()).unwrap();
        let bb = Tensor::new(vec![12], l.bwd.b.of(p).to_vec()).unwrap();
        let (hf, _) = lstm_step(&x[0], &[0.0; 3], &[0.0; 3], &wf, &bf).unwrap();
        let (hb, _) = lstm_step(&x[0], &[0.0; 3], &[0.0; 3], &wb, &bb).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(&out[0][..3], &hf[..]);
        assert_eq!(&out[0][3..], &hb[..]);
    }

    #[test]
    fn bilstm_equals_two_unidirectional_runs() {
        let (l, store) = layer(3, 4, 3);
        let x = random_seq(4, 3, 4);
        let out = bilstm_sequence(&x, &l, store.values()).unwrap();
        let p = store.values();
        let run = |cell: &LstmCell, seq: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let w = Tensor::new(vec![16, 7], cell.w.of(p).to_vec()).unwrap();
            let b = Tensor::new(vec![16], cell.b.of(p).to_vec()).unwrap();
            let mut h = vec![0.0; 4];
            let mut c = vec![0.0; 4];
            seq.iter()
                .map(|xt| {
                    let (hn, cn) = lstm_step(xt, &h, &c, &w, &b).unwrap();
                    h = hn.clone();
                    c = cn;
                    hn
                })
                .collect()
        };
        let fwd = run(&l.fwd, &x);
        let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let bwd = run(&l.bwd, &rev);
        for t in 0..4 {
            for k in 0..4 {
                assert!((out[t][k] - fwd[t][k]).abs() < 1e-12);
                assert!((out[t][4 + k] - bwd[3 - t][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reversal_swaps_directions() {
        let (l, store) = layer(2, 3, 5);
        // Same weights in both directions makes the symmetry exact.
        let mut store = store;
        let fw = l.fwd.w.of(store.values()).to_vec();
        let fb = l.fwd.b.of(store.values()).to_vec();
        l.bwd.w.of_mut(store.values_mut()).copy_from_slice(&fw);
        l.bwd.b.of_mut(store.values_mut()).copy_from_slice(&fb);
        let x = random_seq(5, 2, 6);
        let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let a = bilstm_sequence(&x, &l, store.values()).unwrap();
        let b = bilstm_sequence(&rev, &l, store.values()).unwrap();
        for t in 0..5 {
            assert_eq!(&a[t][3..], &b[4 - t][..3]);
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let (l, store) = layer(2, 3, 7);
        let empty: Vec<Vec<f64>> = vec![];
        assert_eq!(
            bilstm_sequence(&empty, &l, store.values()),
            Err(NnError::EmptySequence("bilstm"))
        );
    }

    #[test]
    fn output_length_matches_input() {
        let (l, store) = layer(2, 3, 8);
        for len in 1..12 {
            let x = random_seq(len, 2, len as u64);
            let out = bilstm_sequence(&x, &l, store.values()).unwrap();
            assert_eq!(out.len(), len);
            assert!(out.iter().all(|r| r.len() == 6));
        }
    }

    #[test]
    fn static_input_equals_concatenated_input() {
        // A cell with a static input must match a plain cell fed [x; s] each step.
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngStream::new(9, 0);
        let with_cond = LstmCell::new(&mut store, "c", 2, 3, 4, &mut rng);
        let xs = Seq::from_rows(2, &random_seq(6, 2, 10)).unwrap();
        let s = [0.3, -0.7, 1.1];
        let trace = with_cond.run(store.values(), &xs, Some(&s)).unwrap();
        let plain = LstmCell {
            w: with_cond.w,
            b: with_cond.b,
            input: 5,
            cond: 0,
            hidden: 4,
        };
        let rows: Vec<Vec<f64>> = (0..6).map(|t| [xs.row(t), &s[..]].concat()).collect();
        let xs2 = Seq::from_rows(5, &rows).unwrap();
        let trace2 = plain.run(store.values(), &xs2, None).unwrap();
        for (a, b) in trace.h.data().iter().zip(trace2.h.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut state = with_cond.start(store.values(), Some(&s)).unwrap();
        for t in 0..6 {
            with_cond.step(store.values(), &mut state, xs.row(t)).unwrap();
        }
        for (a, b) in state.h.iter().zip(trace.h.row(5)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
