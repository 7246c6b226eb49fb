//! Modified MLP with sine activations, evaluated on jets.
//!
//! Wiring, for network input `x` and frequency scale `ω₀`:
//!
//! ```text
//! U   = sin(ω₀(W_u x + b_u))        V = sin(ω₀(W_v x + b_v))
//! H_1 = sin(ω₀(W_1 x + b_1))
//! Z_k = sin(ω₀(W_{k+1} H_k + b_{k+1}))
//! H_{k+1} = (1 - Z_k) ⊙ U + Z_k ⊙ V
//! y   = W_o H_depth + b_o
//! ```
//!
//! Every activation is a [`JetBatch`]: value, gradient and Hessian with
//! respect to `x` for each unit and batch point. Parameter gradients of any
//! scalar built from the output jets come from a reverse sweep over the
//! recorded forward pass.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2};
use rayon::prelude::*;

use crate::diffcore::jet::{
    product_adjoint, sin_scaled_adjoint, Jet2, JetOrder, HESS_LEN, NUM_INPUTS,
};
use crate::diffcore::params::{GradAccumulator, MlpConfig, ParamStore, TensorRole};
use crate::error::{Error, Result};

/// Points per forward/backward chunk. Fixed so reductions are reproducible.
pub const CHUNK_POINTS: usize = 64;

/// Jets for `units × batch` entries, stored component-major: column
/// `c * batch + b` holds component `c` of point `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    order: JetOrder,
    batch: usize,
    data: Array2<f64>,
}

impl JetBatch {
    pub fn zeros(units: usize, batch: usize, order: JetOrder) -> Self {
        JetBatch {
            order,
            batch,
            data: Array2::zeros((units, order.components() * batch)),
        }
    }

    /// Seeds the four coordinate functions at each input point.
    pub fn from_inputs(inputs: &[[f64; NUM_INPUTS]], order: JetOrder) -> Self {
        let batch = inputs.len();
        let mut out = JetBatch::zeros(NUM_INPUTS, batch, order);
        for (b, x) in inputs.iter().enumerate() {
            for (axis, &xv) in x.iter().enumerate() {
                out.data[[axis, b]] = xv;
                if order >= JetOrder::Gradient {
                    out.data[[axis, (1 + axis) * batch + b]] = 1.0;
                }
            }
        }
        out
    }

    /// Builds a batch from point-major jets (`jets[b * units + u]`).
    pub fn from_jets(units: usize, jets: &[Jet2], order: JetOrder) -> Self {
        let batch = jets.len() / units;
        let mut out = JetBatch::zeros(units, batch, order);
        for b in 0..batch {
            for u in 0..units {
                out.set_jet(u, b, &jets[b * units + u]);
            }
        }
        out
    }

    pub fn units(&self) -> usize {
        self.data.nrows()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn jet(&self, unit: usize, b: usize) -> Jet2 {
        load(self.data.row(unit).as_slice().expect("standard layout"), b, self.batch, self.order)
    }

    pub fn set_jet(&mut self, unit: usize, b: usize, jet: &Jet2) {
        let (batch, order) = (self.batch, self.order);
        let mut row = self.data.row_mut(unit);
        store(row.as_slice_mut().expect("standard layout"), b, batch, order, jet);
    }

    /// Point-major copy: `out[b * units + u]`.
    pub fn to_point_jets(&self) -> Vec<Jet2> {
        let units = self.units();
        let mut out = vec![Jet2::ZERO; units * self.batch];
        for u in 0..units {
            let row = self.data.row(u);
            let row = row.as_slice().expect("standard layout");
            for b in 0..self.batch {
                out[b * units + u] = load(row, b, self.batch, self.order);
            }
        }
        out
    }

    fn map_units(&self, mut f: impl FnMut(&Jet2) -> Jet2) -> JetBatch {
        let mut out = JetBatch::zeros(self.units(), self.batch, self.order);
        for (src, mut dst) in self.data.outer_iter().zip(out.data.outer_iter_mut()) {
            let src = src.as_slice().expect("standard layout");
            let dst = dst.as_slice_mut().expect("standard layout");
            for b in 0..self.batch {
                let j = f(&load(src, b, self.batch, self.order));
                store(dst, b, self.batch, self.order, &j);
            }
        }
        out
    }
}

#[inline]
fn load(row: &[f64], b: usize, batch: usize, order: JetOrder) -> Jet2 {
    let mut j = Jet2::constant(row[b]);
    if order >= JetOrder::Gradient {
        for i in 0..NUM_INPUTS {
            j.grad[i] = row[(1 + i) * batch + b];
        }
    }
    if order == JetOrder::Hessian {
        for k in 0..HESS_LEN {
            j.hess[k] = row[(1 + NUM_INPUTS + k) * batch + b];
        }
    }
    j
}

#[inline]
fn store(row: &mut [f64], b: usize, batch: usize, order: JetOrder, j: &Jet2) {
    row[b] = j.value;
    if order >= JetOrder::Gradient {
        for i in 0..NUM_INPUTS {
            row[(1 + i) * batch + b] = j.grad[i];
        }
    }
    if order == JetOrder::Hessian {
        for k in 0..HESS_LEN {
            row[(1 + NUM_INPUTS + k) * batch + b] = j.hess[k];
        }
    }
}

/// Elementwise `sin(ω₀ a)` on every unit's jet.
pub fn sine_jet(pre: &JetBatch, omega0: f64) -> JetBatch {
    pre.map_units(|a| a.sin_scaled(omega0))
}

/// Affine map `W · in + b`; the bias only touches the value component.
pub fn linear_jet(input: &JetBatch, weight: ArrayView2<'_, f64>, bias: ArrayView1<'_, f64>) -> Result<JetBatch> {
    if weight.ncols() != input.units() {
        return Err(Error::config(format!(
            "weight has {} columns but input has {} units",
            weight.ncols(),
            input.units()
        )));
    }
    if bias.len() != weight.nrows() {
        return Err(Error::config(format!(
            "bias length {} does not match {} weight rows",
            bias.len(),
            weight.nrows()
        )));
    }
    let mut out = JetBatch::zeros(weight.nrows(), input.batch, input.order);
    general_mat_mul(1.0, &weight, &input.data, 0.0, &mut out.data);
    let batch = input.batch;
    for (mut row, &bv) in out.data.outer_iter_mut().zip(bias.iter()) {
        row.slice_mut(s![..batch]).mapv_inplace(|v| v + bv);
    }
    Ok(out)
}

/// Infers the network shape from a parameter manifest.
pub fn infer_config(params: &ParamStore) -> Result<MlpConfig> {
    let m = params.manifest();
    if m.len() < 8 {
        return Err(Error::config("parameter manifest is too short for a modified MLP"));
    }
    let width = m[0].rows;
    let hidden = m.iter().filter(|r| r.role == TensorRole::HiddenWeight).count();
    let out_dim = m[m.len() - 1].rows;
    let config = MlpConfig {
        depth: hidden,
        width,
        out_dim,
        omega0: params.omega0(),
    };
    params.check_matches(&config)?;
    Ok(config)
}

struct GateRecord {
    pre: JetBatch,
    gate: JetBatch,
}

/// Recorded forward pass over one chunk of points.
pub struct MlpTape {
    order: JetOrder,
    input: JetBatch,
    pre_u: JetBatch,
    pre_v: JetBatch,
    diff: JetBatch,
    pre_first: JetBatch,
    gates: Vec<GateRecord>,
    hidden: Vec<JetBatch>,
    output: JetBatch,
}

impl MlpTape {
    pub fn output(&self) -> &JetBatch {
        &self.output
    }
}

fn gate_weight_index(k: usize) -> usize {
    // U(w,b), V(w,b), H1(w,b) occupy 0..6
    6 + 2 * k
}

/// Forward pass recording every intermediate needed by [`backward`].
pub fn forward_tape(params: &ParamStore, config: &MlpConfig, inputs: &[[f64; NUM_INPUTS]], order: JetOrder) -> Result<MlpTape> {
    let omega = config.omega0;
    let input = JetBatch::from_inputs(inputs, order);

    let pre_u = linear_jet(&input, params.matrix(0), params.vector(1))?;
    let u = sine_jet(&pre_u, omega);
    let pre_v = linear_jet(&input, params.matrix(2), params.vector(3))?;
    let v = sine_jet(&pre_v, omega);
    let mut diff = v;
    diff.data -= &u.data;

    let pre_first = linear_jet(&input, params.matrix(4), params.vector(5))?;
    let mut hidden = vec![sine_jet(&pre_first, omega)];
    let mut gates = Vec::with_capacity(config.depth.saturating_sub(1));
    for k in 0..config.depth - 1 {
        let wi = gate_weight_index(k);
        let pre = linear_jet(hidden.last().expect("nonempty"), params.matrix(wi), params.vector(wi + 1))?;
        let gate = sine_jet(&pre, omega);
        // H = U + Z ⊙ (V - U)
        let mut next = JetBatch::zeros(config.width, input.batch, order);
        for unit in 0..config.width {
            for b in 0..input.batch {
                let h = u.jet(unit, b) + gate.jet(unit, b) * diff.jet(unit, b);
                next.set_jet(unit, b, &h);
            }
        }
        gates.push(GateRecord { pre, gate });
        hidden.push(next);
    }
    let (hw, hb) = params.head_indices();
    let output = linear_jet(hidden.last().expect("nonempty"), params.matrix(hw), params.vector(hb))?;
    Ok(MlpTape {
        order,
        input,
        pre_u,
        pre_v,
        diff,
        pre_first,
        gates,
        hidden,
        output,
    })
}

fn grad_view<'a>(grad: &'a mut [f64], params: &ParamStore, index: usize) -> ArrayViewMut2<'a, f64> {
    let rec = params.manifest()[index];
    ArrayViewMut2::from_shape((rec.rows, rec.cols), &mut grad[rec.range()]).expect("manifest shape is consistent")
}

/// Accumulates the gradient of a linear layer and returns the adjoint of
/// its input.
fn linear_backward(
    params: &ParamStore,
    weight_index: usize,
    input: &JetBatch,
    out_bar: &JetBatch,
    grad: &mut [f64],
    need_input_bar: bool,
) -> Option<JetBatch> {
    let batch = input.batch;
    {
        let mut gw = grad_view(grad, params, weight_index);
        general_mat_mul(1.0, &out_bar.data, &input.data.t(), 1.0, &mut gw);
    }
    {
        let bias_rec = params.manifest()[weight_index + 1];
        let gb = &mut grad[bias_rec.range()];
        for (g, row) in gb.iter_mut().zip(out_bar.data.outer_iter()) {
            *g += row.slice(s![..batch]).sum();
        }
    }
    need_input_bar.then(|| {
        let mut in_bar = JetBatch::zeros(input.units(), batch, input.order);
        general_mat_mul(1.0, &params.matrix(weight_index).t(), &out_bar.data, 0.0, &mut in_bar.data);
        in_bar
    })
}

fn sine_backward(pre: &JetBatch, omega: f64, out_bar: &JetBatch) -> JetBatch {
    let mut bar = JetBatch::zeros(pre.units(), pre.batch, pre.order);
    for unit in 0..pre.units() {
        for b in 0..pre.batch {
            let a = sin_scaled_adjoint(&pre.jet(unit, b), omega, &out_bar.jet(unit, b));
            bar.set_jet(unit, b, &a);
        }
    }
    bar
}

/// Reverse sweep: adds `d(loss)/dθ` to `grad` given the adjoint of the
/// output jets.
pub fn backward(params: &ParamStore, config: &MlpConfig, tape: &MlpTape, out_bar: &JetBatch, grad: &mut GradAccumulator) {
    let omega = config.omega0;
    let grad = grad.values_mut();
    let (hw, _) = params.head_indices();
    let mut h_bar = linear_backward(params, hw, tape.hidden.last().expect("nonempty"), out_bar, grad, true)
        .expect("requested");

    let batch = tape.input.batch;
    let mut u_bar = JetBatch::zeros(config.width, batch, tape.order);
    let mut v_bar = JetBatch::zeros(config.width, batch, tape.order);
    for k in (0..config.depth - 1).rev() {
        let rec = &tape.gates[k];
        let mut gate_bar = JetBatch::zeros(config.width, batch, tape.order);
        u_bar.data += &h_bar.data;
        for unit in 0..config.width {
            for b in 0..batch {
                let hb = h_bar.jet(unit, b);
                let (zb, db) = product_adjoint(&rec.gate.jet(unit, b), &tape.diff.jet(unit, b), &hb);
                gate_bar.set_jet(unit, b, &zb);
                let ub = u_bar.jet(unit, b) - db;
                u_bar.set_jet(unit, b, &ub);
                let vb = v_bar.jet(unit, b) + db;
                v_bar.set_jet(unit, b, &vb);
            }
        }
        let pre_bar = sine_backward(&rec.pre, omega, &gate_bar);
        h_bar = linear_backward(params, gate_weight_index(k), &tape.hidden[k], &pre_bar, grad, true)
            .expect("requested");
    }

    let first_bar = sine_backward(&tape.pre_first, omega, &h_bar);
    linear_backward(params, 4, &tape.input, &first_bar, grad, false);
    let pu_bar = sine_backward(&tape.pre_u, omega, &u_bar);
    linear_backward(params, 0, &tape.input, &pu_bar, grad, false);
    let pv_bar = sine_backward(&tape.pre_v, omega, &v_bar);
    linear_backward(params, 2, &tape.input, &pv_bar, grad, false);
}

/// Output jets (point-major, `out_dim` per point) of the modified MLP.
pub fn modified_mlp_jet(params: &ParamStore, inputs: &[[f64; NUM_INPUTS]], order: JetOrder) -> Result<Vec<Jet2>> {
    let config = infer_config(params)?;
    let chunks: Vec<Result<Vec<Jet2>>> = inputs
        .par_chunks(CHUNK_POINTS)
        .map(|chunk| forward_tape(params, &config, chunk, order).map(|t| t.output.to_point_jets()))
        .collect();
    let mut out = Vec::with_capacity(inputs.len() * config.out_dim);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Value and parameter gradient of a scalar loss over output jets.
///
/// `loss(start, outputs, adjoints)` is called once per chunk of points with
/// the chunk's point offset and point-major output jets. It returns the
/// chunk's contribution to the loss and writes `d(loss)/d(output jet)` into
/// `adjoints`. Chunk results are reduced in chunk order.
pub fn loss_param_grad<F>(
    params: &ParamStore,
    inputs: &[[f64; NUM_INPUTS]],
    order: JetOrder,
    loss: F,
) -> Result<(f64, GradAccumulator)>
where
    F: Fn(usize, &[Jet2], &mut [Jet2]) -> f64 + Sync,
{
    let config = infer_config(params)?;
    let parts: Vec<Result<(f64, GradAccumulator)>> = inputs
        .par_chunks(CHUNK_POINTS)
        .enumerate()
        .map(|(ci, chunk)| {
            let tape = forward_tape(params, &config, chunk, order)?;
            let outputs = tape.output.to_point_jets();
            let mut adjoints = vec![Jet2::ZERO; outputs.len()];
            let value = loss(ci * CHUNK_POINTS, &outputs, &mut adjoints);
            for a in &mut adjoints {
                *a = a.truncate(order);
            }
            let out_bar = JetBatch::from_jets(config.out_dim, &adjoints, order);
            let mut grad = GradAccumulator::zeros_like(params);
            backward(params, &config, &tape, &out_bar, &mut grad);
            Ok((value, grad))
        })
        .collect();

    let mut total = 0.0;
    let mut grad = GradAccumulator::zeros_like(params);
    for part in parts {
        let (v, g) = part?;
        total += v;
        grad.add_assign(&g);
    }
    Ok((total, grad))
}

/// Iterates one output channel of point-major jets.
pub fn channel(jets: &[Jet2], out_dim: usize, channel: usize) -> impl Iterator<Item = &Jet2> {
    jets.iter().skip(channel).step_by(out_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(depth: usize, width: usize, out: usize, seed: u64) -> ParamStore {
        let cfg = MlpConfig::new(depth, width, out);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParamStore::siren_init(&cfg, &mut rng).unwrap()
    }

    #[test]
    fn identity_and_constant_linear() {
        let x = JetBatch::from_inputs(&[[0.3, -0.2, 0.5, 0.9]], JetOrder::Hessian);
        let eye = Array2::<f64>::eye(4);
        let zero_b = ndarray::Array1::<f64>::zeros(4);
        let y = linear_jet(&x, eye.view(), zero_b.view()).unwrap();
        assert_eq!(y, x);

        let w = Array2::<f64>::zeros((2, 4));
        let b = ndarray::arr1(&[1.5, -2.0]);
        let y = linear_jet(&x, w.view(), b.view()).unwrap();
        assert_eq!(y.jet(0, 0), Jet2::constant(1.5));
        assert_eq!(y.jet(1, 0), Jet2::constant(-2.0));
    }

    #[test]
    fn linear_shape_mismatch_is_config_error() {
        let x = JetBatch::from_inputs(&[[0.0; 4]], JetOrder::Value);
        let w = Array2::<f64>::zeros((2, 3));
        let b = ndarray::Array1::<f64>::zeros(2);
        assert!(matches!(linear_jet(&x, w.view(), b.view()), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let cfg = MlpConfig::new(3, 8, 2);
        let mut p = ParamStore::zeros(&cfg).unwrap();
        let (_, hb) = p.head_indices();
        let r = p.manifest()[hb].range();
        p.values_mut()[r.clone()].copy_from_slice(&[0.7, -1.1]);
        let out = modified_mlp_jet(&p, &[[0.1, 0.2, 0.3, 0.4], [-0.9, 0.0, 0.5, 0.1]], JetOrder::Hessian).unwrap();
        for pt in out.chunks(2) {
            assert_eq!(pt[0], Jet2::constant(0.7));
            assert_eq!(pt[1], Jet2::constant(-1.1));
        }
    }

    #[test]
    fn depth_one_width_one_reduces_to_sine() {
        // H1 = sin(x), y = H1 with ω₀ = 1
        let cfg = MlpConfig::new(1, 1, 1).with_omega0(1.0);
        let mut p = ParamStore::zeros(&cfg).unwrap();
        let w1 = p.manifest()[4].offset;
        p.values_mut()[w1] = 1.0;
        let (hw, _) = p.head_indices();
        let off = p.manifest()[hw].offset;
        p.values_mut()[off] = 1.0;
        for x in [-0.8, 0.0, 0.4, 1.3] {
            let j = modified_mlp_jet(&p, &[[x, 0.0, 0.0, 0.0]], JetOrder::Hessian).unwrap()[0];
            assert!((j.value - x.sin()).abs() < 1e-15);
            assert!((j.grad[0] - x.cos()).abs() < 1e-15);
            assert!((j.hess_at(0, 0) + x.sin()).abs() < 1e-15);
            assert_eq!(j.grad[1..], [0.0; 3]);
        }
    }

    #[test]
    fn head_scaling_is_linear() {
        let p = random_params(3, 12, 3, 5);
        let x = [[0.2, -0.4, 0.6, 0.1]];
        let a = modified_mlp_jet(&p, &x, JetOrder::Hessian).unwrap();
        for alpha in [-2.0, 0.5, -2.5, 3.7] {
            let mut scaled = p.clone();
            let (hw, hb) = p.head_indices();
            for idx in [hw, hb] {
                let r = p.manifest()[idx].range();
                for v in &mut scaled.values_mut()[r] {
                    *v *= alpha;
                }
            }
            let b = modified_mlp_jet(&scaled, &x, JetOrder::Hessian).unwrap();
            for (ja, jb) in a.iter().zip(&b) {
                let expect = ja.scale(alpha);
                if alpha.abs().log2().fract() == 0.0 {
                    // power-of-two scaling commutes with rounding
                    assert_eq!(expect, *jb);
                } else {
                    let tol = 1e-13 * (1.0 + ja.value.abs() + ja.max_abs_grad() + ja.hess.iter().fold(0.0f64, |m, h| m.max(h.abs())));
                    assert!((expect.value - jb.value).abs() < tol);
                    for (e, g) in expect.grad.iter().zip(jb.grad) {
                        assert!((e - g).abs() < tol);
                    }
                    for (e, h) in expect.hess.iter().zip(jb.hess) {
                        assert!((e - h).abs() < tol * 100.0);
                    }
                }
            }
        }
    }

    #[test]
    fn lower_orders_agree_with_full_jets() {
        let p = random_params(3, 10, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<[f64; 4]> = (0..70).map(|_| [0; 4].map(|_: i32| rng.gen_range(-1.0..1.0))).collect();
        let full = modified_mlp_jet(&p, &xs, JetOrder::Hessian).unwrap();
        let grad = modified_mlp_jet(&p, &xs, JetOrder::Gradient).unwrap();
        let val = modified_mlp_jet(&p, &xs, JetOrder::Value).unwrap();
        for ((f, g), v) in full.iter().zip(&grad).zip(&val) {
            assert_eq!(f.truncate(JetOrder::Gradient), *g);
            assert_eq!(f.value, v.value);
        }
    }

    #[test]
    fn output_bias_gradient_is_unit() {
        let cfg = MlpConfig::new(2, 6, 1);
        let p = ParamStore::zeros(&cfg).unwrap();
        let (total, grad) = loss_param_grad(&p, &[[0.1, 0.2, 0.3, 0.4]], JetOrder::Hessian, |_, out, adj| {
            adj[0].value = 1.0;
            out[0].value
        })
        .unwrap();
        assert_eq!(total, 0.0);
        let (_, hb) = p.head_indices();
        let bias_off = p.manifest()[hb].offset;
        for (i, g) in grad.values().iter().enumerate() {
            assert_eq!(*g, if i == bias_off { 1.0 } else { 0.0 });
        }
    }
}
