//! Losses, collocation sampling, and the optimization loop.
//!
//! Every loss is an `ℓ₁` mean whose adjoint is `sign(residual) / N` (with
//! `sign(0) = 0`). Value-only variants accept any [`FoaField`] so closed-form
//! fields can be scored directly; the `_grad` variants differentiate a
//! [`FieldModel`] with respect to its parameters.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{GradAccumulator, Jet2, JetOrder, ParamStore, CHUNK_POINTS};
use crate::error::{Error, Result};
use crate::field::{FieldModel, FoaField, Head, NormalizationRecord};
use crate::metrics;
use crate::physics::{continuity_residual, momentum_residual};
use crate::roomsim::{FoaDataset, GridSpec};

/// Validation positions held out of training.
pub const VALIDATION_COUNT: usize = 50;

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Model kinds

/// Physics regularizer added to the data term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    None,
    Wave,
    MomentumContinuity,
}

impl Penalty {
    /// Number of penalty terms (each with its own adaptive weight).
    pub fn terms(self) -> usize {
        match self {
            Penalty::None => 0,
            Penalty::Wave => 1,
            Penalty::MomentumContinuity => 2,
        }
    }
}

/// The five compared models: an output head plus an optional penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "DANF")]
    Danf,
    #[serde(rename = "PI-DANF")]
    PiDanf,
    #[serde(rename = "VPNF")]
    Vpnf,
    #[serde(rename = "VPNF-Wave")]
    VpnfWave,
    #[serde(rename = "VPNF+")]
    VpnfPlus,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Danf,
        ModelKind::PiDanf,
        ModelKind::Vpnf,
        ModelKind::VpnfWave,
        ModelKind::VpnfPlus,
    ];

    pub fn head(self) -> Head {
        match self {
            ModelKind::Danf | ModelKind::PiDanf => Head::Danf,
            ModelKind::Vpnf | ModelKind::VpnfWave => Head::Vpnf,
            ModelKind::VpnfPlus => Head::VpnfPlus,
        }
    }

    pub fn penalty(self) -> Penalty {
        match self {
            ModelKind::PiDanf => Penalty::MomentumContinuity,
            ModelKind::VpnfWave => Penalty::Wave,
            _ => Penalty::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Danf => "DANF",
            ModelKind::PiDanf => "PI-DANF",
            ModelKind::Vpnf => "VPNF",
            ModelKind::VpnfWave => "VPNF-Wave",
            ModelKind::VpnfPlus => "VPNF+",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown model {s:?}; expected one of DANF, PI-DANF, VPNF, VPNF-Wave, VPNF+")))
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub depth: usize,
    pub width: usize,
    pub omega0: f64,
    pub iterations: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Time indices drawn per iteration; every train position is used at each.
    pub times_per_batch: usize,
    /// Size of the fresh Latin hypercube drawn each iteration.
    pub collocation_count: usize,
    /// Points of that draw actually used (a random subset when smaller).
    pub collocation_per_iteration: usize,
    pub seed: u64,
    pub validation_interval: usize,
    /// Record elapsed milliseconds in the log. Off by default so that logs
    /// are reproducible byte for byte.
    pub log_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Vpnf,
            depth: 3,
            width: 512,
            omega0: 30.0,
            iterations: 100_000,
            lr0: 1e-4,
            lr_min: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            times_per_batch: 250,
            collocation_count: 25_000,
            collocation_per_iteration: 25_000,
            seed: 0,
            validation_interval: 500,
            log_wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("depth", self.depth),
            ("width", self.width),
            ("iterations", self.iterations),
            ("times_per_batch", self.times_per_batch),
            ("collocation_count", self.collocation_count),
            ("collocation_per_iteration", self.collocation_per_iteration),
            ("validation_interval", self.validation_interval),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.collocation_per_iteration > self.collocation_count {
            return Err(Error::config("collocation_per_iteration exceeds collocation_count"));
        }
        if !(self.lr0 > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr0) {
            return Err(Error::config(format!("need 0 <= lr_min <= lr0, got {} and {}", self.lr_min, self.lr0)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return Err(Error::config("Adam moments must lie in [0, 1) and eps must be positive"));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::config("omega0 must be positive"));
        }
        Ok(())
    }

    /// Cosine annealing from `lr0` at iteration 0 toward `lr_min`.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let phase = iteration as f64 / self.iterations as f64;
        self.lr_min + 0.5 * (self.lr0 - self.lr_min) * (1.0 + (std::f64::consts::PI * phase).cos())
    }
}

/// Fresh model for `config`, normalized to the dataset's grid cube.
pub fn build_model(config: &TrainConfig, dataset: &FoaDataset) -> Result<FieldModel> {
    config.validate()?;
    let norm = NormalizationRecord::fit(dataset.grid.center(), 0.5 * dataset.grid.extent(), &dataset.medium)?;
    FieldModel::new(
        config.model.head(),
        config.depth,
        config.width,
        config.omega0,
        norm,
        dataset.medium,
        config.seed,
    )
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    #[serde(rename = "random-volume")]
    Volume,
    #[serde(rename = "surface")]
    Surface,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random-volume" | "volume" => Ok(SplitMode::Volume),
            "surface" => Ok(SplitMode::Surface),
            _ => Err(Error::config(format!("unknown split mode {s:?}; expected random-volume or surface"))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Volume => "random-volume",
            SplitMode::Surface => "surface",
        })
    }
}

/// Disjoint train / validation / evaluation position indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub mode: SplitMode,
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub evaluation: Vec<usize>,
}

impl Split {
    /// Draws `train_count` training and `validation_count` validation
    /// positions from the pool of the given mode; everything else is
    /// evaluated.
    pub fn new(grid: &GridSpec, mode: SplitMode, train_count: usize, validation_count: usize, seed: u64) -> Result<Self> {
        let mut pool: Vec<usize> = match mode {
            SplitMode::Volume => (0..grid.len()).collect(),
            SplitMode::Surface => grid.surface_indices(),
        };
        if train_count == 0 || train_count + validation_count > pool.len() {
            return Err(Error::config(format!(
                "{mode} pool has {} positions; cannot draw {train_count} train + {validation_count} validation",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        let mut train = pool[..train_count].to_vec();
        let mut validation = pool[train_count..train_count + validation_count].to_vec();
        train.sort_unstable();
        validation.sort_unstable();
        let mut used = vec![false; grid.len()];
        for &i in train.iter().chain(&validation) {
            used[i] = true;
        }
        let evaluation = (0..grid.len()).filter(|&i| !used[i]).collect();
        Ok(Split {
            mode,
            seed,
            train,
            validation,
            evaluation,
        })
    }

    pub fn validate(&self, positions: usize) -> Result<()> {
        let mut seen = vec![false; positions];
        for &i in self.train.iter().chain(&self.validation).chain(&self.evaluation) {
            if i >= positions {
                return Err(Error::config(format!("split index {i} outside {positions} positions")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::config(format!("split index {i} appears twice")));
            }
        }
        if self.train.is_empty() {
            return Err(Error::config("split has no training positions"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Losses

/// Space-time points with their FOA targets `(w, x, y, z)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataBatch {
    pub points: Vec<[f64; 4]>,
    pub targets: Vec<[f64; 4]>,
}

impl DataBatch {
    /// Every position in `positions` at every time index in `times`.
    pub fn from_dataset(dataset: &FoaDataset, positions: &[usize], times: &[usize]) -> Result<Self> {
        let mut batch = DataBatch::default();
        for &p in positions {
            let r = dataset.positions[p];
            for &l in times {
                if l >= dataset.len {
                    return Err(Error::usage(format!("time index {l} outside {} samples", dataset.len)));
                }
                batch.points.push([r[0], r[1], r[2], dataset.time(l)]);
                batch.targets.push(dataset.sample(p, l));
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn nonempty(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::usage(format!("{what} batch is empty")));
    }
    Ok(())
}

/// `|ŵ - w| + ‖v̂ - v‖₁` at one point, writing `weight ×` its adjoint.
fn data_point(head: Head, jets: &[Jet2], target: &[f64; 4], inv_c: f64, bar: Option<(&mut [Jet2], f64)>) -> f64 {
    if head.is_potential() {
        let psi = &jets[0];
        let r = [
            inv_c * psi.grad[3] - target[0],
            psi.grad[0] - target[1],
            psi.grad[1] - target[2],
            psi.grad[2] - target[3],
        ];
        if let Some((bar, wt)) = bar {
            bar[0].grad[3] += wt * inv_c * sgn(r[0]);
            for i in 0..3 {
                bar[0].grad[i] += wt * sgn(r[i + 1]);
            }
        }
        r.iter().map(|x| x.abs()).sum()
    } else {
        let mut total = 0.0;
        let mut bar = bar;
        for c in 0..4 {
            let r = jets[c].value - target[c];
            if let Some((b, wt)) = bar.as_mut() {
                b[c].value += *wt * sgn(r);
            }
            total += r.abs();
        }
        total
    }
}

/// `|ΔΨ - Ψ_tt / c₀²|` at one point.
fn wave_point(psi: &Jet2, medium_c: f64, bar: Option<(&mut Jet2, f64)>) -> f64 {
    let lap = psi.hess_at(0, 0) + psi.hess_at(1, 1) + psi.hess_at(2, 2);
    let r = lap - psi.hess_at(3, 3) / (medium_c * medium_c);
    if let Some((b, wt)) = bar {
        let s = wt * sgn(r);
        for i in 0..3 {
            b.hess[crate::diffcore::hess_index(i, i)] += s;
        }
        b.hess[crate::diffcore::hess_index(3, 3)] -= s / (medium_c * medium_c);
    }
    r.abs()
}

/// `(‖∇ŵ - ∂v̂/∂t / c₀‖₁, |∇·v̂ - ∂ŵ/∂t / c₀|)` for direct-output jets.
fn pidanf_point(jets: &[Jet2], inv_c: f64, bar: Option<(&mut [Jet2], f64, f64)>) -> (f64, f64) {
    let m = [0, 1, 2].map(|i| jets[0].grad[i] - inv_c * jets[i + 1].grad[3]);
    let c = jets[1].grad[0] + jets[2].grad[1] + jets[3].grad[2] - inv_c * jets[0].grad[3];
    if let Some((b, wm, wc)) = bar {
        for i in 0..3 {
            let s = wm * sgn(m[i]);
            b[0].grad[i] += s;
            b[i + 1].grad[3] -= s * inv_c;
            b[i + 1].grad[i] += wc * sgn(c);
        }
        b[0].grad[3] -= wc * sgn(c) * inv_c;
    }
    (m.iter().map(|x| x.abs()).sum(), c.abs())
}

/// Differentiates a multi-term loss. `kernel(start, jets, bar)` returns the
/// chunk's unweighted term sums and writes the weighted adjoints. Per-chunk
/// sums are reduced in chunk order.
fn multi_term_grad<const K: usize, Kf>(
    model: &FieldModel,
    points: &[[f64; 4]],
    order: JetOrder,
    kernel: Kf,
) -> Result<([f64; K], GradAccumulator)>
where
    Kf: Fn(usize, &[Jet2], &mut [Jet2]) -> [f64; K] + Sync,
{
    let slots: Vec<Mutex<[f64; K]>> = (0..points.len().div_ceil(CHUNK_POINTS)).map(|_| Mutex::new([0.0; K])).collect();
    let (_, grad) = model.loss_param_grad(points, order, |start, jets, bar| {
        let terms = kernel(start, jets, bar);
        *slots[start / CHUNK_POINTS].lock().expect("slot lock") = terms;
        0.0
    })?;
    let mut totals = [0.0; K];
    for s in slots {
        let t = s.into_inner().expect("slot lock");
        for k in 0..K {
            totals[k] += t[k];
        }
    }
    Ok((totals, grad))
}

/// Mean `ℓ₁` mismatch between predicted and measured FOA channels; for
/// potential heads the prediction is `(Ψ_t / c₀, ∇Ψ)`.
pub fn data_loss<F: FoaField + ?Sized>(field: &F, batch: &DataBatch) -> Result<f64> {
    nonempty(batch.len(), "data")?;
    let head = field.head();
    let inv_c = 1.0 / field.medium().sound_speed;
    let order = if head.is_potential() { JetOrder::Gradient } else { JetOrder::Value };
    let jets = field.physical_jets(&batch.points, order)?;
    let n = head.field_channels();
    let total: f64 = jets
        .chunks(n)
        .zip(&batch.targets)
        .map(|(j, t)| data_point(head, j, t, inv_c, None))
        .sum();
    Ok(total / batch.len() as f64)
}

/// [`data_loss`] and its parameter gradient scaled by `weight`.
pub fn data_loss_grad(model: &FieldModel, batch: &DataBatch, weight: f64) -> Result<(f64, GradAccumulator)> {
    nonempty(batch.len(), "data")?;
    let head = model.head();
    let inv_c = 1.0 / model.medium().sound_speed;
    let order = if head.is_potential() { JetOrder::Gradient } else { JetOrder::Value };
    let n = head.field_channels();
    let wt = weight / batch.len() as f64;
    let ([total], grad) = multi_term_grad(model, &batch.points, order, |start, jets, bar| {
        let mut sum = 0.0;
        for (p, (j, b)) in jets.chunks(n).zip(bar.chunks_mut(n)).enumerate() {
            sum += data_point(head, j, &batch.targets[start + p], inv_c, Some((b, wt)));
        }
        [sum]
    })?;
    Ok((total / batch.len() as f64, grad))
}

fn require_potential(head: Head) -> Result<()> {
    if !head.is_potential() {
        return Err(Error::usage("the wave penalty needs a potential head"));
    }
    Ok(())
}

fn require_direct(head: Head) -> Result<()> {
    if head.is_potential() {
        return Err(Error::usage("momentum/continuity penalties apply to direct-output fields"));
    }
    Ok(())
}

/// Mean `|ΔΨ - Ψ_tt / c₀²|` over collocation points.
pub fn wave_loss<F: FoaField + ?Sized>(field: &F, points: &[[f64; 4]]) -> Result<f64> {
    require_potential(field.head())?;
    nonempty(points.len(), "collocation")?;
    let c = field.medium().sound_speed;
    let jets = field.physical_jets(points, JetOrder::Hessian)?;
    Ok(jets.iter().map(|j| wave_point(j, c, None)).sum::<f64>() / points.len() as f64)
}

pub fn wave_loss_grad(model: &FieldModel, points: &[[f64; 4]], weight: f64) -> Result<(f64, GradAccumulator)> {
    require_potential(model.head())?;
    nonempty(points.len(), "collocation")?;
    let c = model.medium().sound_speed;
    let wt = weight / points.len() as f64;
    let ([total], grad) = multi_term_grad(model, points, JetOrder::Hessian, |_, jets, bar| {
        [jets.iter().zip(bar.iter_mut()).map(|(j, b)| wave_point(j, c, Some((b, wt)))).sum()]
    })?;
    Ok((total / points.len() as f64, grad))
}

/// Mean momentum (`ℓ₁` over the three axes) and continuity residuals of a
/// direct-output field.
pub fn pidanf_penalties<F: FoaField + ?Sized>(field: &F, points: &[[f64; 4]]) -> Result<(f64, f64)> {
    require_direct(field.head())?;
    nonempty(points.len(), "collocation")?;
    let medium = field.medium();
    let jets = field.physical_jets(points, JetOrder::Gradient)?;
    let (mut m, mut c) = (0.0, 0.0);
    for j in jets.chunks(4) {
        let p = crate::field::foa_from_jets(Head::Danf, j, &medium, true)
            .panels
            .expect("panels requested");
        let r = momentum_residual(p.grad_w, p.dv_dt, &medium);
        m += r.iter().map(|x| x.abs()).sum::<f64>();
        c += continuity_residual(p.div_v, p.dw_dt, &medium).abs();
    }
    let n = points.len() as f64;
    Ok((m / n, c / n))
}

/// Both penalties with gradient `wm ∇L_mom + wc ∇L_cont`.
pub fn pidanf_penalties_grad(
    model: &FieldModel,
    points: &[[f64; 4]],
    weights: (f64, f64),
) -> Result<((f64, f64), GradAccumulator)> {
    require_direct(model.head())?;
    nonempty(points.len(), "collocation")?;
    let inv_c = 1.0 / model.medium().sound_speed;
    let n = points.len() as f64;
    let (wm, wc) = (weights.0 / n, weights.1 / n);
    let ([m, c], grad) = multi_term_grad(model, points, JetOrder::Gradient, |_, jets, bar| {
        let mut acc = [0.0; 2];
        for (j, b) in jets.chunks(4).zip(bar.chunks_mut(4)) {
            let (m, c) = pidanf_point(j, inv_c, Some((b, wm, wc)));
            acc[0] += m;
            acc[1] += c;
        }
        acc
    })?;
    Ok(((m / n, c / n), grad))
}

// ---------------------------------------------------------------------------
// Adaptive weighting

/// Log-weights `s_k = ln ε_k` of the data term followed by the penalty terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossState {
    pub log_eps: Vec<f64>,
}

impl LossState {
    /// `ε_data = 1`, every penalty `ε = 0.1`.
    pub fn initial(penalty_terms: usize) -> Self {
        let mut log_eps = vec![0.0];
        log_eps.extend(std::iter::repeat_n((0.1f64).ln(), penalty_terms));
        LossState { log_eps }
    }

    pub fn eps(&self) -> Vec<f64> {
        self.log_eps.iter().map(|s| s.exp()).collect()
    }

    /// `1 / (2 ε_k²)` for each term.
    pub fn weights(&self) -> Vec<f64> {
        self.log_eps.iter().map(|s| 0.5 * (-2.0 * s).exp()).collect()
    }
}

/// `Σ L_k / (2 ε_k²) + ln Π ε_k` and its gradient with respect to each `s_k`.
pub fn adaptive_total(losses: &[f64], state: &LossState) -> Result<(f64, Vec<f64>)> {
    if losses.len() != state.log_eps.len() {
        return Err(Error::usage(format!(
            "{} loss terms for {} adaptive weights",
            losses.len(),
            state.log_eps.len()
        )));
    }
    let w = state.weights();
    let total = losses.iter().zip(&w).map(|(l, w)| w * l).sum::<f64>() + state.log_eps.iter().sum::<f64>();
    let grads = losses.iter().zip(&w).map(|(l, w)| 1.0 - 2.0 * w * l).collect();
    Ok((total, grads))
}

// ---------------------------------------------------------------------------
// Collocation

/// Axis-aligned box `[lo, hi]` in `(x, y, z, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Bounds {
    /// Ω × [0, T] for a dataset's grid cube and duration.
    pub fn for_dataset(dataset: &FoaDataset) -> Self {
        let g = &dataset.grid;
        let e = g.extent();
        Bounds {
            lo: [g.origin[0], g.origin[1], g.origin[2], 0.0],
            hi: [g.origin[0] + e, g.origin[1] + e, g.origin[2] + e, dataset.duration()],
        }
    }
}

/// Latin hypercube: each dimension's `n` equal strata hold exactly one point.
pub fn lhs_sample_with<R: Rng + ?Sized>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<[f64; 4]> {
    let mut out = vec![[0.0; 4]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..4 {
        strata.shuffle(rng);
        let span = bounds.hi[d] - bounds.lo[d];
        for (p, &s) in out.iter_mut().zip(&strata) {
            let u: f64 = rng.gen();
            p[d] = bounds.lo[d] + span * (s as f64 + u) / n as f64;
        }
    }
    out
}

pub fn lhs_sample(n: usize, bounds: &Bounds, seed: u64) -> Vec<[f64; 4]> {
    lhs_sample_with(n, bounds, &mut ChaCha8Rng::seed_from_u64(seed))
}

// ---------------------------------------------------------------------------
// Optimizer

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub l_data: f64,
    /// Penalty terms (wave; or momentum then continuity).
    pub l_penalty: Vec<f64>,
    pub eps: Vec<f64>,
    pub lr: f64,
    pub wall_ms: Option<u128>,
    pub val_nmse_w: Option<f64>,
}

pub const LOG_HEADER: &str = "iteration,l_data,l_penalty,l_penalty2,eps_data,eps_penalty,eps_penalty2,lr,wall_ms,val_nmse_w_db";

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.l_data,
            opt(self.l_penalty.first()),
            opt(self.l_penalty.get(1)),
            opt(self.eps.first()),
            opt(self.eps.get(1)),
            opt(self.eps.get(2)),
            self.lr,
            opt(self.wall_ms),
            opt(self.val_nmse_w),
        )
    }
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: usize,
    pub nmse_w_db: f64,
}

/// Index of the lowest validation score; ties go to the earliest entry.
pub fn select_checkpoint(history: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| v < history[b]) {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::usage("checkpoint history is empty"))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model at the validation checkpoint chosen by [`select_checkpoint`].
    pub best: FieldModel,
    pub best_index: usize,
    pub last: FieldModel,
    pub history: Vec<ValidationRecord>,
    pub log: Vec<LogRow>,
    pub loss_state: LossState,
}

/// Runs `config.iterations` Adam steps on `model`.
///
/// Each iteration draws `times_per_batch` distinct time indices and fits all
/// train positions at those times. Models with a penalty additionally draw a
/// fresh Latin hypercube over Ω × [0, T] and minimize the adaptively
/// weighted sum. Validation W-channel NMSE is recorded every
/// `validation_interval` iterations and after the last one; only the best
/// parameters are retained.
pub fn train(mut model: FieldModel, dataset: &FoaDataset, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate(dataset.num_positions())?;
    if model.head() != config.model.head() {
        return Err(Error::config(format!(
            "model head {} does not match {}",
            model.head(),
            config.model
        )));
    }
    if split.validation.is_empty() {
        return Err(Error::config("validation split is empty"));
    }
    if config.times_per_batch > dataset.len {
        return Err(Error::config(format!(
            "times_per_batch {} exceeds the {} available samples",
            config.times_per_batch, dataset.len
        )));
    }

    let penalty = config.model.penalty();
    let bounds = Bounds::for_dataset(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut state = LossState::initial(penalty.terms());
    let adaptive = penalty != Penalty::None;
    let n_theta = model.params().len();
    let mut adam = Adam::new(
        n_theta + if adaptive { state.log_eps.len() } else { 0 },
        config.beta1,
        config.beta2,
        config.adam_eps,
    );
    let mut flat = vec![0.0; adam.m.len()];
    let mut flat_grad = vec![0.0; adam.m.len()];

    let start = Instant::now();
    let mut log = Vec::with_capacity(config.iterations);
    let mut history = Vec::new();
    let mut best: Option<(usize, ParamStore)> = None;

    for it in 0..config.iterations {
        let lr = config.learning_rate(it);
        let times = rand::seq::index::sample(&mut rng, dataset.len, config.times_per_batch).into_vec();
        let batch = DataBatch::from_dataset(dataset, &split.train, &times)?;

        let weights = if adaptive { state.weights() } else { vec![1.0] };
        let (l_data, mut grad) = data_loss_grad(&model, &batch, weights[0])?;
        let l_penalty: Vec<f64> = match penalty {
            Penalty::None => Vec::new(),
            _ => {
                let mut pts = lhs_sample_with(config.collocation_count, &bounds, &mut rng);
                if config.collocation_per_iteration < pts.len() {
                    pts.shuffle(&mut rng);
                    pts.truncate(config.collocation_per_iteration);
                }
                if penalty == Penalty::Wave {
                    let (l, g) = wave_loss_grad(&model, &pts, weights[1])?;
                    grad.add_assign(&g);
                    vec![l]
                } else {
                    let ((m, c), g) = pidanf_penalties_grad(&model, &pts, (weights[1], weights[2]))?;
                    grad.add_assign(&g);
                    vec![m, c]
                }
            }
        };

        let terms: Vec<f64> = std::iter::once(l_data).chain(l_penalty.iter().copied()).collect();
        if terms.iter().any(|v| !v.is_finite()) || !grad.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                detail: format!(
                    "loss terms {terms:?}, eps {:?}, lr {lr}, gradient finite: {}",
                    state.eps(),
                    grad.is_finite()
                ),
            });
        }

        flat[..n_theta].copy_from_slice(model.params().values());
        flat_grad[..n_theta].copy_from_slice(grad.values());
        if adaptive {
            let (_, s_grad) = adaptive_total(&terms, &state)?;
            flat[n_theta..].copy_from_slice(&state.log_eps);
            flat_grad[n_theta..].copy_from_slice(&s_grad);
        }
        let eps_before = if adaptive { state.eps() } else { Vec::new() };
        adam.step(&mut flat, &flat_grad, lr);
        model.params_mut().values_mut().copy_from_slice(&flat[..n_theta]);
        if adaptive {
            state.log_eps.copy_from_slice(&flat[n_theta..]);
            if state.log_eps.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite {
                    iteration: it,
                    detail: format!("adaptive log-weights {:?}", state.log_eps),
                });
            }
        }

        let done = it + 1;
        let val_nmse_w = if done % config.validation_interval == 0 || done == config.iterations {
            let score = metrics::evaluate(&model, dataset, &split.validation)?.nmse_w();
            history.push(ValidationRecord {
                iteration: done,
                nmse_w_db: score,
            });
            if best.as_ref().is_none_or(|(b, _)| score < history[*b].nmse_w_db) {
                best = Some((history.len() - 1, model.params().clone()));
            }
            log::info!("{} iteration {done}: data {l_data:.4e}, validation W {score:.2} dB", config.model);
            Some(score)
        } else {
            None
        };

        log.push(LogRow {
            iteration: it,
            l_data,
            l_penalty,
            eps: eps_before,
            lr,
            wall_ms: config.log_wall_clock.then(|| start.elapsed().as_millis()),
            val_nmse_w,
        });
    }

    let (best_index, best_params) = best.expect("the final iteration always validates");
    let mut best_model = model.clone();
    best_model.set_params(best_params)?;
    Ok(TrainOutcome {
        best: best_model,
        best_index,
        last: model,
        history,
        log,
        loss_state: state,
    })
}
