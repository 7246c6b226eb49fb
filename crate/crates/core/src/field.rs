//! Model heads on top of the modified MLP, plus analytic reference fields.
//!
//! * [`Head::Danf`]: the network emits `(w, x, y, z)` directly.
//! * [`Head::Vpnf`]: the network emits the scaled potential `Ψ`.
//! * [`Head::VpnfPlus`]: `Ψ = [τ; r]ᵀ · MLP⁴(r, τ)` in network coordinates.
//!
//! Potential heads derive the FOA channels as `w = (1/c₀) ∂Ψ/∂t` and
//! `v = ∇Ψ`. All derivatives handed out by this module are with respect to
//! physical `(x, y, z)` in metres and `t` in seconds.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diffcore::jet::product_adjoint;
use crate::diffcore::{
    self, infer_config, read_checkpoint, write_checkpoint, GradAccumulator, Jet2, JetOrder, MlpConfig, ParamStore,
    HESS_PAIRS,
};
use crate::error::{Error, Result};
use crate::physics::Medium;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    #[serde(rename = "danf")]
    Danf,
    #[serde(rename = "vpnf")]
    Vpnf,
    #[serde(rename = "vpnf+")]
    VpnfPlus,
}

impl Head {
    /// Width of the MLP output layer.
    pub fn mlp_outputs(self) -> usize {
        match self {
            Head::Danf | Head::VpnfPlus => 4,
            Head::Vpnf => 1,
        }
    }

    pub fn is_potential(self) -> bool {
        !matches!(self, Head::Danf)
    }

    /// Jets per point produced by [`FoaField::physical_jets`].
    pub fn field_channels(self) -> usize {
        if self.is_potential() {
            1
        } else {
            4
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Danf => "danf",
            Head::Vpnf => "vpnf",
            Head::VpnfPlus => "vpnf+",
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "danf" => Ok(Head::Danf),
            "vpnf" => Ok(Head::Vpnf),
            "vpnf+" | "vpnf-plus" | "vpnfplus" => Ok(Head::VpnfPlus),
            other => Err(Error::usage(format!("unknown head '{other}'"))),
        }
    }
}

/// Affine map from physical `(r, t)` to network inputs:
/// `x = s (r - center)`, `τ = s c₀ t` with one common scale `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub center: [f64; 3],
    pub spatial_half_extent: f64,
    pub time_scale: f64,
    pub input_scale: f64,
}

impl NormalizationRecord {
    /// Maps the cube `center ± half_extent` onto `[-1, 1]³`.
    pub fn fit(center: [f64; 3], half_extent: f64, medium: &Medium) -> Result<Self> {
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::config(format!("half extent must be positive, got {half_extent}")));
        }
        Ok(NormalizationRecord {
            center,
            spatial_half_extent: half_extent,
            time_scale: medium.sound_speed,
            input_scale: 1.0 / half_extent,
        })
    }

    pub fn normalize(&self, point: &[f64; 4]) -> [f64; 4] {
        let s = self.input_scale;
        [
            s * (point[0] - self.center[0]),
            s * (point[1] - self.center[1]),
            s * (point[2] - self.center[2]),
            s * self.time_scale * point[3],
        ]
    }

    pub fn denormalize(&self, x: &[f64; 4]) -> [f64; 4] {
        let s = self.input_scale;
        [
            x[0] / s + self.center[0],
            x[1] / s + self.center[1],
            x[2] / s + self.center[2],
            x[3] / (s * self.time_scale),
        ]
    }

    /// `∂(network input)/∂(physical input)` per axis.
    pub fn chain_factors(&self) -> [f64; 4] {
        let s = self.input_scale;
        [s, s, s, s * self.time_scale]
    }
}

/// Rescales a jet taken w.r.t. network inputs to physical units. The map is
/// diagonal, so the same call also transposes adjoints.
fn apply_chain(j: &Jet2, f: &[f64; 4]) -> Jet2 {
    let mut out = *j;
    for (g, fi) in out.grad.iter_mut().zip(f) {
        *g *= fi;
    }
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        out.hess[k] *= f[i] * f[j];
    }
    out
}

/// Network input axis multiplying each output of the VPNF+ MLP:
/// `[τ, x, y, z]`.
const PLUS_AXES: [usize; 4] = [3, 0, 1, 2];

/// First-order FOA prediction at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoaPrediction {
    pub w: f64,
    pub v: [f64; 3],
    pub panels: Option<FoaPanels>,
}

/// Derivatives needed by the momentum and continuity residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoaPanels {
    pub grad_w: [f64; 3],
    pub dv_dt: [f64; 3],
    pub div_v: f64,
    pub dw_dt: f64,
}

/// Anything that yields physical-unit jets at space-time points.
///
/// Potential fields return one jet (`Ψ`) per point; direct fields return four
/// (`w, x, y, z`).
pub trait FoaField: Sync {
    fn head(&self) -> Head;
    fn medium(&self) -> Medium;
    /// `points[i] = [x, y, z, t]` in metres and seconds.
    fn physical_jets(&self, points: &[[f64; 4]], order: JetOrder) -> Result<Vec<Jet2>>;
}

/// Jet order a field needs to produce FOA channels (and optionally panels).
pub fn required_order(head: Head, panels: bool) -> JetOrder {
    match (head.is_potential(), panels) {
        (true, true) => JetOrder::Hessian,
        (true, false) | (false, true) => JetOrder::Gradient,
        (false, false) => JetOrder::Value,
    }
}

/// FOA channels from one point's jets.
pub fn foa_from_jets(head: Head, jets: &[Jet2], medium: &Medium, panels: bool) -> FoaPrediction {
    let inv_c = 1.0 / medium.sound_speed;
    if head.is_potential() {
        let psi = &jets[0];
        let w = inv_c * psi.grad[3];
        let v = [psi.grad[0], psi.grad[1], psi.grad[2]];
        let panels = panels.then(|| FoaPanels {
            grad_w: [0, 1, 2].map(|i| inv_c * psi.hess_at(3, i)),
            dv_dt: [0, 1, 2].map(|i| psi.hess_at(i, 3)),
            div_v: psi.hess_at(0, 0) + psi.hess_at(1, 1) + psi.hess_at(2, 2),
            dw_dt: inv_c * psi.hess_at(3, 3),
        });
        FoaPrediction { w, v, panels }
    } else {
        let panels = panels.then(|| FoaPanels {
            grad_w: [jets[0].grad[0], jets[0].grad[1], jets[0].grad[2]],
            dv_dt: [jets[1].grad[3], jets[2].grad[3], jets[3].grad[3]],
            div_v: jets[1].grad[0] + jets[2].grad[1] + jets[3].grad[2],
            dw_dt: jets[0].grad[3],
        });
        FoaPrediction {
            w: jets[0].value,
            v: [jets[1].value, jets[2].value, jets[3].value],
            panels,
        }
    }
}

/// Predicts `(ŵ, v̂)` at a batch of points.
pub fn predict_foa_batch<F: FoaField + ?Sized>(field: &F, points: &[[f64; 4]], panels: bool) -> Result<Vec<FoaPrediction>> {
    let head = field.head();
    let medium = field.medium();
    let jets = field.physical_jets(points, required_order(head, panels))?;
    Ok(jets
        .chunks(head.field_channels())
        .map(|j| foa_from_jets(head, j, &medium, panels))
        .collect())
}

pub fn predict_foa<F: FoaField + ?Sized>(field: &F, r: [f64; 3], t: f64, panels: bool) -> Result<FoaPrediction> {
    Ok(predict_foa_batch(field, &[[r[0], r[1], r[2], t]], panels)?[0])
}

/// Trainable neural field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    params: ParamStore,
    config: MlpConfig,
    head: Head,
    norm: NormalizationRecord,
    medium: Medium,
    seed: u64,
}

impl FieldModel {
    /// SIREN-initialized model with `depth` hidden layers of `width` units.
    pub fn new(
        head: Head,
        depth: usize,
        width: usize,
        omega0: f64,
        norm: NormalizationRecord,
        medium: Medium,
        seed: u64,
    ) -> Result<Self> {
        let config = MlpConfig::new(depth, width, head.mlp_outputs()).with_omega0(omega0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamStore::siren_init(&config, &mut rng)?;
        Self::from_params(head, params, norm, medium, seed)
    }

    pub fn from_params(head: Head, params: ParamStore, norm: NormalizationRecord, medium: Medium, seed: u64) -> Result<Self> {
        medium.validate()?;
        let config = infer_config(&params)?;
        if config.out_dim != head.mlp_outputs() {
            return Err(Error::config(format!(
                "head {head} needs {} network outputs, parameters provide {}",
                head.mlp_outputs(),
                config.out_dim
            )));
        }
        Ok(FieldModel {
            params,
            config,
            head,
            norm,
            medium,
            seed,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        params.check_matches(&self.config)?;
        self.params = params;
        Ok(())
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn normalization(&self) -> &NormalizationRecord {
        &self.norm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Scaled potential `Ψ̂` and its physical derivatives at `(r, t)`.
    pub fn eval_potential(&self, r: [f64; 3], t: f64) -> Result<Jet2> {
        if !self.head.is_potential() {
            return Err(Error::usage("eval_potential requires a potential head (vpnf or vpnf+)"));
        }
        Ok(self.physical_jets(&[[r[0], r[1], r[2], t]], JetOrder::Hessian)?[0])
    }

    fn normalized(&self, points: &[[f64; 4]]) -> Vec<[f64; 4]> {
        points.iter().map(|p| self.norm.normalize(p)).collect()
    }

    /// Maps one point's MLP outputs (network coordinates) to physical jets.
    fn head_forward(&self, x: &[f64; 4], net: &[Jet2], out: &mut Vec<Jet2>) {
        let f = self.norm.chain_factors();
        match self.head {
            Head::Danf | Head::Vpnf => out.extend(net.iter().map(|j| apply_chain(j, &f))),
            Head::VpnfPlus => {
                let mut psi = Jet2::ZERO;
                for (m, &axis) in net.iter().zip(&PLUS_AXES) {
                    psi += Jet2::variable(x[axis], axis) * *m;
                }
                out.push(apply_chain(&psi, &f));
            }
        }
    }

    fn head_backward(&self, x: &[f64; 4], net: &[Jet2], phys_bar: &[Jet2], net_bar: &mut [Jet2]) {
        let f = self.norm.chain_factors();
        match self.head {
            Head::Danf | Head::Vpnf => {
                for (nb, pb) in net_bar.iter_mut().zip(phys_bar) {
                    *nb = apply_chain(pb, &f);
                }
            }
            Head::VpnfPlus => {
                let psi_bar = apply_chain(&phys_bar[0], &f);
                for ((nb, m), &axis) in net_bar.iter_mut().zip(net).zip(&PLUS_AXES) {
                    let (_, m_bar) = product_adjoint(&Jet2::variable(x[axis], axis), m, &psi_bar);
                    *nb = m_bar;
                }
            }
        }
    }

    /// Loss value and parameter gradient for a loss over physical jets.
    ///
    /// `loss(start, jets, adjoints)` sees one chunk of points at a time,
    /// `start` being the index of the chunk's first point in `points`, and
    /// `head().field_channels()` jets per point.
    pub fn loss_param_grad<L>(&self, points: &[[f64; 4]], order: JetOrder, loss: L) -> Result<(f64, GradAccumulator)>
    where
        L: Fn(usize, &[Jet2], &mut [Jet2]) -> f64 + Sync,
    {
        let inputs = self.normalized(points);
        let n_net = self.config.out_dim;
        let n_phys = self.head.field_channels();
        diffcore::loss_param_grad(&self.params, &inputs, order, |start, net, net_bar| {
            let count = net.len() / n_net;
            let mut phys = Vec::with_capacity(count * n_phys);
            for p in 0..count {
                self.head_forward(&inputs[start + p], &net[p * n_net..(p + 1) * n_net], &mut phys);
            }
            let mut phys_bar = vec![Jet2::ZERO; phys.len()];
            let value = loss(start, &phys, &mut phys_bar);
            for p in 0..count {
                self.head_backward(
                    &inputs[start + p],
                    &net[p * n_net..(p + 1) * n_net],
                    &phys_bar[p * n_phys..(p + 1) * n_phys],
                    &mut net_bar[p * n_net..(p + 1) * n_net],
                );
            }
            value
        })
    }

    fn trailer(&self) -> serde_json::Value {
        json!({
            "format": "vpnf-checkpoint",
            "omega0": self.config.omega0,
            "depth": self.config.depth,
            "width": self.config.width,
            "out_dim": self.config.out_dim,
            "head": self.head,
            "normalization": self.norm,
            "medium": self.medium,
            "seed": self.seed,
            "vpnf_plus_multiplier": "normalized",
        })
    }

    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        write_checkpoint(out, &self.params, &self.trailer())
    }

    pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Self> {
        let (params, trailer) = read_checkpoint(input)?;
        let field = |k: &str| trailer.get(k).cloned().ok_or_else(|| Error::format("checkpoint", format!("metadata lacks {k}")));
        let head: Head = serde_json::from_value(field("head")?)?;
        let norm: NormalizationRecord = serde_json::from_value(field("normalization")?)?;
        let medium: Medium = serde_json::from_value(field("medium")?)?;
        let seed: u64 = serde_json::from_value(field("seed")?)?;
        Self::from_params(head, params, norm, medium, seed)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_checkpoint(&mut f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut f)
    }
}

impl FoaField for FieldModel {
    fn head(&self) -> Head {
        self.head
    }

    fn medium(&self) -> Medium {
        self.medium
    }

    fn physical_jets(&self, points: &[[f64; 4]], order: JetOrder) -> Result<Vec<Jet2>> {
        let inputs = self.normalized(points);
        let net = diffcore::modified_mlp_jet(&self.params, &inputs, order)?;
        let n_net = self.config.out_dim;
        let mut out = Vec::with_capacity(points.len() * self.head.field_channels());
        for (x, chunk) in inputs.iter().zip(net.chunks(n_net)) {
            self.head_forward(x, chunk, &mut out);
        }
        Ok(out)
    }
}

/// Closed-form potential field given as a jet-valued function of `[x, y, z, t]`.
pub struct AnalyticPotential<F> {
    pub medium: Medium,
    pub psi: F,
}

impl<F> FoaField for AnalyticPotential<F>
where
    F: Fn(&[f64; 4]) -> Jet2 + Sync,
{
    fn head(&self) -> Head {
        Head::Vpnf
    }

    fn medium(&self) -> Medium {
        self.medium
    }

    fn physical_jets(&self, points: &[[f64; 4]], order: JetOrder) -> Result<Vec<Jet2>> {
        Ok(points.iter().map(|p| (self.psi)(p).truncate(order)).collect())
    }
}

/// Closed-form direct field returning `(w, x, y, z)` jets.
pub struct AnalyticFoa<F> {
    pub medium: Medium,
    pub channels: F,
}

impl<F> FoaField for AnalyticFoa<F>
where
    F: Fn(&[f64; 4]) -> [Jet2; 4] + Sync,
{
    fn head(&self) -> Head {
        Head::Danf
    }

    fn medium(&self) -> Medium {
        self.medium
    }

    fn physical_jets(&self, points: &[[f64; 4]], order: JetOrder) -> Result<Vec<Jet2>> {
        Ok(points
            .iter()
            .flat_map(|p| (self.channels)(p).map(|j| j.truncate(order)))
            .collect())
    }
}

/// Phase jet `k·r - c₀|k| t + φ₀` of a plane wave.
pub fn plane_wave_phase(k: [f64; 3], phase0: f64, medium: &Medium, point: &[f64; 4]) -> Jet2 {
    let omega = medium.sound_speed * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    let mut phi = Jet2::constant(phase0);
    for i in 0..3 {
        phi += Jet2::variable(point[i], i) * k[i];
    }
    phi + Jet2::variable(point[3], 3) * (-omega)
}

/// `Ψ = sin(k·r - c₀|k| t + φ₀)`.
pub fn plane_wave_potential(
    k: [f64; 3],
    phase0: f64,
    medium: Medium,
) -> AnalyticPotential<impl Fn(&[f64; 4]) -> Jet2 + Sync> {
    AnalyticPotential {
        medium,
        psi: move |p: &[f64; 4]| plane_wave_phase(k, phase0, &medium, p).sin(),
    }
}

/// FOA channels of [`plane_wave_potential`] as a direct field:
/// `w = -|k| cos φ`, `v = k cos φ`.
pub fn plane_wave_foa(
    k: [f64; 3],
    phase0: f64,
    medium: Medium,
) -> AnalyticFoa<impl Fn(&[f64; 4]) -> [Jet2; 4] + Sync> {
    let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    AnalyticFoa {
        medium,
        channels: move |p: &[f64; 4]| {
            let c = plane_wave_phase(k, phase0, &medium, p).cos();
            [c.scale(-kn), c.scale(k[0]), c.scale(k[1]), c.scale(k[2])]
        },
    }
}
