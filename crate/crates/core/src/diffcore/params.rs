use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::jet::NUM_INPUTS;
use crate::error::{Error, Result};

/// What a tensor in the parameter manifest is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorRole {
    EncoderUWeight,
    EncoderUBias,
    EncoderVWeight,
    EncoderVBias,
    HiddenWeight,
    HiddenBias,
    HeadWeight,
    HeadBias,
}

impl TensorRole {
    pub fn tag(self) -> u32 {
        match self {
            TensorRole::EncoderUWeight => 1,
            TensorRole::EncoderUBias => 2,
            TensorRole::EncoderVWeight => 3,
            TensorRole::EncoderVBias => 4,
            TensorRole::HiddenWeight => 5,
            TensorRole::HiddenBias => 6,
            TensorRole::HeadWeight => 7,
            TensorRole::HeadBias => 8,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            1 => TensorRole::EncoderUWeight,
            2 => TensorRole::EncoderUBias,
            3 => TensorRole::EncoderVWeight,
            4 => TensorRole::EncoderVBias,
            5 => TensorRole::HiddenWeight,
            6 => TensorRole::HiddenBias,
            7 => TensorRole::HeadWeight,
            8 => TensorRole::HeadBias,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRecord {
    pub role: TensorRole,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorRecord {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Shape of a modified MLP: `depth` hidden layers of `width` sine units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub depth: usize,
    pub width: usize,
    pub out_dim: usize,
    pub omega0: f64,
}

impl MlpConfig {
    pub fn new(depth: usize, width: usize, out_dim: usize) -> Self {
        MlpConfig {
            depth,
            width,
            out_dim,
            omega0: 30.0,
        }
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.out_dim == 0 {
            return Err(Error::config(format!(
                "depth, width and output dimension must be positive (got {self:?})"
            )));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::config(format!("omega0 must be positive, got {}", self.omega0)));
        }
        Ok(())
    }

    /// Tensor shapes in storage order: U, V, first hidden, gated hidden
    /// layers, head.
    pub fn layout(&self) -> Vec<(TensorRole, usize, usize)> {
        let (w, n) = (self.width, NUM_INPUTS);
        let mut shapes = vec![
            (TensorRole::EncoderUWeight, w, n),
            (TensorRole::EncoderUBias, w, 1),
            (TensorRole::EncoderVWeight, w, n),
            (TensorRole::EncoderVBias, w, 1),
            (TensorRole::HiddenWeight, w, n),
            (TensorRole::HiddenBias, w, 1),
        ];
        for _ in 1..self.depth {
            shapes.push((TensorRole::HiddenWeight, w, w));
            shapes.push((TensorRole::HiddenBias, w, 1));
        }
        shapes.push((TensorRole::HeadWeight, self.out_dim, w));
        shapes.push((TensorRole::HeadBias, self.out_dim, 1));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Flat parameter vector plus the manifest describing how it is sliced.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    values: Vec<f64>,
    manifest: Vec<TensorRecord>,
    omega0: f64,
}

impl ParamStore {
    pub fn zeros(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let manifest = manifest_from_layout(&config.layout());
        let len = manifest.iter().map(TensorRecord::len).sum();
        Ok(ParamStore {
            values: vec![0.0; len],
            manifest,
            omega0: config.omega0,
        })
    }

    /// SIREN initialization. Layers fed by the raw input draw weights from
    /// `U(-1/n_in, 1/n_in)`; later layers from `U(-sqrt(6/n_in)/ω₀, ..)`.
    /// Biases follow `U(-1/sqrt(n_in), 1/sqrt(n_in))`.
    pub fn siren_init<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::zeros(config)?;
        let omega0 = config.omega0;
        for record in store.manifest.clone() {
            let fan_in = match record.role {
                TensorRole::EncoderUBias
                | TensorRole::EncoderVBias
                | TensorRole::HiddenBias
                | TensorRole::HeadBias => fan_in_of_bias(&store.manifest, &record),
                _ => record.cols,
            } as f64;
            let bound = match record.role {
                TensorRole::EncoderUWeight | TensorRole::EncoderVWeight => 1.0 / fan_in,
                TensorRole::HiddenWeight if record.cols == NUM_INPUTS => 1.0 / fan_in,
                TensorRole::HiddenWeight | TensorRole::HeadWeight => (6.0 / fan_in).sqrt() / omega0,
                _ => 1.0 / fan_in.sqrt(),
            };
            for v in &mut store.values[record.range()] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(store)
    }

    /// Rebuilds a store from a manifest of `(role, rows, cols)` and values.
    pub fn from_parts(shapes: &[(TensorRole, usize, usize)], values: Vec<f64>, omega0: f64) -> Result<Self> {
        let manifest = manifest_from_layout(shapes);
        let expected: usize = manifest.iter().map(TensorRecord::len).sum();
        if expected != values.len() {
            return Err(Error::config(format!(
                "manifest covers {expected} parameters but {} were supplied",
                values.len()
            )));
        }
        Ok(ParamStore {
            values,
            manifest,
            omega0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn manifest(&self) -> &[TensorRecord] {
        &self.manifest
    }

    pub fn shapes(&self) -> Vec<(TensorRole, usize, usize)> {
        self.manifest.iter().map(|r| (r.role, r.rows, r.cols)).collect()
    }

    /// Checks the manifest against the expected layout of `config`.
    pub fn check_matches(&self, config: &MlpConfig) -> Result<()> {
        if self.shapes() != config.layout() {
            return Err(Error::config(format!(
                "parameter manifest does not match depth={} width={} out_dim={}",
                config.depth, config.width, config.out_dim
            )));
        }
        Ok(())
    }

    pub fn matrix(&self, index: usize) -> ArrayView2<'_, f64> {
        let rec = &self.manifest[index];
        ArrayView2::from_shape((rec.rows, rec.cols), &self.values[rec.range()])
            .expect("manifest shape is consistent")
    }

    pub fn vector(&self, index: usize) -> ArrayView1<'_, f64> {
        let rec = &self.manifest[index];
        ArrayView1::from(&self.values[rec.range()])
    }

    /// Manifest index of the head weight and bias tensors.
    pub fn head_indices(&self) -> (usize, usize) {
        let n = self.manifest.len();
        (n - 2, n - 1)
    }

    /// Every value rounded to single precision, as stored in checkpoints.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = *v as f32 as f64;
        }
        out
    }
}

fn manifest_from_layout(shapes: &[(TensorRole, usize, usize)]) -> Vec<TensorRecord> {
    let mut offset = 0;
    shapes
        .iter()
        .map(|&(role, rows, cols)| {
            let rec = TensorRecord {
                role,
                rows,
                cols,
                offset,
            };
            offset += rows * cols;
            rec
        })
        .collect()
}

fn fan_in_of_bias(manifest: &[TensorRecord], bias: &TensorRecord) -> usize {
    // biases directly follow their weight matrix
    manifest
        .iter()
        .find(|r| r.offset + r.len() == bias.offset)
        .map(|w| w.cols)
        .unwrap_or(1)
}

/// Parameter gradient aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradAccumulator {
    values: Vec<f64>,
}

impl GradAccumulator {
    pub fn zeros_like(params: &ParamStore) -> Self {
        GradAccumulator {
            values: vec![0.0; params.len()],
        }
    }

    pub fn with_len(len: usize) -> Self {
        GradAccumulator {
            values: vec![0.0; len],
        }
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn add_assign(&mut self, other: &GradAccumulator) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &GradAccumulator, alpha: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
