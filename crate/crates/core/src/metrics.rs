//! NMSE and Pearson correlation over sets of impulse responses.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{predict_foa_batch, FoaField};
use crate::roomsim::{FoaDataset, CHANNELS};

/// Floor applied to NMSE so reports stay finite.
pub const NMSE_FLOOR_DB: f64 = -120.0;

/// Running sums for an NMSE over many signals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NmseSums {
    pub error_energy: f64,
    pub reference_energy: f64,
}

impl NmseSums {
    pub fn add_signal(&mut self, reference: &[f64], predicted: &[f64]) {
        for (s, p) in reference.iter().zip(predicted) {
            let e = p - s;
            self.error_energy += e * e;
            self.reference_energy += s * s;
        }
    }

    pub fn merge(&mut self, other: &NmseSums) {
        self.error_energy += other.error_energy;
        self.reference_energy += other.reference_energy;
    }

    pub fn db(&self) -> Result<f64> {
        if self.reference_energy == 0.0 {
            return Err(Error::UndefinedMetric("NMSE of an all-zero reference".into()));
        }
        let ratio = self.error_energy / self.reference_energy;
        if ratio == 0.0 {
            return Ok(NMSE_FLOOR_DB);
        }
        Ok((10.0 * ratio.log10()).max(NMSE_FLOOR_DB))
    }
}

/// `10 log10(Σ‖ŝ − s‖² / Σ‖s‖²)` over rows (positions) of `Ñ × L` arrays,
/// floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(reference: ArrayView2<'_, f64>, predicted: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(&reference, &predicted)?;
    let mut sums = NmseSums::default();
    for (s, p) in reference.rows().into_iter().zip(predicted.rows()) {
        sums.add_signal(&s.to_vec(), &p.to_vec());
    }
    sums.db()
}

/// Centered correlation of one pair of signals; `None` if either is constant.
pub fn pearson(reference: &[f64], predicted: &[f64]) -> Option<f64> {
    let n = reference.len() as f64;
    let constant = |x: &[f64]| x.iter().all(|v| *v == x[0]);
    if reference.is_empty() || constant(reference) || constant(predicted) {
        return None;
    }
    let ms = reference.iter().sum::<f64>() / n;
    let mp = predicted.iter().sum::<f64>() / n;
    let (mut sp, mut ss, mut pp) = (0.0, 0.0, 0.0);
    for (s, p) in reference.iter().zip(predicted) {
        let (ds, dp) = (s - ms, p - mp);
        sp += ds * dp;
        ss += ds * ds;
        pp += dp * dp;
    }
    Some((sp / (ss.sqrt() * pp.sqrt())).clamp(-1.0, 1.0))
}

/// Position-averaged correlation. Constant signals contribute 0; their
/// count is returned alongside.
pub fn pcc(reference: ArrayView2<'_, f64>, predicted: ArrayView2<'_, f64>) -> Result<(f64, usize)> {
    check_shapes(&reference, &predicted)?;
    let mut total = 0.0;
    let mut degenerate = 0;
    for (s, p) in reference.rows().into_iter().zip(predicted.rows()) {
        match pearson(&s.to_vec(), &p.to_vec()) {
            Some(r) => total += r,
            None => degenerate += 1,
        }
    }
    Ok((total / reference.nrows().max(1) as f64, degenerate))
}

fn check_shapes(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::usage(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Per-channel scores on an evaluation set, channels ordered W, X, Y, Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub nmse_db: [f64; CHANNELS],
    pub pcc: [f64; CHANNELS],
    pub positions: usize,
    /// Position/channel pairs whose correlation was undefined.
    pub degenerate_pcc: usize,
}

impl ChannelScores {
    pub fn nmse_w(&self) -> f64 {
        self.nmse_db[0]
    }

    /// Mean of the X, Y and Z values in dB.
    pub fn nmse_xyz(&self) -> f64 {
        (self.nmse_db[1] + self.nmse_db[2] + self.nmse_db[3]) / 3.0
    }

    pub fn pcc_w(&self) -> f64 {
        self.pcc[0]
    }

    pub fn pcc_xyz(&self) -> f64 {
        (self.pcc[1] + self.pcc[2] + self.pcc[3]) / 3.0
    }
}

/// Per-position NMSE sums and per-channel correlations.
type PositionScores = ([NmseSums; CHANNELS], [Option<f64>; CHANNELS]);

/// Predicts every channel at every sample of the given positions and scores
/// the prediction against the dataset.
pub fn evaluate<F: FoaField + ?Sized>(field: &F, dataset: &FoaDataset, positions: &[usize]) -> Result<ChannelScores> {
    if positions.is_empty() {
        return Err(Error::usage("evaluation set is empty"));
    }
    let per_position: Vec<Result<PositionScores>> = positions
        .par_iter()
        .map(|&p| {
            let r = dataset.positions[p];
            let points: Vec<[f64; 4]> = (0..dataset.len).map(|l| [r[0], r[1], r[2], dataset.time(l)]).collect();
            let preds = predict_foa_batch(field, &points, false)?;
            let mut sums = [NmseSums::default(); CHANNELS];
            let mut corr = [None; CHANNELS];
            for c in 0..CHANNELS {
                let reference: Vec<f64> = dataset.rir(p, c).iter().map(|v| *v as f64).collect();
                let predicted: Vec<f64> = preds.iter().map(|q| if c == 0 { q.w } else { q.v[c - 1] }).collect();
                sums[c].add_signal(&reference, &predicted);
                corr[c] = pearson(&reference, &predicted);
            }
            Ok((sums, corr))
        })
        .collect();

    let mut sums = [NmseSums::default(); CHANNELS];
    let mut pcc_total = [0.0; CHANNELS];
    let mut degenerate = 0;
    for item in per_position {
        let (s, c) = item?;
        for ch in 0..CHANNELS {
            sums[ch].merge(&s[ch]);
            match c[ch] {
                Some(r) => pcc_total[ch] += r,
                None => degenerate += 1,
            }
        }
    }
    if degenerate > 0 {
        log::warn!("{degenerate} constant signals scored as zero correlation");
    }
    let mut nmse = [0.0; CHANNELS];
    for ch in 0..CHANNELS {
        nmse[ch] = sums[ch].db()?;
    }
    Ok(ChannelScores {
        nmse_db: nmse,
        pcc: pcc_total.map(|t| t / positions.len() as f64),
        positions: positions.len(),
        degenerate_pcc: degenerate,
    })
}
