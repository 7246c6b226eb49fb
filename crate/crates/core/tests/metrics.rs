//! Metric invariants and evaluation against replaying and silent fields.

use ndarray::Array2;
use proptest::prelude::*;
use vpnf::diffcore::{Jet2, JetOrder, MlpConfig, ParamStore};
use vpnf::field::{FieldModel, FoaField, Head, NormalizationRecord};
use vpnf::metrics::{evaluate, nmse_db, pcc, NMSE_FLOOR_DB};
use vpnf::physics::Medium;
use vpnf::roomsim::{build_dataset, sample_room, FoaDataset, GridSpec};
use vpnf::training::{Split, SplitMode};

fn signals(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #[test]
    fn nmse_ignores_common_scaling(s in signals(3, 16), p in signals(3, 16), e in -8i32..8, a in 0.1f64..50.0) {
        let base = nmse_db(s.view(), p.view()).unwrap();
        // powers of two scale without rounding, so the result is identical
        let k = 2f64.powi(e);
        prop_assert_eq!(nmse_db((&s * k).view(), (&p * k).view()).unwrap(), base);
        prop_assert_eq!(nmse_db((&s * -k).view(), (&p * -k).view()).unwrap(), base);
        let scaled = nmse_db((&s * a).view(), (&p * a).view()).unwrap();
        prop_assert!((scaled - base).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn pcc_ignores_positive_affine_maps(s in signals(4, 24), p in signals(4, 24), a in 0.01f64..100.0, b in -100.0f64..100.0) {
        let (base, _) = pcc(s.view(), p.view()).unwrap();
        let (mapped, _) = pcc(s.view(), (&p * a + b).view()).unwrap();
        prop_assert!((mapped - base).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }
}

/// Field that reads its answers from a dataset.
struct Replay<'a>(&'a FoaDataset);

impl FoaField for Replay<'_> {
    fn head(&self) -> Head {
        Head::Danf
    }

    fn medium(&self) -> Medium {
        self.0.medium
    }

    fn physical_jets(&self, points: &[[f64; 4]], _order: JetOrder) -> vpnf::Result<Vec<Jet2>> {
        let g = &self.0.grid;
        Ok(points
            .iter()
            .flat_map(|p| {
                let idx = [0, 1, 2].map(|a| ((p[a] - g.origin[a]) / g.spacing).round() as usize);
                let pos = (idx[0] * g.points_per_axis + idx[1]) * g.points_per_axis + idx[2];
                let l = (p[3] * self.0.fs).round() as usize;
                self.0.sample(pos, l).map(Jet2::constant)
            })
            .collect())
    }
}

fn small_room() -> FoaDataset {
    let room = sample_room(4).unwrap();
    let grid = GridSpec {
        origin: room.cube_origin,
        spacing: 0.25,
        points_per_axis: 5,
    };
    build_dataset(&room, grid, 8000.0, 0.03, &Medium::default()).unwrap()
}

#[test]
fn replaying_field_scores_perfectly() {
    let ds = small_room();
    let all: Vec<usize> = (0..ds.num_positions()).collect();
    let s = evaluate(&Replay(&ds), &ds, &all).unwrap();
    assert_eq!(s.nmse_db, [NMSE_FLOOR_DB; 4]);
    for r in s.pcc {
        assert!((r - 1.0).abs() < 1e-12);
    }
    assert_eq!(s.degenerate_pcc, 0);
}

#[test]
fn silent_field_scores_zero_db() {
    let ds = small_room();
    let cfg = MlpConfig::new(2, 8, 1);
    let norm = NormalizationRecord::fit(ds.grid.center(), 0.5, &ds.medium).unwrap();
    let zero = FieldModel::from_params(Head::Vpnf, ParamStore::zeros(&cfg).unwrap(), norm, ds.medium, 0).unwrap();
    let all: Vec<usize> = (0..ds.num_positions()).collect();
    let s = evaluate(&zero, &ds, &all).unwrap();
    assert_eq!(s.nmse_db, [0.0; 4]);
    // a silent prediction has no defined correlation anywhere
    assert_eq!(s.pcc, [0.0; 4]);
    assert_eq!(s.degenerate_pcc, 4 * ds.num_positions());
}

#[test]
fn default_volume_split_leaves_9011_for_evaluation() {
    let g = GridSpec::default_for([0.5; 3]);
    let split = Split::new(&g, SplitMode::Volume, 200, 50, 0).unwrap();
    assert_eq!(split.evaluation.len(), 9011);
}
