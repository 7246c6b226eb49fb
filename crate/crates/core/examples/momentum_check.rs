//! The momentum equation `∇w = (1/c₀) ∂v/∂t` holds to rounding for potential
//! heads and not for the direct four-output head.
//!
//!     cargo run --example momentum_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpnf::field::{predict_foa_batch, FieldModel, Head, NormalizationRecord};
use vpnf::physics::{momentum_residual, Medium};

fn main() -> vpnf::Result<()> {
    let medium = Medium::default();
    let norm = NormalizationRecord::fit([0.5; 3], 0.5, &medium)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<[f64; 4]> = (0..1000)
        .map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen_range(0.0..0.1)])
        .collect();

    for head in [Head::Vpnf, Head::VpnfPlus, Head::Danf] {
        let model = FieldModel::new(head, 3, 64, 30.0, norm, medium, 3)?;
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for p in predict_foa_batch(&model, &points, true)? {
            let q = p.panels.expect("panels requested");
            for r in momentum_residual(q.grad_w, q.dv_dt, &medium) {
                worst = worst.max(r.abs());
            }
            scale = scale.max(q.grad_w.iter().fold(0.0, |m: f64, g| m.max(g.abs())));
        }
        println!("{head:>6}: max |∇w - ∂v/∂t / c₀| = {worst:.3e}  (max |∇w| = {scale:.3e})");
    }
    Ok(())
}
