//! Forward-mode second-order jets through the modified MLP, checked against
//! central differences at one input.
//!
//!     cargo run --example jet_derivatives

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vpnf::diffcore::{modified_mlp_jet, JetOrder, MlpConfig, ParamStore, HESS_PAIRS};

fn main() -> vpnf::Result<()> {
    let config = MlpConfig::new(3, 32, 1);
    let params = ParamStore::siren_init(&config, &mut ChaCha8Rng::seed_from_u64(7))?;
    let x = [0.1, -0.4, 0.25, 0.6];
    let jet = modified_mlp_jet(&params, &[x], JetOrder::Hessian)?[0];
    let f = |y: [f64; 4]| modified_mlp_jet(&params, &[y], JetOrder::Value).map(|j| j[0].value);

    let h = 1e-4;
    let shifted = |d: &[(usize, f64)]| {
        let mut y = x;
        for &(i, s) in d {
            y[i] += s;
        }
        f(y)
    };
    println!("value {:+.6e}", jet.value);
    for i in 0..4 {
        let fd = (shifted(&[(i, h)])? - shifted(&[(i, -h)])?) / (2.0 * h);
        println!("d/dx{i}      jet {:+.8e}  fd {fd:+.8e}", jet.grad[i]);
    }
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        let fd = if i == j {
            (shifted(&[(i, h)])? - 2.0 * jet.value + shifted(&[(i, -h)])?) / (h * h)
        } else {
            (shifted(&[(i, h), (j, h)])? - shifted(&[(i, h), (j, -h)])? - shifted(&[(i, -h), (j, h)])?
                + shifted(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h)
        };
        println!("d²/dx{i}dx{j}  jet {:+.8e}  fd {fd:+.8e}", jet.hess[k]);
    }
    Ok(())
}
