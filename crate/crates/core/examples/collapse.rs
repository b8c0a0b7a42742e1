//! Minority-signal decay through stacked linear relational layers.

use relmoss::diagnostics::{collapse_curve, random_fixture, spectral_norm, star_fixture, LinearStack};
use relmoss::tensor::{Rng, Tensor};

fn main() -> relmoss::Result<()> {
    // Every minority sees one minority and nine majorities.
    let (g, mask) = star_fixture(10, 9)?;
    let stack = LinearStack {
        w_self: None,
        w_rel: vec![(0, Tensor::scalar(1.0))],
    };
    let x0 = Tensor::column(mask.iter().map(|&m| u8::from(m) as f64).collect());
    let c = collapse_curve(&g, &mask, &stack, &x0, 4, 0)?.expect("mixed neighbourhood");
    for (l, s) in c.pooled.iter().enumerate() {
        println!("star layer {l}: signal {s:.3e}  (0.1^{l} = {:.3e})", 0.1f64.powi(l as i32));
    }

    let mut rng = Rng::new(7);
    let (g, mask) = random_fixture(40, 2, 6, &mut rng)?;
    let mut mat = || Tensor::from_vec(3, 3, (0..9).map(|_| 0.6 * rng.normal()).collect());
    let stack = LinearStack {
        w_self: Some(mat()?),
        w_rel: vec![(0, mat()?), (2, mat()?)],
    };
    for (r, w) in &stack.w_rel {
        println!("relation {r}: spectral norm {:.4}", spectral_norm(w, 1e-12));
    }
    let x0 = Tensor::from_vec(40, 3, (0..120).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let c = collapse_curve(&g, &mask, &stack, &x0, 4, 0)?.expect("mixed neighbourhood");
    println!("pi per relation {:?}", c.pi);
    for l in 1..=c.num_layers() {
        println!(
            "random layer {l}: attributed {:.4e} <= bound {:.4e}",
            c.attributed[l].unwrap(),
            c.bound[l].unwrap()
        );
    }
    println!("bound holds: {}", c.bound_holds());
    Ok(())
}
