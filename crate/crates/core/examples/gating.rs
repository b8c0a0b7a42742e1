//! Gate values of one gated layer for a few entities.

use relmoss::gate::{gate_value, RelGateLayer};
use relmoss::tensor::{ParamStore, Rng};

fn main() -> relmoss::Result<()> {
    let d = 6;
    let mut store = ParamStore::new();
    let mut rng = Rng::new(4);
    let layer = RelGateLayer::new("layer0", d, 2, false, &mut store, &mut rng);
    let x_e: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let other: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    // The attention term is even in h: negating the message leaves the gate unchanged.
    let cases = [
        ("self", x_e.clone()),
        ("negated", x_e.iter().map(|v| -v).collect()),
        ("random", other.clone()),
        ("small", other.iter().map(|v| 0.1 * v).collect::<Vec<_>>()),
    ];
    for (label, h) in cases {
        for r in 0..2 {
            let g = gate_value(&layer, &store, &x_e, &h, r)?;
            let g: Vec<String> = g.iter().map(|v| format!("{v:.3}")).collect();
            println!("{label:<8} relation {r}: [{}]", g.join(", "));
        }
    }
    // Raising the relation embedding opens the gate everywhere.
    store.value_mut(layer.r_emb[0]).data_mut().fill(4.0);
    let g = gate_value(&layer, &store, &x_e, &x_e, 0)?;
    println!("r_emb = 4: min gate {:.3}", g.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(())
}
