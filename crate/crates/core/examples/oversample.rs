//! Relation-guided partner selection: the signature term changes the partner.

use relmoss::syn::{nearest_minority, synthesize, BankEntry, MemoryBank};
use relmoss::tensor::Rng;

fn main() -> relmoss::Result<()> {
    let mut bank = MemoryBank::new(4, 2, 2)?;
    // Node 1 is close in representation but structurally different;
    // node 2 is further away but shares the anchor's signature.
    bank.push([
        BankEntry { x: vec![0.1, 0.0], s: vec![0.0, 1.0], node: 1 },
        BankEntry { x: vec![0.5, 0.0], s: vec![1.0, 0.0], node: 2 },
        BankEntry { x: vec![3.0, 3.0], s: vec![1.0, 0.0], node: 3 },
    ])?;
    let (x, s) = (vec![0.0, 0.0], vec![1.0, 0.0]);
    for omega in [0.0, 0.1, 1.0, 50.0] {
        let (i, dist) = nearest_minority(&bank, &x, &s, omega, None)?;
        println!("omega {omega:>5}: partner node {} (distance {dist:.3})", bank.get(i).node);
    }
    let mut rng = Rng::new(0);
    let syn = synthesize(&x, &s, &bank, 50.0, (2.0, 2.0), 1, &mut rng, Some(0))?;
    println!(
        "synthetic: lambda {:.3}, x {:?}, s {:?}, partner {}",
        syn.lambda, syn.x, syn.s, syn.partner
    );
    Ok(())
}
