//! Generates the star-schema benchmark and writes it to a directory.
//!
//! cargo run --example synth_data -- [out_dir] [num_users] [imbalance_ratio]

use relmoss::synthgen::{describe, generate, SynthConfig};

fn main() -> relmoss::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synth-out".into());
    let mut cfg = SynthConfig::default();
    if let Some(n) = args.next() {
        cfg.num_users = n.parse().expect("num_users");
    }
    if let Some(r) = args.next() {
        cfg.imbalance_ratio = r.parse().expect("imbalance_ratio");
    }
    println!("{}", describe(&cfg));
    let ds = generate(&cfg)?;
    ds.write(std::path::Path::new(&out))?;
    println!("wrote {} rows to {out}", ds.db.total_rows());
    Ok(())
}
