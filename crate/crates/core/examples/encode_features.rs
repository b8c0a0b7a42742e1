//! Per-table feature statistics and encodings.

use relmoss::encode::{fit_statistics, EncoderConfig, FeatureEncoder};
use relmoss::synthgen::{generate, SynthConfig};
use relmoss::tensor::{ParamStore, Rng, Tape};

fn main() -> relmoss::Result<()> {
    let ds = generate(&SynthConfig {
        num_users: 100,
        num_items: 20,
        ..SynthConfig::default()
    })?;
    let db = &ds.db;
    // Statistics come from training rows only on the target table.
    let stats = fit_statistics(db, &ds.task.train_mask(db))?;
    let cfg = EncoderConfig {
        d: 8,
        d_cat: 4,
        proj_layers: 1,
    };
    for ts in &stats.tables {
        println!(
            "{:<14} fixed width {:>2}, {} categorical, concat width {}",
            ts.table,
            ts.fixed_width(),
            ts.num_categorical(),
            ts.concat_width(cfg.d_cat)
        );
    }
    let mut store = ParamStore::new();
    let enc = FeatureEncoder::new(db, stats, cfg, &mut store, &mut Rng::new(0))?;
    let mut tape = Tape::new();
    let x = enc.encode(&mut tape, &store, 0, &[0, 1, 2])?;
    let x = tape.value(x);
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("{}: [{}]", db.primary_key(0, i), row.join(", "));
    }
    println!("{} encoder parameters", store.num_scalars());
    Ok(())
}
