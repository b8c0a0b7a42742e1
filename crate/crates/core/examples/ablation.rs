//! Full model against its three ablations on a reduced benchmark.
//!
//! cargo run --release --example ablation -- [num_users] [epochs]

use relmoss::cli::{ablation_variants, load_data, train_model, RunConfig};
use relmoss::synthgen::SynthConfig;
use relmoss::train::{Split, TrainConfig};

fn main() -> relmoss::Result<()> {
    let mut args = std::env::args().skip(1);
    let num_users = args.next().map_or(1000, |v| v.parse().expect("num_users"));
    let epochs = args.next().map_or(10, |v| v.parse().expect("epochs"));
    let cfg = RunConfig {
        synth: Some(SynthConfig {
            num_users,
            ..SynthConfig::default()
        }),
        ..RunConfig::default()
    };
    let data = load_data(&cfg)?;
    let base = TrainConfig {
        epochs,
        batch_size: 256,
        ..TrainConfig::default()
    };
    println!("variant,b_acc,g_mean");
    for (name, tc) in ablation_variants(&base) {
        let (m, _) = train_model(&data, tc)?;
        let r = m.evaluate(&data.graph, &data.task, Split::Test, m.epoch())?;
        println!("{name},{:.4},{:.4}", r.b_acc, r.g_mean);
    }
    Ok(())
}
