//! Energy distance between true minority signatures and synthetic ones,
//! probed with and without the signature term.

use relmoss::cli::{consistency_probe, load_data, ConsistencyConfig, RunConfig};
use relmoss::synthgen::SynthConfig;
use relmoss::train::{RelMoss, TrainConfig};

fn main() -> relmoss::Result<()> {
    let cfg = RunConfig {
        synth: Some(SynthConfig {
            num_users: 600,
            num_items: 80,
            ..SynthConfig::default()
        }),
        train: TrainConfig {
            epochs: 5,
            d: 32,
            batch_size: 128,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    };
    let data = load_data(&cfg)?;
    let mut model = RelMoss::new(&data.db, &data.graph, &data.task, cfg.train.clone())?;
    model.fit(&data.graph, &data.task)?;
    let s = consistency_probe(
        &data,
        &model,
        &ConsistencyConfig {
            permutations: 50,
            ..ConsistencyConfig::default()
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(())
}
