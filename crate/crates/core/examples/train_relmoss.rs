//! Trains on the synthetic benchmark and prints per-epoch validation metrics.
//!
//! cargo run --release --example train_relmoss -- [epochs] [seed]

use relmoss::graph::build_graph;
use relmoss::synthgen::{generate, SynthConfig};
use relmoss::train::{RelMoss, Split, TrainConfig};

fn main() -> relmoss::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(10, |v| v.parse().expect("epochs"));
    let seed = args.next().map_or(0, |v| v.parse().expect("seed"));
    let ds = generate(&SynthConfig::default())?;
    let graph = build_graph(&ds.db);
    let cfg = TrainConfig {
        epochs,
        seed,
        batch_size: 256,
        ..TrainConfig::default()
    };
    let mut model = RelMoss::new(&ds.db, &graph, &ds.task, cfg)?;
    let outcome = model.fit(&graph, &ds.task)?;
    for h in &outcome.history {
        let v = h.val.as_ref().expect("validation split");
        println!(
            "epoch {:>3} loss {:.4} synthetic {:>4} val g_mean {:.4} b_acc {:.4}",
            h.epoch, h.loss, h.n_synthetic, v.g_mean, v.b_acc
        );
    }
    let test = model.evaluate(&graph, &ds.task, Split::Test, model.epoch())?;
    println!("selected epoch {:?}", outcome.selected_epoch);
    println!("test g_mean {:.4} b_acc {:.4} (tpr {:.4}, tnr {:.4})", test.g_mean, test.b_acc, test.tpr(), test.tnr());
    Ok(())
}
