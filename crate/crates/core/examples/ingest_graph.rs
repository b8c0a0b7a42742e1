//! Loads a database from a manifest, checks foreign keys and builds the graph.
//!
//! cargo run --example ingest_graph -- [manifest.json]
//! Without an argument a small synthetic database is written to a temp dir first.

use std::path::PathBuf;

use relmoss::graph::{build_graph, NodeRef};
use relmoss::rdb::{load_database, validate_referential_integrity};
use relmoss::synthgen::{generate, SynthConfig};

fn main() -> relmoss::Result<()> {
    let tmp = std::env::temp_dir().join("relmoss-ingest-example");
    let manifest = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let cfg = SynthConfig {
                num_users: 200,
                num_items: 30,
                ..SynthConfig::default()
            };
            generate(&cfg)?.write(&tmp)?;
            tmp.join("manifest.json")
        }
    };
    let dir = manifest.parent().unwrap_or(std::path::Path::new(".")).to_path_buf();
    let db = load_database(&manifest, &dir)?;
    for (t, s) in db.schemas().iter().enumerate() {
        println!("{:<14} {:>6} rows  {} columns", s.name, db.num_rows(t), s.columns.len());
    }
    let report = validate_referential_integrity(&db);
    println!("{}", serde_json::to_string_pretty(&report)?);

    let g = build_graph(&db);
    for r in 0..g.num_relations() {
        println!("relation {r}: {:<40} {} edges", g.relation_name(r), g.num_edges(r));
    }
    // Relation ids come in pairs: 2k follows the key, 2k+1 goes back.
    let user = NodeRef::new(0, 0);
    for rel in g.relations_from(0) {
        println!("{} -> {} neighbours via {}", db.primary_key(0, 0), g.neighbor_rows(user, rel.rel_id)?.len(), g.relation_name(rel.rel_id));
    }
    Ok(())
}
