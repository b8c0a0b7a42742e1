//! Property tests over the public API.

mod common;

use std::collections::VecDeque;

use proptest::prelude::*;
use relmoss::graph::{build_graph, NodeRef};
use relmoss::rdb::{load_database, write_database, Cell, ColumnSpec, Modality, RawEntity, RelationalDatabase, TableSchema};
use relmoss::syn::{compute_signature, nearest_minority, signature_blocks, BankEntry, MemoryBank};
use relmoss::tensor::Rng;
use relmoss::train::{balanced_accuracy, g_mean, ConfusionMatrix};

fn cell_for(modality: Modality) -> BoxedStrategy<Cell> {
    match modality {
        Modality::Numeric => prop_oneof![
            1 => Just(Cell::Null),
            5 => (-1e6..1e6f64).prop_map(Cell::Numeric),
        ]
        .boxed(),
        Modality::Categorical => prop_oneof![
            1 => Just(Cell::Null),
            5 => "[a-z][a-z0-9 ]{0,6}[a-z]".prop_map(Cell::Categorical),
        ]
        .boxed(),
        Modality::Timestamp => prop_oneof![
            1 => Just(Cell::Null),
            5 => (-1_000_000_000i64..2_000_000_000).prop_map(Cell::Timestamp),
        ]
        .boxed(),
        _ => unreachable!(),
    }
}

/// Two tables, `a` and `b`, where `b` references `a`.
fn database() -> impl Strategy<Value = RelationalDatabase> {
    let kinds = [Modality::Numeric, Modality::Categorical, Modality::Timestamp];
    (1usize..6, 0usize..8, prop::sample::select(kinds.to_vec()), prop::sample::select(kinds.to_vec()))
        .prop_flat_map(move |(na, nb, ma, mb)| {
            let a_cells = prop::collection::vec(cell_for(ma), na);
            let b_cells = prop::collection::vec(cell_for(mb), nb);
            let fks = prop::collection::vec(prop::option::of(0..na + 2), nb);
            (Just((ma, mb)), a_cells, b_cells, fks)
        })
        .prop_map(|((ma, mb), a_cells, b_cells, fks)| {
            let a = TableSchema::new("a", vec![ColumnSpec::new("id", Modality::PrimaryKey), ColumnSpec::new("va", ma)]);
            let b = TableSchema::new(
                "b",
                vec![
                    ColumnSpec::new("id", Modality::PrimaryKey),
                    ColumnSpec::foreign_key("a_id", "a"),
                    ColumnSpec::new("vb", mb),
                ],
            );
            let rows_a = a_cells
                .into_iter()
                .enumerate()
                .map(|(i, c)| RawEntity::new(vec![Cell::Key(format!("a{i}")), c]))
                .collect();
            let rows_b = b_cells
                .into_iter()
                .zip(fks)
                .enumerate()
                .map(|(i, (c, fk))| {
                    let fk = fk.map_or(Cell::Null, |k| Cell::Key(format!("a{k}")));
                    RawEntity::new(vec![Cell::Key(format!("b{i}")), fk, c])
                })
                .collect();
            RelationalDatabase::new(vec![a, b], vec![rows_a, rows_b]).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn database_survives_csv_round_trip(db in database()) {
        let dir = tempfile::tempdir().unwrap();
        write_database(&db, dir.path()).unwrap();
        let back = load_database(&dir.path().join("manifest.json"), dir.path()).unwrap();
        prop_assert_eq!(back.schemas(), db.schemas());
        for t in 0..db.num_tables() {
            prop_assert_eq!(back.rows(t), db.rows(t));
        }
        prop_assert_eq!(back.parse_warnings(), 0);
    }

    #[test]
    fn g_mean_never_exceeds_b_acc(tp in 0usize..500, fn_ in 0usize..500, tn in 0usize..500, fp in 0usize..500) {
        let cm = ConfusionMatrix::new(tp, fn_, tn, fp);
        let (ba, gm) = (balanced_accuracy(&cm), g_mean(&cm));
        prop_assert!(gm <= ba + 1e-15);
        prop_assert!((0.0..=1.0).contains(&ba) && (0.0..=1.0).contains(&gm));
    }

    #[test]
    fn bank_keeps_the_newest_entries(cap in 1usize..20, batches in prop::collection::vec(0usize..9, 1..30)) {
        let mut bank = MemoryBank::new(cap, 1, 1).unwrap();
        let mut model = VecDeque::new();
        let mut next = 0;
        for k in batches {
            let entries: Vec<BankEntry> = (next..next + k).map(|i| BankEntry { x: vec![i as f64], s: vec![0.0], node: i }).collect();
            bank.push(entries).unwrap();
            for i in next..next + k {
                model.push_back(i);
                if model.len() > cap {
                    model.pop_front();
                }
            }
            next += k;
            let got: Vec<usize> = bank.iter().map(|e| e.node).collect();
            prop_assert_eq!(got, model.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn nearest_minority_matches_scan(seed in any::<u64>(), omega in 0.0..100.0f64) {
        let mut rng = Rng::new(seed);
        let mut bank = MemoryBank::new(16, 3, 2).unwrap();
        let n = 1 + rng.below(16);
        bank.push((0..n).map(|i| BankEntry {
            x: (0..3).map(|_| rng.below(3) as f64).collect(),
            s: (0..2).map(|_| rng.uniform()).collect(),
            node: i,
        })).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.below(3) as f64).collect();
        let s: Vec<f64> = (0..2).map(|_| rng.uniform()).collect();
        let contents: Vec<BankEntry> = bank.iter().cloned().collect();
        let exclude = Some(rng.below(n));
        prop_assert_eq!(nearest_minority(&bank, &x, &s, omega, exclude).ok(), common::brute_nearest(&contents, &x, &s, omega, exclude));
    }

    #[test]
    fn signatures_match_walks_and_are_normalised(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let (g, edges) = common::random_typed_graph(&mut rng);
        let blocks = signature_blocks(&g);
        for t in 0..g.num_types() {
            for v in 0..g.num_nodes(t) {
                let sig = compute_signature(&g, NodeRef::new(t, v));
                let want = common::signature_by_walks(g.num_types(), g.num_relations(), &edges, t, v);
                prop_assert!(common::rel_err(&sig, &want) <= 1e-12);
                for b in blocks.iter() {
                    let sum: f64 = sig[b.clone()].iter().sum();
                    prop_assert!(sum == 0.0 || (sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn adjacency_matches_join(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let db = common::random_database(&mut rng);
        let g = build_graph(&db);
        for (k, mut want) in common::nested_loop_join(&db).into_iter().enumerate() {
            let fwd = g.adjacency(2 * k);
            let mut got: Vec<(usize, usize)> = (0..fwd.num_rows()).flat_map(|u| fwd.row(u).iter().map(move |&v| (u, v))).collect();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
        }
    }
}
