//! Fixtures and brute-force oracles shared by the integration tests.
//! Oracles here deliberately avoid the library's own traversal code.

#![allow(dead_code)]

use relmoss::graph::{EdgeSpec, HeteroGraph};
use relmoss::rdb::{Cell, ColumnSpec, Modality, RawEntity, RelationalDatabase, TableSchema};
use relmoss::syn::BankEntry;
use relmoss::tensor::Rng;

/// Lowest-index argmin of `‖x − x'‖² + ω‖s − s'‖²`, skipping `exclude`.
pub fn brute_nearest(bank: &[BankEntry], x: &[f64], s: &[f64], omega: f64, exclude: Option<usize>) -> Option<(usize, f64)> {
    let mut dists = Vec::new();
    for (i, e) in bank.iter().enumerate() {
        if Some(e.node) == exclude {
            continue;
        }
        let mut dx = 0.0;
        for k in 0..x.len() {
            dx += (x[k] - e.x[k]) * (x[k] - e.x[k]);
        }
        let mut ds = 0.0;
        for k in 0..s.len() {
            ds += (s[k] - e.s[k]) * (s[k] - e.s[k]);
        }
        dists.push((i, dx + omega * ds));
    }
    let min = dists.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    dists.into_iter().find(|d| d.1 == min)
}

/// Representation-only SMOTE selector: nearest other minority by squared
/// Euclidean distance, lowest index on ties.
pub fn smote_partner(xs: &[Vec<f64>], anchor: usize) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, x) in xs.iter().enumerate() {
        if j == anchor {
            continue;
        }
        let d: f64 = x.iter().zip(&xs[anchor]).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Random database: 2–4 tables, each with a primary key, a numeric column
/// and 0–2 foreign keys into random tables. Foreign keys include nulls and
/// dangling references.
pub fn random_database(rng: &mut Rng) -> RelationalDatabase {
    let n_tables = 2 + rng.below(3);
    let sizes: Vec<usize> = (0..n_tables).map(|_| 1 + rng.below(12)).collect();
    let mut schemas = Vec::new();
    let mut fk_targets = Vec::new();
    for t in 0..n_tables {
        let mut cols = vec![ColumnSpec::new("id", Modality::PrimaryKey), ColumnSpec::new("v", Modality::Numeric)];
        let mut targets = Vec::new();
        for k in 0..rng.below(3) {
            let dst = rng.below(n_tables);
            cols.push(ColumnSpec::foreign_key(format!("fk{k}"), format!("t{dst}")));
            targets.push(dst);
        }
        schemas.push(TableSchema::new(format!("t{t}"), cols));
        fk_targets.push(targets);
    }
    let mut rows = Vec::new();
    for t in 0..n_tables {
        let mut table = Vec::new();
        for i in 0..sizes[t] {
            let mut cells = vec![Cell::Key(format!("t{t}_{i}")), Cell::Numeric(rng.normal())];
            for &dst in &fk_targets[t] {
                let u = rng.uniform();
                cells.push(if u < 0.1 {
                    Cell::Null
                } else if u < 0.2 {
                    Cell::Key(format!("missing{}", rng.below(5)))
                } else {
                    Cell::Key(format!("t{dst}_{}", rng.below(sizes[dst])))
                });
            }
            table.push(RawEntity::new(cells));
        }
        rows.push(table);
    }
    RelationalDatabase::new(schemas, rows).expect("valid random database")
}

/// Nested-loop join: for every FK column `(table, column, target)` in
/// schema order, the `(child row, parent row)` pairs whose key strings match.
pub fn nested_loop_join(db: &RelationalDatabase) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (t, schema) in db.schemas().iter().enumerate() {
        for (c, col) in schema.columns.iter().enumerate() {
            if col.modality != Modality::ForeignKey {
                continue;
            }
            let dst = db
                .schemas()
                .iter()
                .position(|s| Some(s.name.as_str()) == col.fk_target.as_deref())
                .expect("target table");
            let pk = db.schema(dst).pk_column();
            let mut pairs = Vec::new();
            for (i, child) in db.rows(t).iter().enumerate() {
                for (j, parent) in db.rows(dst).iter().enumerate() {
                    if let (Cell::Key(a), Cell::Key(b)) = (&child.cells[c], &parent.cells[pk]) {
                        if a.trim() == b.trim() {
                            pairs.push((i, j));
                        }
                    }
                }
            }
            out.push(pairs);
        }
    }
    out
}

/// Directed typed edge `(relation, src type, src row, dst type, dst row)`.
pub type TypedEdge = (usize, usize, usize, usize, usize);

/// Random typed graph and its explicit edge list, with relation `2k` the
/// k-th spec and `2k + 1` its reverse.
pub fn random_typed_graph(rng: &mut Rng) -> (HeteroGraph, Vec<TypedEdge>) {
    let n_types = 1 + rng.below(3);
    let counts: Vec<usize> = (0..n_types).map(|_| 1 + rng.below(8)).collect();
    let mut specs = Vec::new();
    let mut edges = Vec::new();
    for k in 0..1 + rng.below(3) {
        let (a, b) = (rng.below(n_types), rng.below(n_types));
        let m = rng.below(3 * counts[a] + 1);
        let list: Vec<(usize, usize)> = (0..m).map(|_| (rng.below(counts[a]), rng.below(counts[b]))).collect();
        for &(u, v) in &list {
            edges.push((2 * k, a, u, b, v));
            edges.push((2 * k + 1, b, v, a, u));
        }
        specs.push(EdgeSpec {
            src_type: a,
            dst_type: b,
            name: format!("r{k}"),
            edges: list,
        });
    }
    let names = (0..n_types).map(|t| format!("T{t}")).collect();
    let g = HeteroGraph::from_edges(names, counts, specs).expect("valid graph");
    (g, edges)
}

fn l1(block: &mut [f64]) {
    let s: f64 = block.iter().sum();
    if s > 0.0 {
        for v in block {
            *v /= s;
        }
    }
}

/// Signature by explicit enumeration of 1- and 2-step walks.
pub fn signature_by_walks(n_types: usize, n_rel: usize, edges: &[TypedEdge], t: usize, v: usize) -> Vec<f64> {
    let mut one = vec![0.0; n_types];
    let mut two = vec![0.0; n_types];
    let mut fan_out = vec![0.0; n_rel];
    let mut fan_in = vec![0.0; n_rel];
    for &(r, st, s, dt, d) in edges {
        if st == t && s == v {
            one[dt] += 1.0;
            fan_out[r] += 1.0;
            for &(_, st2, s2, dt2, _) in edges {
                if st2 == dt && s2 == d {
                    two[dt2] += 1.0;
                }
            }
        }
        if dt == t && d == v {
            fan_in[r] += 1.0;
        }
    }
    for b in [&mut one, &mut two, &mut fan_out, &mut fan_in] {
        l1(b);
    }
    [one, two, fan_out, fan_in].concat()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Plug-in mutual information (nats) between a discrete feature and a label.
pub fn mutual_information(keys: &[String], labels: &[u8]) -> f64 {
    use std::collections::HashMap;
    let n = keys.len() as f64;
    let mut joint: HashMap<(&str, u8), f64> = HashMap::new();
    let mut px: HashMap<&str, f64> = HashMap::new();
    let mut py: HashMap<u8, f64> = HashMap::new();
    for (k, &y) in keys.iter().zip(labels) {
        *joint.entry((k.as_str(), y)).or_default() += 1.0;
        *px.entry(k.as_str()).or_default() += 1.0;
        *py.entry(y).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(k, y), &c)| {
            let p = c / n;
            p * (p / ((px[k] / n) * (py[&y] / n))).ln()
        })
        .sum()
}
