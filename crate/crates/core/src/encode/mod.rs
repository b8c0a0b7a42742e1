//! Per-modality column encoders and the per-table projection to width `d`.
//!
//! Fixed channels (numeric z-score plus missing flag, timestamp scale plus
//! day-of-week sine/cosine) are computed once per row. Categorical columns
//! index learnable embedding tables whose last row is reserved for
//! out-of-vocabulary and null values. A table's concatenated width is
//! `fixed channels ‖ embeddings` in column order within each group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdb::{Cell, Modality, RawEntity, RelationalDatabase, TableSchema};
use crate::tensor::{ParamId, ParamStore, Rng, Tape, Tensor, Var};

const SECONDS_PER_DAY: i64 = 86_400;

/// Fitted statistics for one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnStats {
    Numeric { column: usize, mean: f64, std: f64 },
    Categorical { column: usize, vocab: Vec<String> },
    Timestamp { column: usize, min: i64, max: i64 },
}

impl ColumnStats {
    /// Number of fixed (non-embedding) channels.
    pub fn fixed_width(&self) -> usize {
        match self {
            ColumnStats::Numeric { .. } => 2,
            ColumnStats::Categorical { .. } => 0,
            ColumnStats::Timestamp { .. } => 3,
        }
    }

    /// Row of the embedding table used for `value`; unseen and null map to OOV.
    pub fn category_index(&self, value: Option<&str>) -> usize {
        match self {
            ColumnStats::Categorical { vocab, .. } => value
                .and_then(|v| vocab.binary_search_by(|p| p.as_str().cmp(v)).ok())
                .unwrap_or(vocab.len()),
            _ => 0,
        }
    }

    pub fn oov_index(&self) -> usize {
        match self {
            ColumnStats::Categorical { vocab, .. } => vocab.len(),
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub table: String,
    pub columns: Vec<ColumnStats>,
}

impl TableStats {
    pub fn fixed_width(&self) -> usize {
        let w: usize = self.columns.iter().map(ColumnStats::fixed_width).sum();
        // key-only tables get one constant channel
        if w == 0 && self.num_categorical() == 0 {
            1
        } else {
            w
        }
    }

    pub fn num_categorical(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, ColumnStats::Categorical { .. }))
            .count()
    }

    pub fn concat_width(&self, d_cat: usize) -> usize {
        self.fixed_width() + d_cat * self.num_categorical()
    }
}

/// Training-split statistics for every table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub tables: Vec<TableStats>,
}

/// Fits per-column statistics on the rows selected by `train_mask[t]`.
///
/// Zero-variance numeric columns get `std = 1`. A table with no selected
/// rows gets identity statistics (mean 0, std 1, empty vocabulary).
pub fn fit_statistics(db: &RelationalDatabase, train_mask: &[Vec<bool>]) -> Result<FeatureStats> {
    if train_mask.len() != db.num_tables() {
        return Err(Error::InvalidArgument(format!(
            "train mask covers {} tables, database has {}",
            train_mask.len(),
            db.num_tables()
        )));
    }
    let mut tables = Vec::with_capacity(db.num_tables());
    for (t, schema) in db.schemas().iter().enumerate() {
        let mask = &train_mask[t];
        if mask.len() != db.num_rows(t) {
            return Err(Error::InvalidArgument(format!(
                "train mask for `{}` has {} entries, table has {} rows",
                schema.name,
                mask.len(),
                db.num_rows(t)
            )));
        }
        let rows: Vec<&RawEntity> = db.rows(t).iter().zip(mask).filter(|(_, &m)| m).map(|(r, _)| r).collect();
        if rows.is_empty() {
            log::warn!("table `{}` has no training rows; using identity statistics", schema.name);
        }
        tables.push(fit_table(schema, &rows));
    }
    Ok(FeatureStats { tables })
}

fn fit_table(schema: &TableSchema, rows: &[&RawEntity]) -> TableStats {
    let mut columns = Vec::new();
    for (c, spec) in schema.columns.iter().enumerate() {
        match spec.modality {
            Modality::PrimaryKey | Modality::ForeignKey => {}
            Modality::Numeric => {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter_map(|r| match r.cells[c] {
                        Cell::Numeric(v) => Some(v),
                        _ => None,
                    })
                    .collect();
                let (mean, std) = mean_std(&vals);
                columns.push(ColumnStats::Numeric { column: c, mean, std });
            }
            Modality::Categorical => {
                let mut vocab: Vec<String> = rows
                    .iter()
                    .filter_map(|r| match &r.cells[c] {
                        Cell::Categorical(s) => Some(s.clone()),
                        _ => None,
                    })
                    .collect();
                vocab.sort();
                vocab.dedup();
                columns.push(ColumnStats::Categorical { column: c, vocab });
            }
            Modality::Timestamp => {
                let ts = rows.iter().filter_map(|r| match r.cells[c] {
                    Cell::Timestamp(t) => Some(t),
                    _ => None,
                });
                let (min, max) = ts.fold((i64::MAX, i64::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
                let (min, max) = if min > max { (0, 0) } else { (min, max) };
                columns.push(ColumnStats::Timestamp { column: c, min, max });
            }
        }
    }
    TableStats {
        table: schema.name.clone(),
        columns,
    }
}

/// Population mean and standard deviation; std floored to 1 when zero.
fn mean_std(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 1.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// Fixed channels and embedding indices for a set of rows of one table.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRows {
    pub fixed: Tensor,
    /// `cat_idx[k][i]`: embedding row for categorical column `k`, entity `i`.
    pub cat_idx: Vec<Vec<usize>>,
}

impl PreparedRows {
    pub fn len(&self) -> usize {
        self.fixed.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.rows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> PreparedRows {
        PreparedRows {
            fixed: self.fixed.select_rows(rows),
            cat_idx: self
                .cat_idx
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
        }
    }
}

fn mismatch(stats: &TableStats, column: usize, expected: &str, cell: &Cell) -> Error {
    Error::Schema(format!(
        "table `{}` column {column}: expected {expected} cell, found {cell:?}",
        stats.table
    ))
}

/// Day of week with Monday = 0.
fn day_of_week(t: i64) -> i64 {
    // 1970-01-01 was a Thursday
    (t.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7)
}

/// Computes the non-learned part of the encoding.
pub fn prepare_rows(stats: &TableStats, rows: &[RawEntity]) -> Result<PreparedRows> {
    let width = stats.fixed_width();
    let key_only = stats.columns.iter().all(|c| c.fixed_width() == 0) && stats.num_categorical() == 0;
    let mut fixed = Tensor::zeros(rows.len(), width);
    let mut cat_idx = vec![Vec::with_capacity(rows.len()); stats.num_categorical()];
    for (i, row) in rows.iter().enumerate() {
        let out = fixed.row_mut(i);
        if key_only {
            out[0] = 1.0;
            continue;
        }
        let (mut off, mut k) = (0, 0);
        for col in &stats.columns {
            match *col {
                ColumnStats::Numeric { column, mean, std } => {
                    match &row.cells[column] {
                        Cell::Numeric(v) => out[off] = (v - mean) / std,
                        Cell::Null => out[off + 1] = 1.0,
                        other => return Err(mismatch(stats, column, "numeric", other)),
                    }
                    off += 2;
                }
                ColumnStats::Timestamp { column, min, max } => {
                    match &row.cells[column] {
                        Cell::Timestamp(t) => {
                            out[off] = if max > min {
                                (*t - min) as f64 / (max - min) as f64
                            } else {
                                0.5
                            };
                            let angle = 2.0 * std::f64::consts::PI * day_of_week(*t) as f64 / 7.0;
                            out[off + 1] = angle.sin();
                            out[off + 2] = angle.cos();
                        }
                        Cell::Null => out[off] = 0.5,
                        other => return Err(mismatch(stats, column, "timestamp", other)),
                    }
                    off += 3;
                }
                ColumnStats::Categorical { column, .. } => {
                    let value = match &row.cells[column] {
                        Cell::Categorical(s) => Some(s.as_str()),
                        Cell::Null => None,
                        other => return Err(mismatch(stats, column, "categorical", other)),
                    };
                    cat_idx[k].push(col.category_index(value));
                    k += 1;
                }
            }
        }
    }
    Ok(PreparedRows { fixed, cat_idx })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d: usize,
    pub d_cat: usize,
    /// Number of linear + ReLU layers in the projection.
    pub proj_layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d: 128,
            d_cat: 16,
            proj_layers: 1,
        }
    }
}

/// Learnable parameters of one table's encoder.
#[derive(Clone, Debug)]
pub struct TableEncoder {
    pub stats: TableStats,
    pub embeddings: Vec<ParamId>,
    pub layers: Vec<(ParamId, ParamId)>,
}

impl TableEncoder {
    pub fn new(stats: TableStats, cfg: &EncoderConfig, store: &mut ParamStore, rng: &mut Rng) -> Self {
        let name = stats.table.clone();
        let embeddings = stats
            .columns
            .iter()
            .filter(|c| matches!(c, ColumnStats::Categorical { .. }))
            .map(|c| {
                let ColumnStats::Categorical { column, vocab } = c else { unreachable!() };
                store.add(
                    format!("enc.{name}.emb.{column}"),
                    Tensor::glorot(vocab.len() + 1, cfg.d_cat, rng),
                )
            })
            .collect();
        let mut width = stats.concat_width(cfg.d_cat);
        let mut layers = Vec::new();
        for l in 0..cfg.proj_layers.max(1) {
            let w = store.add(format!("enc.{name}.proj{l}.w"), Tensor::glorot(width, cfg.d, rng));
            let b = store.add(format!("enc.{name}.proj{l}.b"), Tensor::zeros(1, cfg.d));
            layers.push((w, b));
            width = cfg.d;
        }
        TableEncoder {
            stats,
            embeddings,
            layers,
        }
    }

    /// Records the encoding of `rows` on `tape`; output is `n × d`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, rows: &PreparedRows) -> Result<Var> {
        let mut parts = vec![tape.constant(rows.fixed.clone())];
        for (emb, idx) in self.embeddings.iter().zip(&rows.cat_idx) {
            let table = tape.param(store, *emb);
            parts.push(tape.gather_rows(table, idx.clone())?);
        }
        let mut h = if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts)? };
        for &(w, b) in &self.layers {
            let (w, b) = (tape.param(store, w), tape.param(store, b));
            let z = tape.matmul(h, w)?;
            let z = tape.add_row(z, b)?;
            h = tape.relu(z);
        }
        Ok(h)
    }
}

/// Encoders for every table plus pre-computed fixed channels for all rows.
#[derive(Clone, Debug)]
pub struct FeatureEncoder {
    pub config: EncoderConfig,
    pub tables: Vec<TableEncoder>,
    prepared: Vec<PreparedRows>,
}

impl FeatureEncoder {
    pub fn new(
        db: &RelationalDatabase,
        stats: FeatureStats,
        cfg: EncoderConfig,
        store: &mut ParamStore,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut tables = Vec::new();
        let mut prepared = Vec::new();
        for (t, ts) in stats.tables.into_iter().enumerate() {
            prepared.push(prepare_rows(&ts, db.rows(t))?);
            tables.push(TableEncoder::new(ts, &cfg, store, rng));
        }
        Ok(FeatureEncoder {
            config: cfg,
            tables,
            prepared,
        })
    }

    pub fn stats(&self) -> FeatureStats {
        FeatureStats {
            tables: self.tables.iter().map(|t| t.stats.clone()).collect(),
        }
    }

    /// Encodes the given rows of table `t`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, t: usize, rows: &[usize]) -> Result<Var> {
        let sel = self.prepared[t].select(rows);
        self.tables[t].forward(tape, store, &sel)
    }

    /// Encodes a mixed list of `(type, row)` nodes, preserving order.
    pub fn encode_nodes(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        nodes: &[crate::graph::NodeRef],
    ) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for t in 0..self.tables.len() {
            let pos: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].type_id == t).collect();
            if pos.is_empty() {
                continue;
            }
            let rows: Vec<usize> = pos.iter().map(|&i| nodes[i].row_id).collect();
            let x = self.encode(tape, store, t, &rows)?;
            let placed = if pos.len() == nodes.len() {
                x
            } else {
                tape.scatter_rows(x, pos, nodes.len())?
            };
            acc = Some(match acc {
                None => placed,
                Some(a) => tape.add(a, placed)?,
            });
        }
        acc.ok_or_else(|| Error::InvalidArgument("no nodes to encode".into()))
    }
}

/// Plain encoding of raw rows with the current parameter values.
pub fn encode_entities(encoder: &TableEncoder, store: &ParamStore, rows: &[RawEntity]) -> Result<Tensor> {
    let prepared = prepare_rows(&encoder.stats, rows)?;
    let mut tape = Tape::new();
    let out = encoder.forward(&mut tape, store, &prepared)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdb::{ColumnSpec, TableSchema};

    fn schema() -> TableSchema {
        TableSchema::new(
            "t",
            vec![
                ColumnSpec::new("id", Modality::PrimaryKey),
                ColumnSpec::new("a", Modality::Numeric),
                ColumnSpec::new("b", Modality::Numeric),
                ColumnSpec::new("c", Modality::Categorical),
                ColumnSpec::new("ts", Modality::Timestamp),
            ],
        )
    }

    fn row(id: &str, a: Cell, b: Cell, c: Cell, ts: Cell) -> RawEntity {
        RawEntity::new(vec![Cell::Key(id.into()), a, b, c, ts])
    }

    fn db(rows: Vec<RawEntity>) -> RelationalDatabase {
        RelationalDatabase::new(vec![schema()], vec![rows]).unwrap()
    }

    fn cat(s: &str) -> Cell {
        Cell::Categorical(s.into())
    }

    #[test]
    fn constant_column_gets_unit_std() {
        let rows = (0..4)
            .map(|i| row(&i.to_string(), Cell::Numeric(5.0), Cell::Null, cat("a"), Cell::Null))
            .collect();
        let s = fit_statistics(&db(rows), &[vec![true; 4]]).unwrap();
        assert_eq!(s.tables[0].columns[0], ColumnStats::Numeric { column: 1, mean: 5.0, std: 1.0 });
    }

    #[test]
    fn unseen_category_maps_to_oov() {
        let rows = vec![
            row("0", Cell::Null, Cell::Null, cat("a"), Cell::Null),
            row("1", Cell::Null, Cell::Null, cat("b"), Cell::Null),
            row("2", Cell::Null, Cell::Null, cat("c"), Cell::Null),
        ];
        let d = db(rows);
        let s = fit_statistics(&d, &[vec![true, true, false]]).unwrap();
        let col = &s.tables[0].columns[2];
        assert_eq!(col.category_index(Some("a")), 0);
        assert_eq!(col.category_index(Some("b")), 1);
        assert_eq!(col.category_index(Some("c")), col.oov_index());
        assert_eq!(col.oov_index(), 2);
        let p = prepare_rows(&s.tables[0], d.rows(0)).unwrap();
        assert_eq!(p.cat_idx[0], vec![0, 1, 2]);
    }

    #[test]
    fn two_pass_mean_std_and_train_only() {
        let mut rng = Rng::new(4);
        let vals: Vec<f64> = (0..50).map(|_| rng.normal() * 3.0 + 1.0).collect();
        let rows = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| row(&i.to_string(), Cell::Numeric(v), Cell::Null, Cell::Null, Cell::Null))
            .collect();
        let d = db(rows);
        let mask: Vec<bool> = (0..50).map(|i| i % 3 != 0).collect();
        let s = fit_statistics(&d, std::slice::from_ref(&mask)).unwrap();
        let train: Vec<f64> = vals.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
        let mut sum = 0.0;
        for v in &train {
            sum += v;
        }
        let mean = sum / train.len() as f64;
        let mut ss = 0.0;
        for v in &train {
            ss += (v - mean).powi(2);
        }
        let std = (ss / train.len() as f64).sqrt();
        let ColumnStats::Numeric { mean: m, std: sd, .. } = s.tables[0].columns[0] else { panic!() };
        assert!((m - mean).abs() < 1e-12 && (sd - std).abs() < 1e-12);
        assert_eq!(fit_statistics(&d, &[mask]).unwrap(), s);
    }

    #[test]
    fn mean_value_encodes_to_zero_and_nulls_are_flagged() {
        let rows = vec![
            row("0", Cell::Numeric(1.0), Cell::Numeric(2.0), cat("x"), Cell::Timestamp(0)),
            row("1", Cell::Numeric(3.0), Cell::Numeric(2.0), cat("y"), Cell::Timestamp(100)),
            row("2", Cell::Null, Cell::Null, Cell::Null, Cell::Null),
        ];
        let d = db(rows);
        let s = fit_statistics(&d, &[vec![true, true, false]]).unwrap();
        let mid = row("m", Cell::Numeric(2.0), Cell::Numeric(2.0), cat("x"), Cell::Timestamp(50));
        let p = prepare_rows(&s.tables[0], &[mid]).unwrap();
        assert_eq!(p.fixed.get(0, 0), 0.0);
        assert_eq!(p.fixed.get(0, 4), 0.5);
        let p = prepare_rows(&s.tables[0], &d.rows(0)[2..]).unwrap();
        // all-imputed row: z = 0 with flag 1 for both numerics, mid-range time, OOV category
        assert_eq!(p.fixed.row(0), &[0.0, 1.0, 0.0, 1.0, 0.5, 0.0, 0.0]);
        assert_eq!(p.cat_idx[0], vec![2]);
    }

    #[test]
    fn concat_width_and_output_shape() {
        let rows = vec![row("0", Cell::Numeric(1.0), Cell::Numeric(2.0), cat("x"), Cell::Timestamp(0))];
        let d = db(rows);
        let s = fit_statistics(&d, &[vec![true]]).unwrap();
        assert_eq!(s.tables[0].concat_width(16), 23);
        let mut store = ParamStore::new();
        let enc = TableEncoder::new(s.tables[0].clone(), &EncoderConfig::default(), &mut store, &mut Rng::new(0));
        assert_eq!(store.value(enc.layers[0].0).shape(), [23, 128]);
        let out = encode_entities(&enc, &store, d.rows(0)).unwrap();
        assert_eq!(out.shape(), [1, 128]);
    }

    #[test]
    fn modality_mismatch_is_an_error() {
        let rows = vec![row("0", Cell::Numeric(1.0), Cell::Null, Cell::Null, Cell::Null)];
        let s = fit_statistics(&db(rows), &[vec![true]]).unwrap();
        let bad = row("1", cat("oops"), Cell::Null, Cell::Null, Cell::Null);
        assert!(matches!(prepare_rows(&s.tables[0], &[bad]), Err(Error::Schema(_))));
    }

    #[test]
    fn day_of_week_anchor() {
        assert_eq!(day_of_week(0), 3);
        assert_eq!(day_of_week(4 * SECONDS_PER_DAY), 0);
        assert_eq!(day_of_week(-SECONDS_PER_DAY), 2);
    }

    #[test]
    fn key_only_table_gets_constant_channel() {
        let t = TableSchema::new("k", vec![ColumnSpec::new("id", Modality::PrimaryKey)]);
        let d = RelationalDatabase::new(vec![t], vec![vec![RawEntity::new(vec![Cell::Key("a".into())])]]).unwrap();
        let s = fit_statistics(&d, &[vec![true]]).unwrap();
        let p = prepare_rows(&s.tables[0], d.rows(0)).unwrap();
        assert_eq!(p.fixed.data(), &[1.0]);
    }
}
