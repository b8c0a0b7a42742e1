//! Synthetic star-schema databases whose labels are planted in relational
//! structure while raw features are label-independent noise.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdb::{write_database, Cell, ColumnSpec, Modality, RawEntity, RelationalDatabase, TableSchema};
use crate::tensor::Rng;
use crate::train::{Split, Task};

pub const USERS: &str = "users";
pub const ITEMS: &str = "items";
pub const INTERACTIONS: &str = "interactions";
pub const RARE_CATEGORY: &str = "rare";
const DAY0: i64 = 1_609_459_200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Number of common item categories (the rare one comes on top).
    pub num_common_categories: usize,
    /// Fraction of items in the rare category.
    pub rare_item_fraction: f64,
    /// Requested `#majority / #minority` among users.
    pub imbalance_ratio: f64,
    /// A user is minority iff its interactions reach at least this many
    /// distinct rare-category items.
    pub min_rare_items: usize,
    /// Interaction counts follow `P(k) ∝ k^-degree_exponent` on
    /// `[min_degree, max_degree]`.
    pub min_degree: usize,
    pub max_degree: usize,
    pub degree_exponent: f64,
    /// Rare-interaction share for users with the "high" and "low" latent
    /// affinity.
    pub rare_share_high: f64,
    pub rare_share_low: f64,
    /// Probability of high affinity for minority and majority users.
    pub high_affinity_minority: f64,
    pub high_affinity_majority: f64,
    /// Mean per-user probability that an interaction with a common item
    /// has a null item reference.
    pub null_item_rate: f64,
    /// Concentration `a + b` of the per-user Beta distribution of that
    /// probability; small values spread users apart.
    pub null_rate_concentration: f64,
    /// Scale of the continuous noise columns (user age, item price).
    pub feature_noise: f64,
    pub label_noise: f64,
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 2000,
            num_items: 200,
            num_common_categories: 5,
            rare_item_fraction: 0.1,
            imbalance_ratio: 10.0,
            min_rare_items: 2,
            min_degree: 10,
            max_degree: 40,
            degree_exponent: 1.5,
            rare_share_high: 0.5,
            rare_share_low: 0.05,
            high_affinity_minority: 0.8,
            high_affinity_majority: 0.2,
            null_item_rate: 0.25,
            null_rate_concentration: 2.0,
            feature_noise: 1.0,
            label_noise: 0.0,
            split_fractions: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_rare_items(&self) -> usize {
        ((self.rare_item_fraction * self.num_items as f64).round() as usize).max(self.min_rare_items)
    }

    pub fn num_minority(&self) -> usize {
        (self.num_users as f64 / (1.0 + self.imbalance_ratio)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return bad("imbalance_ratio must be finite and >= 1".into());
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_fractions.iter().any(|&f| f < 0.0) {
            return bad("split_fractions must be non-negative and sum to 1".into());
        }
        if self.min_rare_items == 0 {
            return bad("min_rare_items must be >= 1".into());
        }
        if self.min_degree < self.min_rare_items || self.max_degree < self.min_degree {
            return bad("need min_rare_items <= min_degree <= max_degree".into());
        }
        if !(self.null_rate_concentration > 0.0 && self.null_rate_concentration.is_finite()) {
            return bad("null_rate_concentration must be positive".into());
        }
        if self.num_common_categories == 0 {
            return bad("num_common_categories must be >= 1".into());
        }
        if self.num_rare_items() >= self.num_items {
            return bad("rare items leave no common items".into());
        }
        for (name, p) in [
            ("rare_share_high", self.rare_share_high),
            ("rare_share_low", self.rare_share_low),
            ("high_affinity_minority", self.high_affinity_minority),
            ("high_affinity_majority", self.high_affinity_majority),
            ("null_item_rate", self.null_item_rate),
            ("label_noise", self.label_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.feature_noise >= 0.0 && self.degree_exponent.is_finite()) {
            return bad("feature_noise must be >= 0".into());
        }
        let n_min = self.num_minority();
        if n_min == 0 || n_min >= self.num_users {
            return bad(format!(
                "imbalance ratio {} is infeasible with {} users",
                self.imbalance_ratio, self.num_users
            ));
        }
        let achieved = (self.num_users - n_min) as f64 / n_min as f64;
        if (achieved / self.imbalance_ratio - 1.0).abs() > 0.1 {
            return bad(format!(
                "imbalance ratio {} is infeasible with {} users (closest is {achieved:.3})",
                self.imbalance_ratio, self.num_users
            ));
        }
        Ok(())
    }
}

/// Generated database plus user labels and splits.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub db: RelationalDatabase,
    pub task: Task,
    pub config: SynthConfig,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut root = Rng::new(cfg.seed);
    let mut rng = root.fork(11);
    let mut feat_rng = root.fork(12);

    let n_users = cfg.num_users;
    let n_rare = cfg.num_rare_items();
    let n_common = cfg.num_items - n_rare;
    // Items 0..n_rare are rare, the rest cycle through the common categories.
    let item_rows: Vec<RawEntity> = (0..cfg.num_items)
        .map(|i| {
            let cat = if i < n_rare {
                RARE_CATEGORY.to_string()
            } else {
                format!("c{}", (i - n_rare) % cfg.num_common_categories)
            };
            RawEntity::new(vec![
                Cell::Key(format!("i{i}")),
                Cell::Categorical(cat),
                Cell::Numeric(cfg.feature_noise * feat_rng.normal()),
            ])
        })
        .collect();

    let mut order: Vec<usize> = (0..n_users).collect();
    rng.shuffle(&mut order);
    let mut minority = vec![false; n_users];
    for &u in &order[..cfg.num_minority()] {
        minority[u] = true;
    }

    let degree_cdf = power_law_cdf(cfg.min_degree, cfg.max_degree, cfg.degree_exponent);
    let mut user_rows = Vec::with_capacity(n_users);
    let mut inter_rows = Vec::new();
    for u in 0..n_users {
        user_rows.push(RawEntity::new(vec![
            Cell::Key(format!("u{u}")),
            Cell::Numeric((40.0 + 10.0 * cfg.feature_noise * feat_rng.normal()).round()),
            Cell::Categorical(format!("r{}", feat_rng.below(4))),
        ]));
        let k = cfg.min_degree + draw_cdf(&degree_cdf, rng.uniform());
        let p_high = if minority[u] {
            cfg.high_affinity_minority
        } else {
            cfg.high_affinity_majority
        };
        let share = if rng.bernoulli(p_high) {
            cfg.rare_share_high
        } else {
            cfg.rare_share_low
        };
        // Both classes get at least `m` rare interactions; majority users
        // spread theirs over fewer than `m` distinct items.
        let m = cfg.min_rare_items;
        let mut r = (0..k).filter(|_| rng.bernoulli(share)).count().max(m);
        let mut targets = Vec::with_capacity(k);
        if minority[u] {
            targets.extend(rng.sample_indices(n_rare, m));
            targets.extend((m..r).map(|_| rng.below(n_rare)));
        } else {
            let pool = rng.sample_indices(n_rare, m - 1);
            if pool.is_empty() {
                r = 0;
            }
            targets.extend((0..r).map(|_| pool[rng.below(pool.len())]));
        }
        let null_rate = if cfg.null_item_rate > 0.0 && cfg.null_item_rate < 1.0 {
            let c = cfg.null_rate_concentration;
            rng.beta(c * cfg.null_item_rate, c * (1.0 - cfg.null_item_rate))?
        } else {
            0.0
        };
        let mut items: Vec<Option<usize>> = targets.into_iter().map(Some).collect();
        for _ in r..k {
            let item = n_rare + rng.below(n_common);
            items.push((!rng.bernoulli(null_rate)).then_some(item));
        }
        rng.shuffle(&mut items);
        for item in items {
            let id = inter_rows.len();
            inter_rows.push(RawEntity::new(vec![
                Cell::Key(format!("x{id}")),
                Cell::Key(format!("u{u}")),
                item.map_or(Cell::Null, |i| Cell::Key(format!("i{i}"))),
                Cell::Numeric(1.0 + feat_rng.below(5) as f64),
                Cell::Timestamp(DAY0 + 86_400 * feat_rng.below(365) as i64),
            ]));
        }
    }

    let db = RelationalDatabase::new(schemas(), vec![user_rows, item_rows, inter_rows])?;
    let mut labels: Vec<u8> = minority.iter().map(|&m| m as u8).collect();
    if cfg.label_noise > 0.0 {
        let mut noise = root.fork(13);
        for l in &mut labels {
            if noise.bernoulli(cfg.label_noise) {
                *l = 1 - *l;
            }
        }
    }
    let splits = stratified_splits(&labels, cfg.split_fractions, &mut root.fork(14));
    let task = Task::new(0, (0..n_users).collect(), labels, splits)?;
    Ok(SynthDataset {
        db,
        task,
        config: cfg.clone(),
    })
}

fn schemas() -> Vec<TableSchema> {
    vec![
        TableSchema::new(
            USERS,
            vec![
                ColumnSpec::new("user_id", Modality::PrimaryKey),
                ColumnSpec::new("age", Modality::Numeric),
                ColumnSpec::new("region", Modality::Categorical),
            ],
        ),
        TableSchema::new(
            ITEMS,
            vec![
                ColumnSpec::new("item_id", Modality::PrimaryKey),
                ColumnSpec::new("category", Modality::Categorical),
                ColumnSpec::new("price", Modality::Numeric),
            ],
        ),
        TableSchema::new(
            INTERACTIONS,
            vec![
                ColumnSpec::new("interaction_id", Modality::PrimaryKey),
                ColumnSpec::foreign_key("user_id", USERS),
                ColumnSpec::foreign_key("item_id", ITEMS),
                ColumnSpec::new("rating", Modality::Numeric),
                ColumnSpec::new("ts", Modality::Timestamp),
            ],
        ),
    ]
}

fn power_law_cdf(lo: usize, hi: usize, exponent: f64) -> Vec<f64> {
    let w: Vec<f64> = (lo..=hi).map(|k| (k as f64).powf(-exponent)).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x / total;
            acc
        })
        .collect()
}

fn draw_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Splits each class separately so every split keeps the class ratio.
fn stratified_splits(labels: &[u8], fractions: [f64; 3], rng: &mut Rng) -> Vec<Split> {
    let mut out = vec![Split::Train; labels.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let n = idx.len() as f64;
        let n_train = (fractions[0] * n).round() as usize;
        let n_val = ((fractions[0] + fractions[1]) * n).round() as usize - n_train;
        for (j, &i) in idx.iter().enumerate() {
            out[i] = if j < n_train {
                Split::Train
            } else if j < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    out
}

/// Recomputes the planted pattern by scanning the interactions table.
pub fn planted_pattern(db: &RelationalDatabase, min_rare_items: usize) -> Result<Vec<bool>> {
    let table = |name: &str| db.table_index(name).ok_or_else(|| Error::UnknownTable(name.into()));
    let (users, items, inter) = (table(USERS)?, table(ITEMS)?, table(INTERACTIONS)?);
    let cat_col = db.schema(items).column_index("category").expect("items.category");
    let mut reached: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); db.num_rows(users)];
    let (fk_user, fk_item) = (1, 2);
    for row in db.rows(inter) {
        let (Some(u), Some(i)) = (row.cells[fk_user].as_key(), row.cells[fk_item].as_key()) else {
            continue;
        };
        let (Some(u), Some(i)) = (db.lookup(users, u), db.lookup(items, i)) else {
            continue;
        };
        if matches!(&db.rows(items)[i].cells[cat_col], Cell::Categorical(c) if c == RARE_CATEGORY) {
            reached[u].insert(i);
        }
    }
    Ok(reached.iter().map(|s| s.len() >= min_rare_items).collect())
}

/// Plain-text summary of a configuration.
pub fn describe(cfg: &SynthConfig) -> String {
    let n_min = cfg.num_minority();
    let n_maj = cfg.num_users.saturating_sub(n_min);
    let ratio = if n_min > 0 { n_maj as f64 / n_min as f64 } else { f64::INFINITY };
    let mut s = String::new();
    let _ = writeln!(s, "tables: {USERS} ({}), {ITEMS} ({}), {INTERACTIONS}", cfg.num_users, cfg.num_items);
    let _ = writeln!(s, "relations: {INTERACTIONS}.user_id->{USERS}, {INTERACTIONS}.item_id->{ITEMS}");
    let _ = write!(s, "labels: {n_min} minority / {n_maj} majority, ratio {ratio:.2}");
    if n_min == n_maj {
        s.push_str(" (balanced)");
    }
    let _ = write!(
        s,
        "\npattern: user reaches >= {} distinct items of category `{RARE_CATEGORY}` ({} such items)",
        cfg.min_rare_items,
        cfg.num_rare_items()
    );
    s
}

#[derive(Serialize)]
struct Provenance<'a> {
    schema_version: u32,
    generator: &'static str,
    crate_version: &'static str,
    config: &'a SynthConfig,
    seed: u64,
    num_minority: usize,
    num_majority: usize,
}

impl SynthDataset {
    /// Writes the manifest, table CSVs, `labels.csv` and `provenance.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_database(&self.db, dir)?;
        write_labels(&self.db, &self.task, &dir.join("labels.csv"))?;
        let n_min = self.task.labels.iter().filter(|&&l| l == 1).count();
        let prov = Provenance {
            schema_version: 1,
            generator: "star",
            crate_version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            seed: self.config.seed,
            num_minority: n_min,
            num_majority: self.task.len() - n_min,
        };
        let path = dir.join("provenance.json");
        std::fs::write(&path, serde_json::to_string_pretty(&prov)? + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// `entity_id,label,split` rows in task order.
pub fn write_labels(db: &RelationalDatabase, task: &Task, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["entity_id", "label", "split"]).map_err(|e| Error::csv(path, e))?;
    for i in 0..task.len() {
        let label = task.labels[i].to_string();
        w.write_record([db.primary_key(task.table, task.rows[i]), &label, task.splits[i].as_str()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdb::compute_imbalance_stats;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_users: 400,
            num_items: 60,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn labels_match_brute_force_pattern() {
        for seed in 0..5 {
            let ds = generate(&small(seed)).unwrap();
            let planted = planted_pattern(&ds.db, ds.config.min_rare_items).unwrap();
            let labels: Vec<bool> = ds.task.labels.iter().map(|&l| l == 1).collect();
            assert_eq!(planted, labels, "seed {seed}");
        }
    }

    #[test]
    fn calibration_point() {
        let cfg = SynthConfig {
            num_users: 1353,
            imbalance_ratio: 4.86,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let st = compute_imbalance_stats(&ds.task.labels).unwrap();
        assert!((st.n_pos as f64 - 231.0).abs() <= 23.1, "{}", st.n_pos);
        assert!((st.n_neg as f64 - 1122.0).abs() <= 112.2, "{}", st.n_neg);
        assert!((st.imbalance_ratio / 4.86 - 1.0).abs() <= 0.1);
    }

    #[test]
    fn infeasible_ratio_is_rejected() {
        let cfg = SynthConfig {
            num_users: 10,
            imbalance_ratio: 50.0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig {
            imbalance_ratio: 0.5,
            ..SynthConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn describe_mentions_structure() {
        let s = describe(&SynthConfig::default());
        assert!(s.contains("users") && s.contains("items") && s.contains("interactions"));
        assert!(s.contains("182 minority / 1818 majority, ratio 9.99"), "{s}");
        let balanced = describe(&SynthConfig {
            imbalance_ratio: 1.0,
            ..SynthConfig::default()
        });
        assert!(balanced.contains("balanced"));
    }

    #[test]
    fn describe_ratio_agrees_with_emitted_labels() {
        let cfg = small(3);
        let ds = generate(&cfg).unwrap();
        let st = compute_imbalance_stats(&ds.task.labels).unwrap();
        assert!(describe(&cfg).contains(&format!("ratio {:.2}", st.imbalance_ratio)));
    }

    #[test]
    fn splits_are_stratified() {
        let ds = generate(&small(1)).unwrap();
        for split in [Split::Train, Split::Val, Split::Test] {
            let labels = ds.task.labels_of(split);
            assert!(labels.contains(&1) && labels.contains(&0), "{split:?}");
        }
    }
}
