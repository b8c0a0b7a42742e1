use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdb::{compute_imbalance_stats, RelationalDatabase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Binary labels for entities of one table, with a split assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub table: usize,
    pub rows: Vec<usize>,
    pub labels: Vec<u8>,
    pub splits: Vec<Split>,
}

#[derive(Deserialize)]
struct LabelRow {
    entity_id: String,
    label: u8,
    split: String,
}

impl Task {
    pub fn new(table: usize, rows: Vec<usize>, labels: Vec<u8>, splits: Vec<Split>) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != splits.len() {
            return Err(Error::InvalidArgument("rows, labels and splits differ in length".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let mut seen = rows.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("an entity is labelled twice".into()));
        }
        Ok(Task {
            table,
            rows,
            labels,
            splits,
        })
    }

    /// Reads `entity_id,label,split` rows for table `table_name`.
    pub fn load(db: &RelationalDatabase, table_name: &str, path: &Path) -> Result<Self> {
        let table = db
            .table_index(table_name)
            .ok_or_else(|| Error::UnknownTable(table_name.to_string()))?;
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let (mut rows, mut labels, mut splits) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.deserialize() {
            let rec: LabelRow = rec.map_err(|e| Error::csv(path, e))?;
            let row = db.lookup(table, &rec.entity_id).ok_or_else(|| {
                Error::InvalidArgument(format!("label for unknown entity `{}`", rec.entity_id))
            })?;
            rows.push(row);
            labels.push(rec.label);
            splits.push(Split::parse(&rec.split)?);
        }
        Task::new(table, rows, labels, splits)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Positions (into `rows`) of entities in `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn labels_of(&self, split: Split) -> Vec<u8> {
        self.indices(split).into_iter().map(|i| self.labels[i]).collect()
    }

    /// The less frequent label of the training split.
    pub fn minority_label(&self) -> Result<u8> {
        let train = self.labels_of(Split::Train);
        if train.is_empty() {
            return Err(Error::DegenerateTraining);
        }
        let stats = compute_imbalance_stats(&train)?;
        if stats.single_class {
            return Err(Error::DegenerateTraining);
        }
        Ok(stats.minority_label())
    }

    /// Row mask for fitting feature statistics: training entities of the
    /// target table, every row of the other tables.
    pub fn train_mask(&self, db: &RelationalDatabase) -> Vec<Vec<bool>> {
        let mut mask: Vec<Vec<bool>> = (0..db.num_tables()).map(|t| vec![true; db.num_rows(t)]).collect();
        let target = &mut mask[self.table];
        target.iter_mut().for_each(|m| *m = false);
        for i in self.indices(Split::Train) {
            target[self.rows[i]] = true;
        }
        mask
    }
}
