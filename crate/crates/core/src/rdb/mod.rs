//! Relational database model: typed tables, primary/foreign keys, CSV ingest.

mod integrity;
mod io;
mod stats;

pub use integrity::{validate_referential_integrity, IntegrityReport, LinkIntegrity};
pub use io::{load_database, write_database, Manifest, ManifestColumn, ManifestTable};
pub use stats::{compute_imbalance_stats, ImbalanceStats};

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Numeric,
    Categorical,
    Timestamp,
    PrimaryKey,
    ForeignKey,
}

impl Modality {
    pub fn is_key(self) -> bool {
        matches!(self, Modality::PrimaryKey | Modality::ForeignKey)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fk_target: Option<String>,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, modality: Modality) -> Self {
        ColumnSpec {
            name: name.into(),
            modality,
            fk_target: None,
        }
    }

    pub fn foreign_key(name: impl Into<String>, target: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            modality: Modality::ForeignKey,
            fk_target: Some(target.into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSpec>) -> Self {
        TableSchema {
            name: name.into(),
            columns,
        }
    }

    pub fn pk_column(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.modality == Modality::PrimaryKey)
            .expect("validated schema has a primary key")
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    fn validate(&self) -> Result<()> {
        let pks = self
            .columns
            .iter()
            .filter(|c| c.modality == Modality::PrimaryKey)
            .count();
        if pks != 1 {
            return Err(Error::Schema(format!(
                "table `{}` must have exactly one primary key column, found {pks}",
                self.name
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!(
                    "table `{}` has duplicate column `{}`",
                    self.name, c.name
                )));
            }
            let is_fk = c.modality == Modality::ForeignKey;
            if is_fk != c.fk_target.is_some() {
                return Err(Error::Schema(format!(
                    "column `{}.{}`: fk_target must be present exactly for foreign keys",
                    self.name, c.name
                )));
            }
        }
        Ok(())
    }
}

/// One cell of a raw entity.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Null,
    Numeric(f64),
    Categorical(String),
    /// Integer epoch seconds.
    Timestamp(i64),
    /// Primary or foreign key, compared as a trimmed string.
    Key(String),
}

impl Cell {
    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    pub fn as_key(&self) -> Option<&str> {
        match self {
            Cell::Key(k) => Some(k),
            _ => None,
        }
    }
}

/// A table row; one cell per schema column.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEntity {
    pub cells: Vec<Cell>,
}

impl RawEntity {
    pub fn new(cells: Vec<Cell>) -> Self {
        RawEntity { cells }
    }
}

/// A declared foreign key: `src_table.fk_column -> dst_table`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub src_table: usize,
    pub fk_column: usize,
    pub dst_table: usize,
}

/// Immutable in-memory relational database.
#[derive(Clone, Debug)]
pub struct RelationalDatabase {
    schemas: Vec<TableSchema>,
    rows: Vec<Vec<RawEntity>>,
    links: Vec<Link>,
    pk_index: Vec<HashMap<String, usize>>,
    parse_warnings: usize,
}

impl RelationalDatabase {
    /// Validates schemas and rows and builds the primary-key indexes.
    pub fn new(schemas: Vec<TableSchema>, rows: Vec<Vec<RawEntity>>) -> Result<Self> {
        Self::with_warnings(schemas, rows, 0)
    }

    pub(crate) fn with_warnings(
        schemas: Vec<TableSchema>,
        rows: Vec<Vec<RawEntity>>,
        parse_warnings: usize,
    ) -> Result<Self> {
        if schemas.len() != rows.len() {
            return Err(Error::Schema(format!(
                "{} schemas but {} row sets",
                schemas.len(),
                rows.len()
            )));
        }
        let mut names = HashMap::new();
        for (t, s) in schemas.iter().enumerate() {
            s.validate()?;
            if names.insert(s.name.clone(), t).is_some() {
                return Err(Error::Schema(format!("duplicate table `{}`", s.name)));
            }
        }
        let mut links = Vec::new();
        for (t, s) in schemas.iter().enumerate() {
            for (c, col) in s.columns.iter().enumerate() {
                if let Some(target) = &col.fk_target {
                    let dst = *names
                        .get(target)
                        .ok_or_else(|| Error::UnknownTable(target.clone()))?;
                    links.push(Link {
                        src_table: t,
                        fk_column: c,
                        dst_table: dst,
                    });
                }
            }
        }
        let mut pk_index = Vec::with_capacity(schemas.len());
        for (s, table_rows) in schemas.iter().zip(&rows) {
            let pk = s.pk_column();
            let mut index = HashMap::with_capacity(table_rows.len());
            for (r, row) in table_rows.iter().enumerate() {
                if row.cells.len() != s.columns.len() {
                    return Err(Error::RowWidth {
                        table: s.name.clone(),
                        row: r,
                        expected: s.columns.len(),
                        found: row.cells.len(),
                    });
                }
                let key = row.cells[pk].as_key().ok_or_else(|| {
                    Error::Schema(format!("table `{}` row {r}: primary key is null", s.name))
                })?;
                let key = key.trim();
                if index.insert(key.to_string(), r).is_some() {
                    return Err(Error::DuplicateKey {
                        table: s.name.clone(),
                        key: key.to_string(),
                    });
                }
            }
            pk_index.push(index);
        }
        Ok(RelationalDatabase {
            schemas,
            rows,
            links,
            pk_index,
            parse_warnings,
        })
    }

    pub fn schemas(&self) -> &[TableSchema] {
        &self.schemas
    }

    pub fn schema(&self, table: usize) -> &TableSchema {
        &self.schemas[table]
    }

    pub fn num_tables(&self) -> usize {
        self.schemas.len()
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.schemas.iter().position(|s| s.name == name)
    }

    pub fn rows(&self, table: usize) -> &[RawEntity] {
        &self.rows[table]
    }

    pub fn num_rows(&self, table: usize) -> usize {
        self.rows[table].len()
    }

    pub fn total_rows(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Unparsable numeric/timestamp cells that were loaded as null.
    pub fn parse_warnings(&self) -> usize {
        self.parse_warnings
    }

    /// Row index of the entity whose primary key equals `key` (trimmed).
    pub fn lookup(&self, table: usize, key: &str) -> Option<usize> {
        self.pk_index[table].get(key.trim()).copied()
    }

    pub fn primary_key(&self, table: usize, row: usize) -> &str {
        let pk = self.schemas[table].pk_column();
        self.rows[table][row].cells[pk]
            .as_key()
            .expect("validated primary key")
    }

    /// Target row of a foreign-key cell, `None` when null or dangling.
    pub fn resolve(&self, link: &Link, row: usize) -> Option<usize> {
        let cell = &self.rows[link.src_table][row].cells[link.fk_column];
        cell.as_key().and_then(|k| self.lookup(link.dst_table, k))
    }

    /// Stable `<src>.<fkcol>-><dst>` label for a link.
    pub fn link_name(&self, link: &Link) -> String {
        let src = &self.schemas[link.src_table];
        format!(
            "{}.{}->{}",
            src.name, src.columns[link.fk_column].name, self.schemas[link.dst_table].name
        )
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn key(k: &str) -> Cell {
        Cell::Key(k.to_string())
    }

    /// parent(id, score) with 3 rows; child(id, parent_id, tag) with 5 rows.
    pub fn parent_child(child_fks: [Option<&str>; 5]) -> RelationalDatabase {
        let parent = TableSchema::new(
            "parent",
            vec![
                ColumnSpec::new("id", Modality::PrimaryKey),
                ColumnSpec::new("score", Modality::Numeric),
            ],
        );
        let child = TableSchema::new(
            "child",
            vec![
                ColumnSpec::new("id", Modality::PrimaryKey),
                ColumnSpec::foreign_key("parent_id", "parent"),
                ColumnSpec::new("tag", Modality::Categorical),
            ],
        );
        let prows = (0..3)
            .map(|i| RawEntity::new(vec![key(&format!("p{i}")), Cell::Numeric(i as f64)]))
            .collect();
        let crows = child_fks
            .iter()
            .enumerate()
            .map(|(i, fk)| {
                RawEntity::new(vec![
                    key(&format!("c{i}")),
                    fk.map_or(Cell::Null, key),
                    Cell::Categorical(if i % 2 == 0 { "a" } else { "b" }.into()),
                ])
            })
            .collect();
        RelationalDatabase::new(vec![parent, child], vec![prows, crows]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn two_tables_one_link() {
        let db = parent_child([Some("p0"), Some("p1"), Some("p2"), Some("p0"), Some("p1")]);
        assert_eq!(db.num_tables(), 2);
        assert_eq!(db.total_rows(), 8);
        assert_eq!(db.links().len(), 1);
        assert_eq!(db.link_name(&db.links()[0]), "child.parent_id->parent");
    }

    #[test]
    fn duplicate_pk_is_fatal() {
        let s = TableSchema::new("t", vec![ColumnSpec::new("id", Modality::PrimaryKey)]);
        let rows = vec![RawEntity::new(vec![key("1")]), RawEntity::new(vec![key("1")])];
        let err = RelationalDatabase::new(vec![s], vec![rows]).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }));
    }

    #[test]
    fn unknown_fk_target_is_fatal() {
        let s = TableSchema::new(
            "t",
            vec![
                ColumnSpec::new("id", Modality::PrimaryKey),
                ColumnSpec::foreign_key("o", "nowhere"),
            ],
        );
        let err = RelationalDatabase::new(vec![s], vec![vec![]]).unwrap_err();
        assert!(matches!(err, Error::UnknownTable(t) if t == "nowhere"));
    }

    #[test]
    fn schema_invariants() {
        let no_pk = TableSchema::new("t", vec![ColumnSpec::new("x", Modality::Numeric)]);
        assert!(RelationalDatabase::new(vec![no_pk], vec![vec![]]).is_err());
        let dup = TableSchema::new(
            "t",
            vec![
                ColumnSpec::new("id", Modality::PrimaryKey),
                ColumnSpec::new("id", Modality::Numeric),
            ],
        );
        assert!(RelationalDatabase::new(vec![dup], vec![vec![]]).is_err());
        let mut stray = ColumnSpec::new("x", Modality::Numeric);
        stray.fk_target = Some("t".into());
        let bad = TableSchema::new("t", vec![ColumnSpec::new("id", Modality::PrimaryKey), stray]);
        assert!(RelationalDatabase::new(vec![bad], vec![vec![]]).is_err());
    }

    #[test]
    fn wrong_cell_count_is_rejected() {
        let s = TableSchema::new(
            "t",
            vec![
                ColumnSpec::new("id", Modality::PrimaryKey),
                ColumnSpec::new("x", Modality::Numeric),
            ],
        );
        let err = RelationalDatabase::new(vec![s], vec![vec![RawEntity::new(vec![key("1")])]]).unwrap_err();
        assert!(matches!(err, Error::RowWidth { expected: 2, found: 1, .. }));
    }

    #[test]
    fn keys_compare_trimmed() {
        let db = parent_child([Some(" p1 "), None, None, None, None]);
        assert_eq!(db.lookup(0, "  p1"), Some(1));
    }
}
