use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, ColumnSpec, Modality, RawEntity, RelationalDatabase, TableSchema};
use crate::error::{Error, Result};

/// Schema manifest: `{ "tables": [ { "name", "file", "columns": [...] } ] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tables: Vec<ManifestTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTable {
    pub name: String,
    pub file: String,
    pub columns: Vec<ManifestColumn>,
}

pub type ManifestColumn = ColumnSpec;

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Loads every table listed in the manifest from `data_dir`.
///
/// Unparsable numeric and timestamp cells become nulls and are counted in
/// [`RelationalDatabase::parse_warnings`].
pub fn load_database(manifest_path: &Path, data_dir: &Path) -> Result<RelationalDatabase> {
    let manifest = Manifest::read(manifest_path)?;
    let mut schemas = Vec::with_capacity(manifest.tables.len());
    let mut rows = Vec::with_capacity(manifest.tables.len());
    let mut warnings = 0;
    for table in &manifest.tables {
        let schema = TableSchema::new(table.name.clone(), table.columns.clone());
        let path = data_dir.join(&table.file);
        let (table_rows, w) = read_table(&schema, &path)?;
        warnings += w;
        schemas.push(schema);
        rows.push(table_rows);
    }
    let db = RelationalDatabase::with_warnings(schemas, rows, warnings)?;
    if warnings > 0 {
        log::warn!("{warnings} unparsable numeric/timestamp cells loaded as null");
    }
    Ok(db)
}

fn read_table(schema: &TableSchema, path: &Path) -> Result<(Vec<RawEntity>, usize)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!(
            "{}: header {:?} does not match schema columns {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut out = Vec::new();
    let mut warnings = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != schema.columns.len() {
            return Err(Error::RowWidth {
                table: schema.name.clone(),
                row: r,
                expected: schema.columns.len(),
                found: record.len(),
            });
        }
        let mut cells = Vec::with_capacity(record.len());
        for (raw, col) in record.iter().zip(&schema.columns) {
            let (cell, bad) = parse_cell(raw, col.modality);
            warnings += bad as usize;
            cells.push(cell);
        }
        out.push(RawEntity::new(cells));
    }
    Ok((out, warnings))
}

/// Parses one CSV field; the flag reports an unparsable non-empty value.
fn parse_cell(raw: &str, modality: Modality) -> (Cell, bool) {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return (Cell::Null, false);
    }
    match modality {
        Modality::PrimaryKey | Modality::ForeignKey => (Cell::Key(trimmed.to_string()), false),
        Modality::Categorical => (Cell::Categorical(raw.to_string()), false),
        Modality::Numeric => match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => (Cell::Numeric(v), false),
            _ => (Cell::Null, true),
        },
        Modality::Timestamp => match trimmed.parse::<i64>() {
            Ok(v) => (Cell::Timestamp(v), false),
            Err(_) => (Cell::Null, true),
        },
    }
}

fn format_cell(cell: &Cell) -> String {
    match cell {
        Cell::Null => String::new(),
        Cell::Numeric(v) => format!("{v}"),
        Cell::Categorical(s) | Cell::Key(s) => s.clone(),
        Cell::Timestamp(t) => t.to_string(),
    }
}

/// Writes `manifest.json` and one `<table>.csv` per table into `dir`.
pub fn write_database(db: &RelationalDatabase, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = Vec::new();
    for (t, schema) in db.schemas().iter().enumerate() {
        let file = format!("{}.csv", schema.name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(schema.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| Error::csv(&path, e))?;
        for row in db.rows(t) {
            w.write_record(row.cells.iter().map(format_cell))
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        tables.push(ManifestTable {
            name: schema.name.clone(),
            file,
            columns: schema.columns.clone(),
        });
    }
    let manifest = Manifest { tables };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdb::validate_referential_integrity;

    const MANIFEST: &str = r#"{
      "tables": [
        {"name": "parent", "file": "parent.csv", "columns": [
          {"name": "id", "modality": "primary_key"},
          {"name": "score", "modality": "numeric"},
          {"name": "born", "modality": "timestamp"}
        ]},
        {"name": "child", "file": "child.csv", "columns": [
          {"name": "id", "modality": "primary_key"},
          {"name": "parent_id", "modality": "foreign_key", "fk_target": "parent"},
          {"name": "kind", "modality": "categorical"}
        ]}
      ]
    }"#;

    fn write_fixture(dir: &Path, parent: &str, child: &str) {
        std::fs::write(dir.join("manifest.json"), MANIFEST).unwrap();
        std::fs::write(dir.join("parent.csv"), parent).unwrap();
        std::fs::write(dir.join("child.csv"), child).unwrap();
    }

    const PARENT: &str = "id,score,born\n1,0.5,100\n2,oops,200\n3,,x\n";

    #[test]
    fn loads_and_counts_warnings() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(
            dir.path(),
            PARENT,
            "id,parent_id,kind\na,1,x\nb, 2 ,y\nc,,x\nd,x9,\"q,z\"\ne,3,y\n",
        );
        let db = load_database(&dir.path().join("manifest.json"), dir.path()).unwrap();
        assert_eq!(db.num_tables(), 2);
        assert_eq!(db.total_rows(), 8);
        assert_eq!(db.links().len(), 1);
        assert_eq!(db.parse_warnings(), 2);
        assert_eq!(db.rows(0)[1].cells[1], Cell::Null);
        assert_eq!(db.rows(1)[1].cells[1], Cell::Key("2".into()));
        assert_eq!(db.rows(1)[2].cells[1], Cell::Null);
        assert_eq!(db.rows(1)[3].cells[2], Cell::Categorical("q,z".into()));

        let report = validate_referential_integrity(&db);
        let link = &report.links["child.parent_id->parent"];
        assert_eq!((link.dangling, link.null), (1, 1));
    }

    #[test]
    fn wrong_cell_count_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), PARENT, "id,parent_id,kind\na,1\n");
        let err = load_database(&dir.path().join("manifest.json"), dir.path()).unwrap_err();
        assert!(matches!(err, Error::RowWidth { expected: 3, found: 2, .. }));
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("manifest.json"), MANIFEST).unwrap();
        let err = load_database(&dir.path().join("manifest.json"), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn header_must_match_schema() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), PARENT, "id,parent,kind\na,1,x\n");
        assert!(matches!(
            load_database(&dir.path().join("manifest.json"), dir.path()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn unknown_manifest_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.json"), r#"{"tables": [], "extra": 1}"#).unwrap();
        assert!(load_database(&dir.path().join("m.json"), dir.path()).is_err());
    }
}
