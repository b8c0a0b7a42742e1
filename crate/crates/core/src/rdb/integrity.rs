use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Cell, RelationalDatabase};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkIntegrity {
    pub dangling: usize,
    pub null: usize,
}

/// Per-link counts of dangling and null foreign-key cells, keyed
/// `<src>.<fkcol>-><dst>`. Serialises as a flat JSON map.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntegrityReport {
    pub links: BTreeMap<String, LinkIntegrity>,
}

impl IntegrityReport {
    pub fn total_dangling(&self) -> usize {
        self.links.values().map(|l| l.dangling).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.links.values().all(|l| l.dangling == 0)
    }
}

pub fn validate_referential_integrity(db: &RelationalDatabase) -> IntegrityReport {
    let mut report = IntegrityReport::default();
    for link in db.links() {
        let mut counts = LinkIntegrity::default();
        for row in db.rows(link.src_table) {
            match &row.cells[link.fk_column] {
                Cell::Key(k) => {
                    if db.lookup(link.dst_table, k).is_none() {
                        counts.dangling += 1;
                    }
                }
                _ => counts.null += 1,
            }
        }
        report.links.insert(db.link_name(link), counts);
    }
    report
}
