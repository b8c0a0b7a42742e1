//! Heterogeneous entity graph: one node type per table, one forward and one
//! reverse relation per foreign-key column, CSR adjacency per relation.

mod sample;

pub use sample::{sample_neighborhood, sample_neighborhood_filtered, NeighborSample, UNLIMITED};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdb::{Cell, Modality, RelationalDatabase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub type_id: usize,
    pub row_id: usize,
}

impl NodeRef {
    pub fn new(type_id: usize, row_id: usize) -> Self {
        NodeRef { type_id, row_id }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// FK holder to referenced entity.
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub rel_id: usize,
    pub src_type: usize,
    pub dst_type: usize,
    pub fk_column: String,
    pub direction: Direction,
    /// Relation id of the transposed partner.
    pub paired: usize,
}

/// Compressed sparse rows: neighbours of `i` are `targets[offsets[i]..offsets[i + 1]]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    /// Builds from an edge list, keeping edge order within each source row.
    pub fn from_edges(n_src: usize, edges: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0usize; n_src + 1];
        for &(s, _) in edges {
            offsets[s + 1] += 1;
        }
        for i in 0..n_src {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0usize; edges.len()];
        for &(s, t) in edges {
            targets[cursor[s]] = t;
            cursor[s] += 1;
        }
        Csr { offsets, targets }
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

/// Edge list for one forward relation, used by [`HeteroGraph::from_edges`].
#[derive(Clone, Debug)]
pub struct EdgeSpec {
    pub src_type: usize,
    pub dst_type: usize,
    pub name: String,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct HeteroGraph {
    type_names: Vec<String>,
    node_counts: Vec<usize>,
    relations: Vec<RelationType>,
    adjacency: Vec<Csr>,
    /// First timestamp column of each table, if any; used by the temporal filter.
    node_times: Vec<Option<Vec<Option<i64>>>>,
}

/// Builds the entity graph. Null and dangling FK cells contribute no edge.
///
/// Relation `2k` is the forward direction of link `k`, `2k + 1` its reverse.
pub fn build_graph(db: &RelationalDatabase) -> HeteroGraph {
    let specs = db
        .links()
        .iter()
        .map(|link| {
            let edges = (0..db.num_rows(link.src_table))
                .filter_map(|row| db.resolve(link, row).map(|dst| (row, dst)))
                .collect();
            EdgeSpec {
                src_type: link.src_table,
                dst_type: link.dst_table,
                name: db.schema(link.src_table).columns[link.fk_column].name.clone(),
                edges,
            }
        })
        .collect();
    let names = db.schemas().iter().map(|s| s.name.clone()).collect();
    let counts = (0..db.num_tables()).map(|t| db.num_rows(t)).collect();
    let mut g = HeteroGraph::from_edges(names, counts, specs).expect("validated database");
    g.node_times = (0..db.num_tables())
        .map(|t| {
            let col = db
                .schema(t)
                .columns
                .iter()
                .position(|c| c.modality == Modality::Timestamp)?;
            Some(
                db.rows(t)
                    .iter()
                    .map(|r| match r.cells[col] {
                        Cell::Timestamp(ts) => Some(ts),
                        _ => None,
                    })
                    .collect(),
            )
        })
        .collect();
    g
}

impl HeteroGraph {
    /// Builds a graph from explicit forward edge lists; reverses are added.
    pub fn from_edges(
        type_names: Vec<String>,
        node_counts: Vec<usize>,
        specs: Vec<EdgeSpec>,
    ) -> Result<Self> {
        if type_names.len() != node_counts.len() {
            return Err(Error::Graph("type names and node counts differ in length".into()));
        }
        let mut relations = Vec::with_capacity(2 * specs.len());
        let mut adjacency = Vec::with_capacity(2 * specs.len());
        for spec in specs {
            let (s, d) = (spec.src_type, spec.dst_type);
            if s >= node_counts.len() || d >= node_counts.len() {
                return Err(Error::Graph(format!("relation `{}` has unknown node type", spec.name)));
            }
            if let Some(&(u, v)) = spec
                .edges
                .iter()
                .find(|&&(u, v)| u >= node_counts[s] || v >= node_counts[d])
            {
                return Err(Error::Graph(format!(
                    "edge ({u}, {v}) out of bounds in relation `{}`",
                    spec.name
                )));
            }
            let fwd = relations.len();
            let rev: Vec<(usize, usize)> = spec.edges.iter().map(|&(u, v)| (v, u)).collect();
            adjacency.push(Csr::from_edges(node_counts[s], &spec.edges));
            adjacency.push(Csr::from_edges(node_counts[d], &rev));
            relations.push(RelationType {
                rel_id: fwd,
                src_type: s,
                dst_type: d,
                fk_column: spec.name.clone(),
                direction: Direction::Forward,
                paired: fwd + 1,
            });
            relations.push(RelationType {
                rel_id: fwd + 1,
                src_type: d,
                dst_type: s,
                fk_column: spec.name,
                direction: Direction::Reverse,
                paired: fwd,
            });
        }
        let node_times = vec![None; type_names.len()];
        Ok(HeteroGraph {
            type_names,
            node_counts,
            relations,
            adjacency,
            node_times,
        })
    }

    pub fn num_types(&self) -> usize {
        self.node_counts.len()
    }

    pub fn type_name(&self, t: usize) -> &str {
        &self.type_names[t]
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.type_names.iter().position(|n| n == name)
    }

    pub fn num_nodes(&self, t: usize) -> usize {
        self.node_counts[t]
    }

    pub fn node_counts(&self) -> &[usize] {
        &self.node_counts
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn relation(&self, r: usize) -> &RelationType {
        &self.relations[r]
    }

    /// `<src>.<fk>-><dst>`; reverse relations get the same label prefixed `rev:`.
    pub fn relation_name(&self, r: usize) -> String {
        let rel = &self.relations[r];
        match rel.direction {
            Direction::Forward => format!(
                "{}.{}->{}",
                self.type_names[rel.src_type], rel.fk_column, self.type_names[rel.dst_type]
            ),
            Direction::Reverse => format!(
                "rev:{}.{}->{}",
                self.type_names[rel.dst_type], rel.fk_column, self.type_names[rel.src_type]
            ),
        }
    }

    pub fn adjacency(&self, r: usize) -> &Csr {
        &self.adjacency[r]
    }

    pub fn num_edges(&self, r: usize) -> usize {
        self.adjacency[r].num_edges()
    }

    /// Relations whose source type is `t`, in id order.
    pub fn relations_from(&self, t: usize) -> impl Iterator<Item = &RelationType> {
        self.relations.iter().filter(move |r| r.src_type == t)
    }

    /// Neighbour row ids of `node` under relation `rel` (CSR slice).
    pub fn neighbor_rows(&self, node: NodeRef, rel: usize) -> Result<&[usize]> {
        let r = self
            .relations
            .get(rel)
            .ok_or_else(|| Error::Graph(format!("unknown relation {rel}")))?;
        if r.src_type != node.type_id {
            return Err(Error::Graph(format!(
                "relation {rel} starts at type `{}`, node has type `{}`",
                self.type_names[r.src_type], self.type_names[node.type_id]
            )));
        }
        if node.row_id >= self.node_counts[node.type_id] {
            return Err(Error::Graph(format!("row {} out of bounds", node.row_id)));
        }
        Ok(self.adjacency[rel].row(node.row_id))
    }

    pub fn neighbors(&self, node: NodeRef, rel: usize) -> Result<Vec<NodeRef>> {
        let dst = self.relations.get(rel).map(|r| r.dst_type).unwrap_or(0);
        Ok(self
            .neighbor_rows(node, rel)?
            .iter()
            .map(|&v| NodeRef::new(dst, v))
            .collect())
    }

    pub fn node_time(&self, node: NodeRef) -> Option<i64> {
        self.node_times[node.type_id].as_ref()?[node.row_id]
    }

    /// Attaches per-node timestamps for one node type.
    pub fn set_node_times(&mut self, t: usize, times: Vec<Option<i64>>) -> Result<()> {
        if times.len() != self.node_counts[t] {
            return Err(Error::Graph("timestamp vector length mismatch".into()));
        }
        self.node_times[t] = Some(times);
        Ok(())
    }

    /// Writes one JSON object per relation with its full edge list.
    pub fn dump_jsonl(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            rel_id: usize,
            name: String,
            src_type: &'a str,
            dst_type: &'a str,
            direction: Direction,
            edges: Vec<[usize; 2]>,
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for rel in &self.relations {
            let csr = &self.adjacency[rel.rel_id];
            let edges = (0..csr.num_rows())
                .flat_map(|u| csr.row(u).iter().map(move |&v| [u, v]))
                .collect();
            let rec = Record {
                rel_id: rel.rel_id,
                name: self.relation_name(rel.rel_id),
                src_type: &self.type_names[rel.src_type],
                dst_type: &self.type_names[rel.dst_type],
                direction: rel.direction,
                edges,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
