//! Relational signatures, the minority memory bank and Beta-interpolated
//! minority synthesis.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeRef};
use crate::tensor::{Rng, Tensor};

/// Width of a signature: `2·|types| + 2·|relations|`.
pub fn signature_width(g: &HeteroGraph) -> usize {
    2 * g.num_types() + 2 * g.num_relations()
}

fn normalize(block: &mut [f64]) {
    let total: f64 = block.iter().sum();
    if total > 0.0 {
        block.iter_mut().for_each(|v| *v /= total);
    }
}

/// `[1-hop types ‖ 2-hop types ‖ fan-out per relation ‖ fan-in per relation]`,
/// each block L1-normalised. Computed on the full graph.
///
/// The 2-hop block counts every length-2 path, including those that return
/// to the start node.
pub fn compute_signature(g: &HeteroGraph, node: NodeRef) -> Vec<f64> {
    let (nt, nr) = (g.num_types(), g.num_relations());
    let mut sig = vec![0.0; 2 * nt + 2 * nr];
    let (one, rest) = sig.split_at_mut(nt);
    let (two, rest) = rest.split_at_mut(nt);
    let (fan_out, fan_in) = rest.split_at_mut(nr);
    for rel in g.relations_from(node.type_id) {
        let nbrs = g.adjacency(rel.rel_id).row(node.row_id);
        one[rel.dst_type] += nbrs.len() as f64;
        fan_out[rel.rel_id] = nbrs.len() as f64;
        fan_in[rel.paired] = nbrs.len() as f64;
        for &v in nbrs {
            for rel2 in g.relations_from(rel.dst_type) {
                two[rel2.dst_type] += g.adjacency(rel2.rel_id).degree(v) as f64;
            }
        }
    }
    normalize(one);
    normalize(two);
    normalize(fan_out);
    normalize(fan_in);
    sig
}

/// Signatures of every node of type `t`, one row each.
pub fn compute_signatures(g: &HeteroGraph, t: usize) -> Tensor {
    let width = signature_width(g);
    let mut out = Tensor::zeros(g.num_nodes(t), width);
    for row in 0..g.num_nodes(t) {
        out.row_mut(row).copy_from_slice(&compute_signature(g, NodeRef::new(t, row)));
    }
    out
}

/// Index ranges of the four signature blocks.
pub fn signature_blocks(g: &HeteroGraph) -> [std::ops::Range<usize>; 4] {
    let (nt, nr) = (g.num_types(), g.num_relations());
    [0..nt, nt..2 * nt, 2 * nt..2 * nt + nr, 2 * nt + nr..2 * nt + 2 * nr]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub node: usize,
}

/// Fixed-capacity FIFO store of detached minority `(X, S, node)` triples.
/// Logical index 0 is the oldest entry.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    dx: usize,
    ds: usize,
    entries: VecDeque<BankEntry>,
}

impl MemoryBank {
    pub fn new(capacity: usize, dx: usize, ds: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("bank capacity must be positive".into()));
        }
        Ok(MemoryBank {
            capacity,
            dx,
            ds,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &BankEntry {
        &self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Appends entries in order, evicting the oldest beyond capacity.
    /// Widths are checked for every entry before anything is inserted.
    pub fn push(&mut self, entries: impl IntoIterator<Item = BankEntry>) -> Result<()> {
        let entries: Vec<BankEntry> = entries.into_iter().collect();
        if let Some(bad) = entries.iter().find(|e| e.x.len() != self.dx || e.s.len() != self.ds) {
            return Err(Error::InvalidArgument(format!(
                "bank entry widths ({}, {}) do not match ({}, {})",
                bad.x.len(),
                bad.s.len(),
                self.dx,
                self.ds
            )));
        }
        for e in entries {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(e);
        }
        Ok(())
    }
}

/// `‖x − x'‖² + ω‖s − s'‖²`.
pub fn joint_distance(x: &[f64], s: &[f64], x2: &[f64], s2: &[f64], omega: f64) -> f64 {
    let dx: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    let ds: f64 = s.iter().zip(s2).map(|(a, b)| (a - b) * (a - b)).sum();
    dx + omega * ds
}

/// Bank index minimising the joint distance, skipping entries whose node is
/// `exclude`. Ties go to the lowest index.
pub fn nearest_minority(
    bank: &MemoryBank,
    x: &[f64],
    s: &[f64],
    omega: f64,
    exclude: Option<usize>,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in bank.entries.iter().enumerate() {
        if Some(e.node) == exclude {
            continue;
        }
        let d = joint_distance(x, s, &e.x, &e.s, omega);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.ok_or(Error::BankNotWarm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub label: u8,
    pub lambda: f64,
    pub anchor: usize,
    pub partner: usize,
    pub distance: f64,
}

/// Selected partner and interpolation factor; the caller interpolates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisPlan {
    pub bank_index: usize,
    pub partner: usize,
    pub distance: f64,
    pub lambda: f64,
}

/// Picks the partner for anchor `(x, s)` and draws `λ ~ Beta(α, β)`.
pub fn plan_synthesis(
    bank: &MemoryBank,
    x: &[f64],
    s: &[f64],
    omega: f64,
    beta: (f64, f64),
    rng: &mut Rng,
    exclude: Option<usize>,
) -> Result<SynthesisPlan> {
    let (bank_index, distance) = nearest_minority(bank, x, s, omega, exclude)?;
    let lambda = rng.beta(beta.0, beta.1)?;
    Ok(SynthesisPlan {
        bank_index,
        partner: bank.get(bank_index).node,
        distance,
        lambda,
    })
}

fn lerp(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect()
}

/// `X_syn = λ X_e + (1 − λ) X_e*`, and likewise for `S`, with one λ.
pub fn synthesize_with_lambda(
    x: &[f64],
    s: &[f64],
    bank: &MemoryBank,
    omega: f64,
    lambda: f64,
    minority_label: u8,
    exclude: Option<usize>,
) -> Result<SyntheticSample> {
    let (idx, distance) = nearest_minority(bank, x, s, omega, exclude)?;
    let partner = bank.get(idx);
    Ok(SyntheticSample {
        x: lerp(x, &partner.x, lambda),
        s: lerp(s, &partner.s, lambda),
        label: minority_label,
        lambda,
        anchor: exclude.unwrap_or(usize::MAX),
        partner: partner.node,
        distance,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    x: &[f64],
    s: &[f64],
    bank: &MemoryBank,
    omega: f64,
    beta: (f64, f64),
    minority_label: u8,
    rng: &mut Rng,
    exclude: Option<usize>,
) -> Result<SyntheticSample> {
    nearest_minority(bank, x, s, omega, exclude)?;
    let lambda = rng.beta(beta.0, beta.1)?;
    synthesize_with_lambda(x, s, bank, omega, lambda, minority_label, exclude)
}
