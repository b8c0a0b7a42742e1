//! Relation-wise gated message passing.
//!
//! Matrices act on row vectors from the right: the message of relation `r`
//! is `H = mean(X_v) · W_r`, the gate is
//! `Ψ = sigmoid(R_r + ⟨x_e Q, H K⟩ · (H V) / √d)` and the update is
//! `X' = σ(X W_e + Σ_r Ψ_r ⊙ H_r)`.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{NeighborSample, RelationType};
use crate::tensor::{ParamId, ParamStore, Rng, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Learned gates.
    Learned,
    /// Gates fixed to one; multiplies by an all-ones tensor.
    Ones,
    /// No gating: messages are summed directly.
    Off,
}

#[derive(Clone, Debug)]
pub struct RelGateLayer {
    pub d: usize,
    pub w_self: ParamId,
    pub w_rel: Vec<ParamId>,
    pub r_emb: Vec<ParamId>,
    /// One `(Q, K, V)` triple, or one per relation.
    pub qkv: Vec<[ParamId; 3]>,
}

impl RelGateLayer {
    pub fn new(
        prefix: &str,
        d: usize,
        num_relations: usize,
        per_relation_qkv: bool,
        store: &mut ParamStore,
        rng: &mut Rng,
    ) -> Self {
        let w_self = store.add(format!("{prefix}.w_self"), Tensor::glorot(d, d, rng));
        let w_rel = (0..num_relations)
            .map(|r| store.add(format!("{prefix}.w_rel.{r}"), Tensor::glorot(d, d, rng)))
            .collect();
        let r_emb = (0..num_relations)
            .map(|r| store.add(format!("{prefix}.r_emb.{r}"), Tensor::zeros(1, d)))
            .collect();
        let n_qkv = if per_relation_qkv { num_relations } else { 1 };
        let qkv = (0..n_qkv)
            .map(|i| {
                let tag = if per_relation_qkv { format!(".{i}") } else { String::new() };
                ["q", "k", "v"].map(|m| store.add(format!("{prefix}.{m}{tag}"), Tensor::glorot(d, d, rng)))
            })
            .collect();
        RelGateLayer {
            d,
            w_self,
            w_rel,
            r_emb,
            qkv,
        }
    }

    pub fn qkv_for(&self, r: usize) -> [ParamId; 3] {
        if self.qkv.len() == 1 {
            self.qkv[0]
        } else {
            self.qkv[r]
        }
    }
}

/// Running per-relation gate statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateLog {
    pub sum: Vec<f64>,
    pub count: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl GateLog {
    pub fn new(num_relations: usize) -> Self {
        GateLog {
            sum: vec![0.0; num_relations],
            count: vec![0; num_relations],
            min: vec![f64::INFINITY; num_relations],
            max: vec![f64::NEG_INFINITY; num_relations],
        }
    }

    pub fn record(&mut self, r: usize, gates: &Tensor) {
        for &g in gates.data() {
            self.sum[r] += g;
            self.min[r] = self.min[r].min(g);
            self.max[r] = self.max[r].max(g);
        }
        self.count[r] += gates.len();
    }

    pub fn mean(&self, r: usize) -> Option<f64> {
        (self.count[r] > 0).then(|| self.sum[r] / self.count[r] as f64)
    }
}

/// Segment layout of `targets`' sampled neighbours under relation `r`.
pub fn target_segments(sample: &NeighborSample, r: usize, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = Vec::with_capacity(targets.len() + 1);
    let mut members = Vec::new();
    offsets.push(0);
    for &t in targets {
        members.extend_from_slice(sample.neighbors_local(t, r));
        offsets.push(members.len());
    }
    (offsets, members)
}

/// `H_{e,r} = mean_{v ∈ N_r(e)} X_v · W_r` for each target; zero when empty.
pub fn relation_messages(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &RelGateLayer,
    x: Var,
    sample: &NeighborSample,
    r: usize,
    targets: &[usize],
) -> Result<Var> {
    let (offsets, members) = target_segments(sample, r, targets);
    let mean = tape.segment_mean(x, offsets, members)?;
    let w = tape.param(store, layer.w_rel[r]);
    tape.matmul(mean, w)
}

/// Row-wise gating factor for aligned rows of `x_e` and `h`.
pub fn gating_factor(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &RelGateLayer,
    x_e: Var,
    h: Var,
    r: usize,
) -> Result<Var> {
    let [q, k, v] = layer.qkv_for(r).map(|p| tape.param(store, p));
    let qx = tape.matmul(x_e, q)?;
    let kh = tape.matmul(h, k)?;
    let vh = tape.matmul(h, v)?;
    let prod = tape.mul(qx, kh)?;
    let a = tape.row_sum(prod);
    let att = tape.mul_col(vh, a)?;
    let att = tape.scale(att, 1.0 / (layer.d as f64).sqrt());
    let re = tape.param(store, layer.r_emb[r]);
    let pre = tape.add_row(att, re)?;
    Ok(tape.sigmoid(pre))
}

/// Per-relation message block aligned to a list of target rows.
pub struct RelationBlock {
    pub r: usize,
    pub targets: Rc<[usize]>,
    pub message: Var,
    pub gate: Option<Var>,
}

/// `σ(X W_e + Σ_r Ψ_r ⊙ H_r)` over the first `n_out` rows; relations are
/// summed in the order given. `gate: None` sums the raw message.
pub fn gated_update(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &RelGateLayer,
    x: Var,
    n_out: usize,
    blocks: &[RelationBlock],
    activate: bool,
) -> Result<Var> {
    let xs = if tape.shape(x)[0] == n_out {
        x
    } else {
        tape.gather_rows(x, (0..n_out).collect::<Vec<_>>())?
    };
    let w = tape.param(store, layer.w_self);
    let mut acc = tape.matmul(xs, w)?;
    for b in blocks {
        let gated = match b.gate {
            Some(g) => tape.mul(g, b.message)?,
            None => b.message,
        };
        let placed = if b.targets.len() == n_out && b.targets.iter().enumerate().all(|(i, &t)| i == t) {
            gated
        } else {
            tape.scatter_rows(gated, b.targets.clone(), n_out)?
        };
        acc = tape.add(acc, placed)?;
    }
    Ok(if activate { tape.relu(acc) } else { acc })
}

/// One message-passing layer over a sample: inputs are the first
/// `tape.shape(x)[0]` local nodes, outputs the first `n_out`.
#[allow(clippy::too_many_arguments)]
pub fn layer_forward(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &RelGateLayer,
    relations: &[RelationType],
    sample: &NeighborSample,
    x: Var,
    n_out: usize,
    mode: GateMode,
    activate: bool,
    mut log: Option<&mut GateLog>,
) -> Result<Var> {
    let mut blocks = Vec::new();
    for rel in relations {
        let r = rel.rel_id;
        let targets: Rc<[usize]> = sample.ids_of_type(rel.src_type, n_out).into();
        if targets.is_empty() {
            continue;
        }
        let message = relation_messages(tape, store, layer, x, sample, r, &targets)?;
        let gate = match mode {
            GateMode::Off => None,
            GateMode::Ones => Some(tape.constant(Tensor::ones(targets.len(), layer.d))),
            GateMode::Learned => {
                let xe = tape.gather_rows(x, targets.clone())?;
                let g = gating_factor(tape, store, layer, xe, message, r)?;
                if let Some(log) = log.as_deref_mut() {
                    log.record(r, tape.value(g));
                }
                Some(g)
            }
        };
        blocks.push(RelationBlock {
            r,
            targets,
            message,
            gate,
        });
    }
    gated_update(tape, store, layer, x, n_out, &blocks, activate)
}

/// Gating factor evaluated on plain vectors with the current parameters.
pub fn gate_value(layer: &RelGateLayer, store: &ParamStore, x_e: &[f64], h: &[f64], r: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xe = tape.constant(Tensor::row_vector(x_e.to_vec()));
    let hv = tape.constant(Tensor::row_vector(h.to_vec()));
    let g = gating_factor(&mut tape, store, layer, xe, hv, r)?;
    Ok(tape.value(g).data().to_vec())
}
