//! Numerical checks of minority signal decay under linear message passing
//! and of distribution shift between true and synthetic signatures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSpec, HeteroGraph, NodeRef};
use crate::tensor::{Rng, Tensor};

/// `mean(X[minor]) - mean(X[major])` over the given neighbour rows; `None`
/// when either class is absent.
pub fn minority_signal(x: &Tensor, is_minority: &[bool], neighbors: &[usize]) -> Option<Vec<f64>> {
    let d = x.cols();
    let (mut sum_min, mut sum_maj) = (vec![0.0; d], vec![0.0; d]);
    let (mut n_min, mut n_maj) = (0usize, 0usize);
    for &v in neighbors {
        let (acc, n) = if is_minority[v] {
            (&mut sum_min, &mut n_min)
        } else {
            (&mut sum_maj, &mut n_maj)
        };
        *n += 1;
        for (a, b) in acc.iter_mut().zip(x.row(v)) {
            *a += b;
        }
    }
    if n_min == 0 || n_maj == 0 {
        return None;
    }
    Some(
        sum_min
            .iter()
            .zip(&sum_maj)
            .map(|(a, b)| a / n_min as f64 - b / n_maj as f64)
            .collect(),
    )
}

/// Fraction of `entity`'s neighbours under `rel` that are minority;
/// `is_minority` is indexed by rows of the relation's destination type.
pub fn minority_proportion(graph: &HeteroGraph, is_minority: &[bool], entity: NodeRef, rel: usize) -> Result<f64> {
    let nb = graph.neighbor_rows(entity, rel)?;
    if nb.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "entity {} has no neighbours under relation {rel}",
            entity.row_id
        )));
    }
    Ok(nb.iter().filter(|&&v| is_minority[v]).count() as f64 / nb.len() as f64)
}

/// Largest singular value by power iteration on `WᵀW`, stopping once the
/// estimate changes by less than `tol` (relative).
pub fn spectral_norm(w: &Tensor, tol: f64) -> f64 {
    let n = w.cols();
    if n == 0 || w.rows() == 0 {
        return 0.0;
    }
    let mut rng = Rng::new(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mut sigma = 0.0;
    for _ in 0..100_000 {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let wv: Vec<f64> = (0..w.rows())
            .map(|i| w.row(i).iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let next = wv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut wtwv = vec![0.0; n];
        for (i, s) in wv.iter().enumerate() {
            for (o, a) in wtwv.iter_mut().zip(w.row(i)) {
                *o += a * s;
            }
        }
        v = wtwv;
        if (next - sigma).abs() <= tol * next.max(f64::MIN_POSITIVE) {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Linear relational layer `X' = X W_e + Σ_r mean_{N_r}(X) W_r`, repeated.
#[derive(Clone, Debug)]
pub struct LinearStack {
    pub w_self: Option<Tensor>,
    /// `(relation id, W_r)`; relations not listed are ignored.
    pub w_rel: Vec<(usize, Tensor)>,
}

impl LinearStack {
    fn check(&self, graph: &HeteroGraph, x: &Tensor) -> Result<()> {
        let d = x.cols();
        for (r, w) in &self.w_rel {
            let rel = graph.relation(*r);
            if rel.src_type != 0 || rel.dst_type != 0 {
                return Err(Error::InvalidArgument("linear stack expects a single node type".into()));
            }
            if w.shape() != [d, d] {
                return Err(Error::Shape {
                    op: "linear_stack",
                    left: x.shape(),
                    right: w.shape(),
                });
            }
        }
        if let Some(w) = &self.w_self {
            if w.shape() != [d, d] {
                return Err(Error::Shape {
                    op: "linear_stack",
                    left: x.shape(),
                    right: w.shape(),
                });
            }
        }
        if x.rows() != graph.num_nodes(0) {
            return Err(Error::InvalidArgument("one feature row per node is required".into()));
        }
        Ok(())
    }

    /// One layer over every node of type 0.
    pub fn step(&self, graph: &HeteroGraph, x: &Tensor) -> Result<Tensor> {
        self.check(graph, x)?;
        let mut out = match &self.w_self {
            Some(w) => x.matmul(w)?,
            None => Tensor::zeros(x.rows(), x.cols()),
        };
        for (r, w) in &self.w_rel {
            let adj = graph.adjacency(*r);
            let mut h = Tensor::zeros(x.rows(), x.cols());
            for v in 0..x.rows() {
                let nb = adj.row(v);
                if nb.is_empty() {
                    continue;
                }
                let row = h.row_mut(v);
                for &u in nb {
                    for (o, a) in row.iter_mut().zip(x.row(u)) {
                        *o += a;
                    }
                }
                row.iter_mut().for_each(|o| *o /= nb.len() as f64);
            }
            let hw = h.matmul(w)?;
            for (o, a) in out.data_mut().iter_mut().zip(hw.data()) {
                *o += a;
            }
        }
        Ok(out)
    }
}

/// Class-conditional neighbour means of one entity under one relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConditionalMeans {
    pub relation: usize,
    pub layer: usize,
    pub mu_minor: Option<Vec<f64>>,
    pub mu_major: Option<Vec<f64>>,
    pub pi: f64,
}

pub fn class_conditional_means(
    graph: &HeteroGraph,
    x: &Tensor,
    is_minority: &[bool],
    entity: usize,
    relation: usize,
    layer: usize,
) -> ClassConditionalMeans {
    let nb = graph.adjacency(relation).row(entity);
    let mean_of = |minor: bool| -> Option<Vec<f64>> {
        let sel: Vec<usize> = nb.iter().copied().filter(|&v| is_minority[v] == minor).collect();
        if sel.is_empty() {
            return None;
        }
        let mut m = vec![0.0; x.cols()];
        for &v in &sel {
            for (o, a) in m.iter_mut().zip(x.row(v)) {
                *o += a;
            }
        }
        m.iter_mut().for_each(|o| *o /= sel.len() as f64);
        Some(m)
    };
    let n_min = nb.iter().filter(|&&v| is_minority[v]).count();
    ClassConditionalMeans {
        relation,
        layer,
        mu_minor: mean_of(true),
        mu_major: mean_of(false),
        pi: if nb.is_empty() { 0.0 } else { n_min as f64 / nb.len() as f64 },
    }
}

/// Per-layer signal magnitudes of one probe entity.
///
/// `pooled[l]` is the neighbour minority signal at layer `l` over all
/// listed relations. `per_relation[l][k]` is the same quantity restricted to
/// the `k`-th listed relation. For `l >= 1`, `attributed[l]` is the part of
/// the probe's layer-`l` representation explained by its minority
/// neighbours, `X_e^l - X_e^{l-1} W_e - Σ_r μ_major W_r`, and `bound[l]` is
/// `Σ_r π_r ‖W_r‖ ‖Δ_r^{l-1}‖`. `pooled_bound[l]` uses the pooled signal
/// in place of the per-relation one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseCurve {
    pub probe: usize,
    pub pooled: Vec<f64>,
    pub per_relation: Vec<Vec<Option<f64>>>,
    pub attributed: Vec<Option<f64>>,
    pub bound: Vec<Option<f64>>,
    pub pooled_bound: Vec<Option<f64>>,
    pub pi: Vec<f64>,
    pub weight_norms: Vec<f64>,
}

pub const BOUND_TOL: f64 = 1e-9;

impl CollapseCurve {
    pub fn num_layers(&self) -> usize {
        self.pooled.len() - 1
    }

    /// `attributed <= bound + tol` at every layer.
    pub fn bound_holds(&self) -> bool {
        self.attributed
            .iter()
            .zip(&self.bound)
            .all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => *a <= b + BOUND_TOL,
                _ => true,
            })
    }
}

/// Runs `layers` steps of the linear stack from `x0` and records the probe's
/// signal curve. Returns `None` when the probe has a single-class
/// neighbourhood under any listed relation.
pub fn collapse_curve(
    graph: &HeteroGraph,
    is_minority: &[bool],
    stack: &LinearStack,
    x0: &Tensor,
    layers: usize,
    probe: usize,
) -> Result<Option<CollapseCurve>> {
    stack.check(graph, x0)?;
    if is_minority.len() != graph.num_nodes(0) {
        return Err(Error::InvalidArgument("one label per node is required".into()));
    }
    let rels: Vec<usize> = stack.w_rel.iter().map(|(r, _)| *r).collect();
    let mut pooled_nb = Vec::new();
    for &r in &rels {
        let nb = graph.adjacency(r).row(probe);
        if !nb.is_empty() {
            let n_min = nb.iter().filter(|&&v| is_minority[v]).count();
            if n_min == 0 || n_min == nb.len() {
                return Ok(None);
            }
        }
        pooled_nb.extend_from_slice(nb);
    }
    if minority_signal(x0, is_minority, &pooled_nb).is_none() {
        return Ok(None);
    }
    let norms: Vec<f64> = stack.w_rel.iter().map(|(_, w)| spectral_norm(w, 1e-12)).collect();
    let mut xs = vec![x0.clone()];
    for _ in 0..layers {
        let next = stack.step(graph, xs.last().unwrap())?;
        xs.push(next);
    }
    let mut curve = CollapseCurve {
        probe,
        pooled: Vec::with_capacity(layers + 1),
        per_relation: Vec::with_capacity(layers + 1),
        attributed: vec![None],
        bound: vec![None],
        pooled_bound: vec![None],
        pi: Vec::new(),
        weight_norms: norms.clone(),
    };
    let mut ccm_prev: Vec<ClassConditionalMeans> = Vec::new();
    for (l, x) in xs.iter().enumerate() {
        let signal = minority_signal(x, is_minority, &pooled_nb).expect("checked above");
        curve.pooled.push(norm(&signal));
        let ccm: Vec<ClassConditionalMeans> = rels
            .iter()
            .map(|&r| class_conditional_means(graph, x, is_minority, probe, r, l))
            .collect();
        curve.per_relation.push(ccm.iter().map(|c| delta(c).map(|d| norm(&d))).collect());
        if l == 0 {
            curve.pi = ccm.iter().map(|c| c.pi).collect();
        } else {
            let x_prev = &xs[l - 1];
            let mut resid = x.row(probe).to_vec();
            if let Some(w) = &stack.w_self {
                sub_vec_mat(&mut resid, x_prev.row(probe), w);
            }
            let (mut bound, mut pooled_bound) = (0.0, 0.0);
            for ((c, (_, w)), n) in ccm_prev.iter().zip(&stack.w_rel).zip(&norms) {
                if let Some(maj) = &c.mu_major {
                    sub_vec_mat(&mut resid, maj, w);
                }
                if let Some(d) = delta(c) {
                    bound += c.pi * n * norm(&d);
                }
                pooled_bound += c.pi * n * curve.pooled[l - 1];
            }
            curve.attributed.push(Some(norm(&resid)));
            curve.bound.push(Some(bound));
            curve.pooled_bound.push(Some(pooled_bound));
        }
        ccm_prev = ccm;
    }
    Ok(Some(curve))
}

fn delta(c: &ClassConditionalMeans) -> Option<Vec<f64>> {
    let (a, b) = (c.mu_minor.as_ref()?, c.mu_major.as_ref()?);
    Some(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// `out -= v · W` for a row vector `v`.
fn sub_vec_mat(out: &mut [f64], v: &[f64], w: &Tensor) {
    for (i, vi) in v.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(w.row(i)) {
            *o -= vi * a;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Single-relation star fixture: minorities `0..n_minor` form a directed
/// cycle, each also pointing at `majors_per_minor` majority nodes of its
/// own. Returns the graph (one type, relation 0 is the fixture relation) and
/// the minority mask.
pub fn star_fixture(n_minor: usize, majors_per_minor: usize) -> Result<(HeteroGraph, Vec<bool>)> {
    let n = n_minor * (1 + majors_per_minor);
    let mut edges = Vec::new();
    for i in 0..n_minor {
        edges.push((i, (i + 1) % n_minor));
        for j in 0..majors_per_minor {
            edges.push((i, n_minor + i * majors_per_minor + j));
        }
    }
    let g = HeteroGraph::from_edges(
        vec!["entity".into()],
        vec![n],
        vec![EdgeSpec {
            src_type: 0,
            dst_type: 0,
            name: "link".into(),
            edges,
        }],
    )?;
    let mask = (0..n).map(|v| v < n_minor).collect();
    Ok((g, mask))
}

/// Random single-type multigraph with `num_relations` fixture relations
/// (ids `0, 2, 4, ...`) where every node has at least one minority and one
/// majority neighbour under each relation.
pub fn random_fixture(
    n: usize,
    num_relations: usize,
    max_degree: usize,
    rng: &mut Rng,
) -> Result<(HeteroGraph, Vec<bool>)> {
    if n < 2 || max_degree < 2 {
        return Err(Error::InvalidArgument("need n >= 2 and max_degree >= 2".into()));
    }
    let n_min = 1 + rng.below((n / 3).max(1));
    let mask: Vec<bool> = (0..n).map(|v| v < n_min).collect();
    let specs = (0..num_relations)
        .map(|r| {
            let mut edges = Vec::new();
            for v in 0..n {
                edges.push((v, rng.below(n_min)));
                edges.push((v, n_min + rng.below(n - n_min)));
                for _ in 0..rng.below(max_degree - 1) {
                    edges.push((v, rng.below(n)));
                }
            }
            EdgeSpec {
                src_type: 0,
                dst_type: 0,
                name: format!("r{r}"),
                edges,
            }
        })
        .collect();
    let g = HeteroGraph::from_edges(vec!["entity".into()], vec![n], specs)?;
    Ok((g, mask))
}

/// Energy distance between two point sets (V-statistic):
/// `2 E‖a-b‖ - E‖a-a'‖ - E‖b-b'‖`.
pub fn consistency_shift<A: AsRef<[f64]>, B: AsRef<[f64]>>(true_set: &[A], synthetic: &[B]) -> Result<f64> {
    if true_set.is_empty() || synthetic.is_empty() {
        return Err(Error::InvalidArgument("both signature sets must be non-empty".into()));
    }
    let w = true_set[0].as_ref().len();
    if true_set.iter().any(|s| s.as_ref().len() != w) || synthetic.iter().any(|s| s.as_ref().len() != w) {
        return Err(Error::InvalidArgument("signatures differ in width".into()));
    }
    let a: Vec<&[f64]> = true_set.iter().map(|s| s.as_ref()).collect();
    let b: Vec<&[f64]> = synthetic.iter().map(|s| s.as_ref()).collect();
    let e = 2.0 * mean_dist(&a, &b) - mean_dist(&a, &a) - mean_dist(&b, &b);
    Ok(e.max(0.0))
}

fn mean_dist(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += x.iter().zip(*y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Permutation null for [`consistency_shift`]: the observed statistic and
/// the `q`-quantile of `n_perm` label-shuffled statistics.
pub fn permutation_quantile<A: AsRef<[f64]>>(a: &[A], b: &[A], n_perm: usize, q: f64, rng: &mut Rng) -> Result<(f64, f64)> {
    let observed = consistency_shift(a, b)?;
    let pooled: Vec<&[f64]> = a.iter().chain(b).map(|s| s.as_ref()).collect();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    let mut null = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        rng.shuffle(&mut idx);
        let (x, y) = idx.split_at(a.len());
        let x: Vec<&[f64]> = x.iter().map(|&i| pooled[i]).collect();
        let y: Vec<&[f64]> = y.iter().map(|&i| pooled[i]).collect();
        null.push(consistency_shift(&x, &y)?);
    }
    null.sort_by(f64::total_cmp);
    let k = ((q * n_perm as f64).ceil() as usize).clamp(1, n_perm.max(1)) - 1;
    Ok((observed, null.get(k).copied().unwrap_or(0.0)))
}
