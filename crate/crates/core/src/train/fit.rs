use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BankRefresh, TrainConfig};
use super::metrics::{ConfusionMatrix, MetricsReport};
use super::model::{combined_loss, RelMossModel, SynthSpec};
use super::task::{Split, Task};
use crate::encode::{fit_statistics, FeatureStats};
use crate::error::{Error, Result};
use crate::gate::{GateLog, GateMode};
use crate::graph::{sample_neighborhood_filtered, HeteroGraph, NodeRef, UNLIMITED};
use crate::rdb::RelationalDatabase;
use crate::syn::{compute_signatures, plan_synthesis, BankEntry, MemoryBank};
use crate::tensor::{Checkpoint, Optimizer, ParamStore, Reduction, Rng, Tape, Tensor};

/// Training summary for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_cls: f64,
    pub loss_syn: f64,
    pub n_synthetic: usize,
    /// Mean gate value per relation over all layers and batches.
    pub gate_means: Vec<Option<f64>>,
    pub val: Option<MetricsReport>,
}

/// One synthetic sample of the final epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub epoch: usize,
    pub anchor: usize,
    pub partner: usize,
    pub lambda: f64,
    pub distance: f64,
    pub signature: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub synth_log: Vec<SynthRecord>,
    /// Epoch whose parameters were kept when selecting on validation.
    pub selected_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn synthetic_signatures(&self) -> Vec<Vec<f64>> {
        self.synth_log.iter().map(|r| r.signature.clone()).collect()
    }
}

/// A model together with its parameters and cached target signatures.
#[derive(Clone, Debug)]
pub struct RelMoss {
    pub model: RelMossModel,
    pub store: ParamStore,
    signatures: Tensor,
    epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: TrainConfig,
    feature_stats: FeatureStats,
    minority_label: u8,
    target_table: String,
    #[serde(default)]
    epoch: usize,
}

impl RelMoss {
    /// Fits feature statistics on the training split and initialises a model.
    pub fn new(db: &RelationalDatabase, graph: &HeteroGraph, task: &Task, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let minority = task.minority_label()?;
        let stats = fit_statistics(db, &task.train_mask(db))?;
        Self::with_stats(db, graph, task.table, stats, minority, config)
    }

    fn with_stats(
        db: &RelationalDatabase,
        graph: &HeteroGraph,
        table: usize,
        stats: FeatureStats,
        minority: u8,
        config: TrainConfig,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let model = RelMossModel::new(db, graph, table, stats, minority, config, &mut store)?;
        let signatures = compute_signatures(graph, table);
        Ok(RelMoss {
            model,
            store,
            signatures,
            epoch: 0,
        })
    }

    /// Epoch whose parameters the model holds; 0 before training.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.model.config
    }

    /// Signatures of every row of the target table.
    pub fn signatures(&self) -> &Tensor {
        &self.signatures
    }

    /// Bank capacity actually used: `U` capped by the number of training
    /// minorities, and at least 2.
    pub fn effective_bank_capacity(&self, task: &Task) -> usize {
        let n_minor = task
            .indices(Split::Train)
            .into_iter()
            .filter(|&i| task.labels[i] == self.model.minority_label)
            .count();
        self.config().bank_capacity.min(n_minor).max(2)
    }

    pub fn fit(&mut self, graph: &HeteroGraph, task: &Task) -> Result<TrainOutcome> {
        let cfg = self.model.config.clone();
        let minority = self.model.minority_label;
        let train_idx = task.indices(Split::Train);
        if !train_idx.iter().any(|&i| task.labels[i] == minority) {
            return Err(Error::DegenerateTraining);
        }
        let root = Rng::new(cfg.seed);
        let (mut order_rng, mut sampler, mut synth_rng) = {
            let mut r = root.clone();
            (r.fork(2), r.fork(3), r.fork(4))
        };
        let mut optimizer = Optimizer::new(cfg.optimizer, cfg.lr, &self.store);
        let mut bank = MemoryBank::new(self.effective_bank_capacity(task), cfg.d, self.model.sig_width)?;
        let mode = self.model.gate_mode();
        let has_val = !task.indices(Split::Val).is_empty();
        let mut outcome = TrainOutcome::default();
        let mut best: Option<((f64, f64), usize, ParamStore)> = None;
        for epoch in 1..=cfg.epochs {
            let last_epoch = epoch == cfg.epochs;
            let mut order = train_idx.clone();
            order_rng.shuffle(&mut order);
            let mut pending = Vec::new();
            let mut gate_log = GateLog::new(graph.num_relations());
            let (mut sum_loss, mut sum_cls, mut sum_syn, mut batches, mut n_syn) = (0.0, 0.0, 0.0, 0usize, 0usize);
            for chunk in order.chunks(cfg.batch_size) {
                let rows: Vec<usize> = chunk.iter().map(|&i| task.rows[i]).collect();
                let labels: Vec<u8> = chunk.iter().map(|&i| task.labels[i]).collect();
                let seeds: Vec<NodeRef> = rows.iter().map(|&r| NodeRef::new(task.table, r)).collect();
                let sample = sample_neighborhood_filtered(
                    graph,
                    &seeds,
                    &cfg.fanouts,
                    cfg.temporal_sampling,
                    Rng::new(sampler.next_u64()),
                )?;
                let mut tape = Tape::new();
                let log = (mode == GateMode::Learned).then_some(&mut gate_log);
                let x = self.model.embed(&mut tape, &self.store, &sample, mode, log)?;
                let seed_sigs = self.signatures.select_rows(&rows);
                let mut specs = Vec::new();
                if !cfg.disable_syn {
                    let xv = tape.value(x);
                    let minor: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority).collect();
                    let entries = minor.iter().map(|&i| BankEntry {
                        x: xv.row(i).to_vec(),
                        s: seed_sigs.row(i).to_vec(),
                        node: rows[i],
                    });
                    match cfg.bank_refresh {
                        BankRefresh::Batch => bank.push(entries)?,
                        BankRefresh::Epoch => pending.extend(entries),
                    }
                    let n_major = labels.len() - minor.len();
                    let quota = n_major.saturating_sub(minor.len()).min(cfg.max_syn());
                    if !minor.is_empty() && bank.len() >= 2 {
                        for j in 0..quota {
                            let a = minor[j % minor.len()];
                            let plan = match plan_synthesis(
                                &bank,
                                xv.row(a),
                                seed_sigs.row(a),
                                cfg.omega,
                                (cfg.beta_alpha, cfg.beta_beta),
                                &mut synth_rng,
                                Some(rows[a]),
                            ) {
                                Ok(p) => p,
                                Err(Error::BankNotWarm) => continue,
                                Err(e) => return Err(e),
                            };
                            let partner = bank.get(plan.bank_index);
                            let spec = SynthSpec {
                                anchor: a,
                                lambda: plan.lambda,
                                partner_x: partner.x.clone(),
                                partner_s: partner.s.clone(),
                            };
                            if last_epoch {
                                outcome.synth_log.push(SynthRecord {
                                    epoch,
                                    anchor: rows[a],
                                    partner: plan.partner,
                                    lambda: plan.lambda,
                                    distance: plan.distance,
                                    signature: seed_sigs
                                        .row(a)
                                        .iter()
                                        .zip(&spec.partner_s)
                                        .map(|(s, p)| plan.lambda * s + (1.0 - plan.lambda) * p)
                                        .collect(),
                                });
                            }
                            specs.push(spec);
                        }
                    }
                }
                n_syn += specs.len();
                let out = self
                    .model
                    .loss_from_embeddings(&mut tape, &self.store, x, &seed_sigs, &labels, &specs)?;
                sum_loss += tape.value(out.loss).item();
                sum_cls += out.loss_cls;
                sum_syn += out.loss_syn;
                batches += 1;
                tape.backward(out.loss)?;
                self.store.zero_grad();
                tape.accumulate_into(&mut self.store);
                optimizer.step(&mut self.store);
                if !self.store.all_finite() {
                    return Err(Error::NonFinite(format!("parameters after epoch {epoch} step {batches}")));
                }
            }
            if !pending.is_empty() {
                bank.push(pending)?;
            }
            let val = if has_val && cfg.validate_every > 0 && epoch % cfg.validate_every == 0 {
                Some(self.evaluate(graph, task, Split::Val, epoch)?)
            } else {
                None
            };
            let nb = batches.max(1) as f64;
            let record = EpochRecord {
                epoch,
                loss: sum_loss / nb,
                loss_cls: sum_cls / nb,
                loss_syn: sum_syn / nb,
                n_synthetic: n_syn,
                gate_means: (0..graph.num_relations()).map(|r| gate_log.mean(r)).collect(),
                val,
            };
            log::info!(
                "epoch {epoch}: loss {:.4} (cls {:.4}, syn {:.4}), {} synthetic",
                record.loss,
                record.loss_cls,
                record.loss_syn,
                n_syn
            );
            if let (true, Some(v)) = (cfg.select_best_val, &record.val) {
                let key = (v.g_mean, v.b_acc);
                if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                    best = Some((key, epoch, self.store.clone()));
                }
            }
            outcome.history.push(record);
            self.epoch = epoch;
        }
        if let Some((_, epoch, store)) = best {
            self.store = store;
            self.epoch = epoch;
            outcome.selected_epoch = Some(epoch);
        }
        Ok(outcome)
    }

    /// Probability of label 1 and per-entity loss terms for one split.
    pub fn predict(&self, graph: &HeteroGraph, task: &Task, split: Split) -> Result<Prediction> {
        let cfg = &self.model.config;
        let idx = task.indices(split);
        let fanouts = vec![cfg.eval_fanout.unwrap_or(UNLIMITED); cfg.num_layers];
        let mode = self.model.gate_mode();
        let mut pred = Prediction::default();
        for chunk in idx.chunks(cfg.batch_size) {
            let rows: Vec<usize> = chunk.iter().map(|&i| task.rows[i]).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| task.labels[i]).collect();
            let seeds: Vec<NodeRef> = rows.iter().map(|&r| NodeRef::new(task.table, r)).collect();
            let sample = sample_neighborhood_filtered(graph, &seeds, &fanouts, cfg.temporal_sampling, Rng::new(0))?;
            let mut tape = Tape::new();
            let x = self.model.embed(&mut tape, &self.store, &sample, mode, None)?;
            let sigs = self.signatures.select_rows(&rows);
            let (_, logits, recon) = self.model.heads(&mut tape, &self.store, x, &sigs)?;
            let (_, cls, syn) = combined_loss(
                &mut tape,
                logits,
                &labels,
                recon,
                &sigs,
                0.0,
                self.model.minority_label,
                Reduction::Sum,
            )?;
            pred.sum_cls += cls;
            pred.sum_syn += syn;
            pred.n_minority += labels.iter().filter(|&&l| l == self.model.minority_label).count();
            pred.probabilities
                .extend(tape.value(logits).data().iter().map(|&z| crate::tensor::sigmoid(z)));
            pred.logits.extend_from_slice(tape.value(logits).data());
            pred.labels.extend(labels);
            pred.rows.extend(rows);
        }
        Ok(pred)
    }

    /// Final-layer seed representations of `rows` of the target table,
    /// using the evaluation fanout.
    pub fn embed_rows(&self, graph: &HeteroGraph, rows: &[usize]) -> Result<Tensor> {
        let cfg = &self.model.config;
        let fanouts = vec![cfg.eval_fanout.unwrap_or(UNLIMITED); cfg.num_layers];
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(cfg.batch_size) {
            let seeds: Vec<NodeRef> = chunk.iter().map(|&r| NodeRef::new(self.model.target_table, r)).collect();
            let sample = sample_neighborhood_filtered(graph, &seeds, &fanouts, cfg.temporal_sampling, Rng::new(0))?;
            let mut tape = Tape::new();
            let x = self.model.embed(&mut tape, &self.store, &sample, self.model.gate_mode(), None)?;
            let xv = tape.value(x);
            out.extend((0..xv.rows()).map(|i| xv.row(i).to_vec()));
        }
        if out.is_empty() {
            return Ok(Tensor::zeros(0, cfg.d));
        }
        Tensor::from_rows(&out)
    }

    /// Runs the synthesizer once over the training minorities with the
    /// current parameters and distance weight `omega`. The bank holds the
    /// last `U_eff` training minorities; every minority anchors `per_anchor`
    /// samples. The anchor order and λ draws depend only on `seed`, so two
    /// calls differing in `omega` differ only in the partners chosen.
    pub fn probe_synthesis(
        &self,
        graph: &HeteroGraph,
        task: &Task,
        omega: f64,
        per_anchor: usize,
        seed: u64,
    ) -> Result<Vec<SynthRecord>> {
        let cfg = &self.model.config;
        let rows: Vec<usize> = task
            .indices(Split::Train)
            .into_iter()
            .filter(|&i| task.labels[i] == self.model.minority_label)
            .map(|i| task.rows[i])
            .collect();
        let x = self.embed_rows(graph, &rows)?;
        let sigs = self.signatures.select_rows(&rows);
        let mut bank = MemoryBank::new(self.effective_bank_capacity(task), cfg.d, self.model.sig_width)?;
        bank.push((0..rows.len()).map(|i| BankEntry {
            x: x.row(i).to_vec(),
            s: sigs.row(i).to_vec(),
            node: rows[i],
        }))?;
        let mut rng = Rng::new(seed);
        let mut out = Vec::new();
        for i in 0..rows.len() {
            for _ in 0..per_anchor {
                let plan = match plan_synthesis(
                    &bank,
                    x.row(i),
                    sigs.row(i),
                    omega,
                    (cfg.beta_alpha, cfg.beta_beta),
                    &mut rng,
                    Some(rows[i]),
                ) {
                    Ok(p) => p,
                    Err(Error::BankNotWarm) => continue,
                    Err(e) => return Err(e),
                };
                let partner = bank.get(plan.bank_index);
                out.push(SynthRecord {
                    epoch: 0,
                    anchor: rows[i],
                    partner: plan.partner,
                    lambda: plan.lambda,
                    distance: plan.distance,
                    signature: sigs
                        .row(i)
                        .iter()
                        .zip(&partner.s)
                        .map(|(a, b)| plan.lambda * a + (1.0 - plan.lambda) * b)
                        .collect(),
                });
            }
        }
        Ok(out)
    }

    /// Confusion-matrix metrics with threshold 0.5 on the sigmoid output.
    pub fn evaluate(&self, graph: &HeteroGraph, task: &Task, split: Split, epoch: usize) -> Result<MetricsReport> {
        let p = self.predict(graph, task, split)?;
        Ok(p.report(epoch, split))
    }

    pub fn checkpoint(&self, graph: &HeteroGraph) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            config: self.model.config.clone(),
            feature_stats: self.model.encoder.stats(),
            minority_label: self.model.minority_label,
            target_table: graph.type_name(self.model.target_table).to_string(),
            epoch: self.epoch,
        };
        Ok(Checkpoint::from_store(&self.store, serde_json::to_value(meta)?))
    }

    pub fn save(&self, graph: &HeteroGraph, path: &Path) -> Result<()> {
        self.checkpoint(graph)?.save(path)
    }

    /// Rebuilds a model from a checkpoint written by [`RelMoss::save`].
    pub fn load(db: &RelationalDatabase, graph: &HeteroGraph, path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let meta: CheckpointMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
        let table = graph
            .type_index(&meta.target_table)
            .ok_or_else(|| Error::UnknownTable(meta.target_table.clone()))?;
        let mut m = Self::with_stats(db, graph, table, meta.feature_stats, meta.minority_label, meta.config)?;
        ckpt.load_into(&mut m.store)?;
        m.epoch = meta.epoch;
        Ok(m)
    }
}

/// Raw outputs of [`RelMoss::predict`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub rows: Vec<usize>,
    pub labels: Vec<u8>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    sum_cls: f64,
    sum_syn: f64,
    n_minority: usize,
}

impl Prediction {
    pub fn predicted_labels(&self) -> Vec<u8> {
        self.probabilities.iter().map(|&p| (p >= 0.5) as u8).collect()
    }

    pub fn report(&self, epoch: usize, split: Split) -> MetricsReport {
        let cm = ConfusionMatrix::from_predictions(&self.labels, &self.predicted_labels());
        let n = self.labels.len().max(1) as f64;
        let syn = if self.n_minority > 0 {
            self.sum_syn / self.n_minority as f64
        } else {
            0.0
        };
        MetricsReport::new(epoch, split.as_str(), cm, self.sum_cls / n, syn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::synthgen::{generate, SynthConfig};

    fn tiny() -> (RelationalDatabase, HeteroGraph, Task) {
        users(40)
    }

    /// `n` users, a fifth of them minority.
    fn users(n: usize) -> (RelationalDatabase, HeteroGraph, Task) {
        let ds = generate(&SynthConfig {
            num_users: n,
            num_items: 10,
            imbalance_ratio: 4.0,
            min_degree: 3,
            max_degree: 6,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let g = build_graph(&ds.db);
        (ds.db, g, ds.task)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            d: 8,
            d_cat: 4,
            batch_size: 8,
            fanouts: vec![4, 4],
            epochs: 1,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_epoch_is_bit_identical() {
        let (db, g, task) = users(20);
        let run = || {
            let mut m = RelMoss::new(&db, &g, &task, small_config()).unwrap();
            let out = m.fit(&g, &task).unwrap();
            let params: Vec<Vec<u64>> = m
                .store
                .iter()
                .map(|p| p.value.data().iter().map(|v| v.to_bits()).collect())
                .collect();
            (params, out)
        };
        let (a, oa) = run();
        let (b, ob) = run();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }

    #[test]
    fn disable_syn_produces_no_synthetic_rows() {
        let (db, g, task) = tiny();
        let cfg = TrainConfig {
            disable_syn: true,
            epochs: 2,
            ..small_config()
        };
        let mut m = RelMoss::new(&db, &g, &task, cfg).unwrap();
        let out = m.fit(&g, &task).unwrap();
        assert!(out.history.iter().all(|r| r.n_synthetic == 0));
        assert!(out.synth_log.is_empty());
        let full = TrainConfig {
            epochs: 2,
            ..small_config()
        };
        let mut m = RelMoss::new(&db, &g, &task, full).unwrap();
        let out = m.fit(&g, &task).unwrap();
        assert!(out.history.iter().any(|r| r.n_synthetic > 0));
    }

    #[test]
    fn single_class_training_split_is_rejected() {
        let (db, g, mut task) = tiny();
        for l in task.labels.iter_mut() {
            *l = 0;
        }
        assert!(matches!(
            RelMoss::new(&db, &g, &task, small_config()),
            Err(Error::DegenerateTraining)
        ));
    }

    #[test]
    fn checkpoint_round_trip_predicts_identically() {
        let (db, g, task) = tiny();
        let mut m = RelMoss::new(&db, &g, &task, small_config()).unwrap();
        m.fit(&g, &task).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&g, &path).unwrap();
        let back = RelMoss::load(&db, &g, &path).unwrap();
        let a = m.predict(&g, &task, Split::Test).unwrap();
        let b = back.predict(&g, &task, Split::Test).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.epoch(), m.epoch());
        assert_eq!(m.epoch(), 1);
    }

    #[test]
    fn bank_capacity_is_capped_by_training_minorities() {
        let (db, g, task) = tiny();
        let m = RelMoss::new(&db, &g, &task, small_config()).unwrap();
        let n = task
            .indices(Split::Train)
            .into_iter()
            .filter(|&i| task.labels[i] == 1)
            .count();
        assert_eq!(m.effective_bank_capacity(&task), n.max(2));
    }

    #[test]
    fn probe_differs_only_in_partners() {
        let (db, g, task) = tiny();
        let m = RelMoss::new(&db, &g, &task, small_config()).unwrap();
        let a = m.probe_synthesis(&g, &task, 50.0, 2, 1).unwrap();
        let b = m.probe_synthesis(&g, &task, 0.0, 2, 1).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.anchor, x.lambda), (y.anchor, y.lambda));
        }
    }
}
