use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::encode::{EncoderConfig, FeatureEncoder, FeatureStats};
use crate::error::{Error, Result};
use crate::gate::{layer_forward, GateLog, GateMode, RelGateLayer};
use crate::graph::{HeteroGraph, NeighborSample, RelationType};
use crate::rdb::RelationalDatabase;
use crate::syn::signature_width;
use crate::tensor::{ParamId, ParamStore, Reduction, Rng, Tape, Tensor, Var};

/// One synthetic row: interpolation between seed `anchor` (local index,
/// differentiable) and a detached bank entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub anchor: usize,
    pub lambda: f64,
    pub partner_x: Vec<f64>,
    pub partner_s: Vec<f64>,
}

/// Loss terms of one forward pass.
pub struct LossOutput {
    pub loss: Var,
    pub logits: Var,
    pub loss_cls: f64,
    pub loss_syn: f64,
    /// Signatures of every row fed to the heads, real rows first.
    pub signatures: Tensor,
}

/// Encoders, gated layers, fusion and the two heads.
#[derive(Clone, Debug)]
pub struct RelMossModel {
    pub config: TrainConfig,
    pub encoder: FeatureEncoder,
    pub layers: Vec<RelGateLayer>,
    pub w_x: ParamId,
    pub w_s: ParamId,
    pub b_fuse: ParamId,
    pub w_cls: ParamId,
    pub b_cls: ParamId,
    pub w_syn: ParamId,
    pub b_syn: ParamId,
    pub target_table: usize,
    pub sig_width: usize,
    pub minority_label: u8,
    relations: Vec<RelationType>,
}

impl RelMossModel {
    /// Registers all parameters in `store`; initialisation draws from a
    /// stream forked off `config.seed`.
    pub fn new(
        db: &RelationalDatabase,
        graph: &HeteroGraph,
        target_table: usize,
        stats: FeatureStats,
        minority_label: u8,
        config: TrainConfig,
        store: &mut ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed).fork(1);
        let enc_cfg = EncoderConfig {
            d: config.d,
            d_cat: config.d_cat,
            proj_layers: config.proj_layers,
        };
        let encoder = FeatureEncoder::new(db, stats, enc_cfg, store, &mut rng)?;
        let d = config.d;
        let layers = (0..config.num_layers)
            .map(|l| {
                RelGateLayer::new(
                    &format!("gate{l}"),
                    d,
                    graph.num_relations(),
                    config.per_relation_qkv,
                    store,
                    &mut rng,
                )
            })
            .collect();
        let sig_width = signature_width(graph);
        let w_x = store.add("fuse.w_x", Tensor::glorot(d, d, &mut rng));
        let w_s = store.add("fuse.w_s", Tensor::glorot(sig_width, d, &mut rng));
        let b_fuse = store.add("fuse.b", Tensor::zeros(1, d));
        let w_cls = store.add("cls.w", Tensor::glorot(d, 1, &mut rng));
        let b_cls = store.add("cls.b", Tensor::zeros(1, 1));
        let w_syn = store.add("syn.w", Tensor::glorot(d, sig_width, &mut rng));
        let b_syn = store.add("syn.b", Tensor::zeros(1, sig_width));
        Ok(RelMossModel {
            config,
            encoder,
            layers,
            w_x,
            w_s,
            b_fuse,
            w_cls,
            b_cls,
            w_syn,
            b_syn,
            target_table,
            sig_width,
            minority_label,
            relations: graph.relations().to_vec(),
        })
    }

    pub fn gate_mode(&self) -> GateMode {
        if self.config.disable_gate {
            GateMode::Off
        } else {
            GateMode::Learned
        }
    }

    /// Final-layer representations of the sample's seeds (`n_seeds × d`).
    pub fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &NeighborSample,
        mode: GateMode,
        mut log: Option<&mut GateLog>,
    ) -> Result<Var> {
        let depth = self.layers.len();
        if sample.num_hops() != depth {
            return Err(Error::InvalidArgument(format!(
                "sample has {} hops, model has {depth} layers",
                sample.num_hops()
            )));
        }
        let n0 = sample.count_within(depth);
        let mut x = self.encoder.encode_nodes(tape, store, &sample.nodes()[..n0])?;
        for (i, layer) in self.layers.iter().enumerate() {
            let n_out = sample.count_within(depth - 1 - i);
            let last = i + 1 == depth;
            x = layer_forward(
                tape,
                store,
                layer,
                &self.relations,
                sample,
                x,
                n_out,
                mode,
                !last,
                log.as_deref_mut(),
            )?;
        }
        Ok(x)
    }

    /// `X̃ = relu(X W_x + S W_s + b)`, then the logit and reconstruction heads.
    pub fn heads(&self, tape: &mut Tape, store: &ParamStore, x: Var, s: &Tensor) -> Result<(Var, Var, Var)> {
        let s = tape.constant(s.clone());
        let [w_x, w_s, b, w_cls, b_cls, w_syn, b_syn] =
            [self.w_x, self.w_s, self.b_fuse, self.w_cls, self.b_cls, self.w_syn, self.b_syn]
                .map(|p| tape.param(store, p));
        let zx = tape.matmul(x, w_x)?;
        let zs = tape.matmul(s, w_s)?;
        let z = tape.add(zx, zs)?;
        let z = tape.add_row(z, b)?;
        let fused = tape.relu(z);
        let logits = tape.matmul(fused, w_cls)?;
        let logits = tape.add_row(logits, b_cls)?;
        let recon = tape.matmul(fused, w_syn)?;
        let recon = tape.add_row(recon, b_syn)?;
        Ok((fused, logits, recon))
    }

    /// Appends synthetic rows to the seed batch and evaluates
    /// `L_CLS + γ · L_Syn`, the latter over real and synthetic minorities.
    pub fn loss_from_embeddings(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        seed_sigs: &Tensor,
        labels: &[u8],
        synth: &[SynthSpec],
    ) -> Result<LossOutput> {
        let mut all_labels = labels.to_vec();
        let mut sig_rows: Vec<Vec<f64>> = (0..seed_sigs.rows()).map(|i| seed_sigs.row(i).to_vec()).collect();
        let x_all = if synth.is_empty() {
            x
        } else {
            let anchors: Vec<usize> = synth.iter().map(|s| s.anchor).collect();
            let ax = tape.gather_rows(x, anchors)?;
            let lam = tape.constant(Tensor::column(synth.iter().map(|s| s.lambda).collect()));
            let scaled = tape.mul_col(ax, lam)?;
            let d = tape.shape(x)[1];
            let mut rest = Tensor::zeros(synth.len(), d);
            for (k, s) in synth.iter().enumerate() {
                for (o, v) in rest.row_mut(k).iter_mut().zip(&s.partner_x) {
                    *o = (1.0 - s.lambda) * v;
                }
                let anchor_s = seed_sigs.row(s.anchor);
                sig_rows.push(
                    anchor_s
                        .iter()
                        .zip(&s.partner_s)
                        .map(|(a, b)| s.lambda * a + (1.0 - s.lambda) * b)
                        .collect(),
                );
                all_labels.push(self.minority_label);
            }
            let rest = tape.constant(rest);
            let xs = tape.add(scaled, rest)?;
            tape.vstack(&[x, xs])?
        };
        let sigs = Tensor::from_rows(&sig_rows)?;
        let (_, logits, recon) = self.heads(tape, store, x_all, &sigs)?;
        let out = self.loss(tape, logits, &all_labels, recon, &sigs)?;
        Ok(LossOutput {
            loss: out.0,
            logits,
            loss_cls: out.1,
            loss_syn: out.2,
            signatures: sigs,
        })
    }

    /// `(L, L_CLS, L_Syn)` for aligned logits, labels, reconstructions and
    /// target signatures.
    pub fn loss(
        &self,
        tape: &mut Tape,
        logits: Var,
        labels: &[u8],
        recon: Var,
        sigs: &Tensor,
    ) -> Result<(Var, f64, f64)> {
        combined_loss(
            tape,
            logits,
            labels,
            recon,
            sigs,
            self.config.gamma,
            self.minority_label,
            self.config.reduction,
        )
    }
}

/// `L = L_CLS + γ · L_Syn`. `L_CLS` is BCE over every row; `L_Syn` is the
/// reconstruction MSE over rows whose label is `minority_label`.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[u8],
    recon: Var,
    sigs: &Tensor,
    gamma: f64,
    minority_label: u8,
    reduction: Reduction,
) -> Result<(Var, f64, f64)> {
    let targets = Tensor::column(labels.iter().map(|&l| l as f64).collect());
    let l_cls = tape.bce_with_logits(logits, &targets, reduction)?;
    let cls = tape.value(l_cls).item();
    let minority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority_label).collect();
    if minority.is_empty() {
        return Ok((l_cls, cls, 0.0));
    }
    let r = tape.gather_rows(recon, minority.clone())?;
    let l_syn = tape.mse(r, &sigs.select_rows(&minority), reduction)?;
    let syn = tape.value(l_syn).item();
    if gamma == 0.0 {
        return Ok((l_cls, cls, syn));
    }
    let weighted = tape.scale(l_syn, gamma);
    Ok((tape.add(l_cls, weighted)?, cls, syn))
}
