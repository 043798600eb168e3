//! Fair transfer learning: train representation learners on the original
//! task, freeze them, probe each transfer task with naive classifiers, and
//! compare against the direct-prediction baseline.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{partition_rows, GroupedDataset, Splits};
use crate::error::{Error, Result};
use crate::eval::{
    median, probe_predictions, train_binary_classifier, ProbeConfig, Representation,
};
use crate::mat::Mat;
use crate::metrics::{accuracy, adversarial_accuracy_probe, delta_eo, mmd_rbf};
use crate::nn::{
    adam_step, loss_grad, loss_value, AdamState, LossKind, MlpNetwork, OutputActivation,
};
use crate::objectives::AdvObjectiveKind;
use crate::trainer::{needed_cells, stratified_batches, AdversaryInput, TrainConfig};

/// The representation learners compared by the transfer suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReprLearnerKind {
    /// Encoder trained with alpha=0, beta=1, gamma=1 and the equalized-odds
    /// adversary.
    Laftr,
    /// Plain task MLP; the representation is its hidden layer.
    TransferUnfair,
    /// Task MLP regularized by the soft equalized-odds gap on its output.
    TransferFair,
    /// Output-only adversary: h sees (soft prediction, label) only.
    TransferYAdv { with_decoder: bool },
    /// No representation learning; probes consume the raw features.
    TargetUnfair,
}

impl ReprLearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReprLearnerKind::Laftr => "laftr",
            ReprLearnerKind::TransferUnfair => "transfer-unfair",
            ReprLearnerKind::TransferFair => "transfer-fair",
            ReprLearnerKind::TransferYAdv { with_decoder: true } => "transfer-y-adv-b1",
            ReprLearnerKind::TransferYAdv { with_decoder: false } => "transfer-y-adv-b0",
            ReprLearnerKind::TargetUnfair => "target-unfair",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "laftr" => ReprLearnerKind::Laftr,
            "transfer-unfair" => ReprLearnerKind::TransferUnfair,
            "transfer-fair" => ReprLearnerKind::TransferFair,
            "transfer-y-adv-b1" => ReprLearnerKind::TransferYAdv { with_decoder: true },
            "transfer-y-adv-b0" => ReprLearnerKind::TransferYAdv { with_decoder: false },
            "target-unfair" => ReprLearnerKind::TargetUnfair,
            other => {
                return Err(Error::RejectedInput(format!(
                    "unknown representation learner {:?}",
                    other
                )))
            }
        })
    }
}

/// A trained, frozen representation learner.
pub struct ReprLearner {
    pub kind: ReprLearnerKind,
    pub repr: Representation,
}

/// Configuration for the transfer harness.
#[derive(Debug, Clone)]
pub struct TransferConfig {
    /// Template for representation training (epochs, widths, batch, seed).
    pub repr_train: TrainConfig,
    /// Weight of the soft equalized-odds regularizer in Transfer-Fair.
    pub fair_gamma: f64,
    pub probe: ProbeConfig,
    /// Probe seeds per (learner, task).
    pub r: usize,
    /// Probe seeds used for checkpoint selection of adversarial learners.
    pub r_select: usize,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            repr_train: TrainConfig::default(),
            fair_gamma: 1.0,
            probe: ProbeConfig::default(),
            r: 3,
            r_select: 3,
            seed: 0,
        }
    }
}

/// Train a single-hidden-layer task MLP with an optional soft equalized-
/// odds penalty of weight `fair_gamma` on its sigmoid output. The hidden
/// layer doubles as the learned representation.
pub fn train_task_mlp(
    train: &GroupedDataset,
    hidden: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    fair_gamma: f64,
    seed: u64,
) -> Result<MlpNetwork> {
    if train.is_empty() {
        return Err(Error::RejectedInput("train split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = MlpNetwork::new(
        &[train.dim(), hidden, 1],
        OutputActivation::Sigmoid,
        &mut rng,
    );
    let mut adam = AdamState::new(net.param_count(), learning_rate);
    let cells = if fair_gamma > 0.0 {
        needed_cells(train, AdvObjectiveKind::Eo)?
    } else {
        needed_cells(train, AdvObjectiveKind::Dp)?
    };
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7a5c));
    for _epoch in 0..epochs {
        let batches = stratified_batches(&cells, train.len(), batch_size, &mut batch_rng);
        for idx in &batches {
            let bx = train.x.select_rows(idx);
            let by: Vec<u8> = idx.iter().map(|&i| train.y[i]).collect();
            let ba: Vec<u8> = idx.iter().map(|&i| train.a[i]).collect();
            let t_col = Mat::column(&by.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let cache = net.forward_cached(&bx)?;
            let yhat = cache.output().clone();
            let mut up = loss_grad(LossKind::CrossEntropy, &yhat, &t_col)?;
            if fair_gamma > 0.0 {
                let reg = soft_eo_grad(&yhat.col(0), &ba, &by)?;
                for (u, g) in up.data_mut().iter_mut().zip(reg.iter()) {
                    *u += fair_gamma * g;
                }
            }
            let back = net.backward(&cache, &up)?;
            let mut grads = Vec::with_capacity(net.param_count());
            MlpNetwork::write_grads(&back.grads, &mut grads);
            let mut params = Vec::with_capacity(net.param_count());
            net.write_params(&mut params);
            let net_ref = &net;
            adam_step(&mut params, &grads, &mut adam, |i| net_ref.param_path(i))?;
            net.read_params(&params);
            let check = loss_value(LossKind::CrossEntropy, &yhat, &t_col)?;
            if !check.is_finite() {
                return Err(Error::NonFinite {
                    path: "task mlp loss".into(),
                    detail: format!("{}", check),
                });
            }
        }
    }
    Ok(net)
}

/// Soft (differentiable) equalized-odds gap on soft predictions.
pub fn soft_delta_eo(yhat: &[f64], a: &[u8], y: &[u8]) -> Result<f64> {
    let (t0, t1, _) = soft_eo_terms(yhat, a, y)?;
    Ok(t0.abs() + t1.abs())
}

fn soft_eo_terms(yhat: &[f64], a: &[u8], y: &[u8]) -> Result<(f64, f64, crate::data::Cells)> {
    let cells = partition_rows(a, y);
    for (name, cell) in [
        ("a=0,y=0", &cells.d00),
        ("a=1,y=0", &cells.d10),
        ("a=0,y=1", &cells.d01),
        ("a=1,y=1", &cells.d11),
    ] {
        if cell.is_empty() {
            return Err(Error::GroupStarvation { cell: name.into() });
        }
    }
    let mean = |idx: &[usize]| idx.iter().map(|&i| yhat[i]).sum::<f64>() / idx.len() as f64;
    // False-positive-rate gap and (soft) false-negative-rate gap.
    let t0 = mean(&cells.d00) - mean(&cells.d10);
    let t1 = mean(&cells.d11) - mean(&cells.d01);
    Ok((t0, t1, cells))
}

/// Gradient of [`soft_delta_eo`] with respect to each soft prediction.
fn soft_eo_grad(yhat: &[f64], a: &[u8], y: &[u8]) -> Result<Vec<f64>> {
    let (t0, t1, cells) = soft_eo_terms(yhat, a, y)?;
    let mut grad = vec![0.0; yhat.len()];
    let s0 = if t0 > 0.0 { 1.0 } else if t0 < 0.0 { -1.0 } else { 0.0 };
    let s1 = if t1 > 0.0 { 1.0 } else if t1 < 0.0 { -1.0 } else { 0.0 };
    for &i in &cells.d00 {
        grad[i] = s0 / cells.d00.len() as f64;
    }
    for &i in &cells.d10 {
        grad[i] = -s0 / cells.d10.len() as f64;
    }
    for &i in &cells.d11 {
        grad[i] = s1 / cells.d11.len() as f64;
    }
    for &i in &cells.d01 {
        grad[i] = -s1 / cells.d01.len() as f64;
    }
    Ok(grad)
}

/// Pick the checkpoint whose frozen representation is both useful and
/// scrubbed: lowest validation probe error on the original task plus
/// validation adversarial-probe accuracy. Adversarial training oscillates,
/// so the final epoch is often not the best snapshot; this uses only
/// validation data.
fn select_fair_snapshot(
    checkpoints: &[crate::trainer::Checkpoint],
    splits: &Splits,
    cfg: &TransferConfig,
    append_a: bool,
) -> Result<crate::trainer::LaftrModel> {
    let mut best: Option<(f64, usize, &crate::trainer::Checkpoint)> = None;
    for ckpt in checkpoints {
        let repr = Representation::Encoder {
            net: ckpt.model.encoder.clone(),
            append_a,
        };
        let z_train = repr.map(&splits.train.x, &splits.train.a)?;
        let probe = train_binary_classifier(
            &z_train,
            &splits.train.y,
            &cfg.probe,
            cfg.seed.wrapping_add(ckpt.epoch as u64),
        )?;
        let records = probe_predictions(&repr, &probe, &splits.validation, 0.5)?;
        let err = 1.0 - accuracy(&records);
        let z_val = repr.map(&splits.validation.x, &splits.validation.a)?;
        let adv = adversarial_accuracy_probe(
            &z_val,
            &splits.validation.a,
            &cfg.probe,
            0.7,
            cfg.seed ^ 0xfa1e,
        )?;
        let score = err + adv.accuracy;
        let cand = (score, ckpt.epoch, ckpt);
        best = Some(match best {
            None => cand,
            Some(b) => {
                if cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1) {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.map(|(_, _, c)| c.model.clone())
        .ok_or_else(|| Error::Selection("no checkpoints".into()))
}

/// Train one representation learner on the original task and freeze it.
pub fn build_repr_learner(
    kind: ReprLearnerKind,
    splits: &Splits,
    cfg: &TransferConfig,
) -> Result<ReprLearner> {
    let template = &cfg.repr_train;
    let repr = match kind {
        ReprLearnerKind::Laftr => {
            let train_cfg = TrainConfig {
                alpha: 0.0,
                beta: 1.0,
                gamma: 1.0,
                objective: AdvObjectiveKind::Eo,
                adversary_input: AdversaryInput::Representation,
                ..template.clone()
            };
            let outcome = crate::trainer::fit(&splits.train, &train_cfg)?;
            let model = select_fair_snapshot(&outcome.checkpoints, splits, cfg, train_cfg.append_a)?;
            Representation::Encoder {
                net: model.encoder,
                append_a: train_cfg.append_a,
            }
        }
        ReprLearnerKind::TransferUnfair | ReprLearnerKind::TransferFair => {
            let gamma = if kind == ReprLearnerKind::TransferFair {
                cfg.fair_gamma
            } else {
                0.0
            };
            let net = train_task_mlp(
                &splits.train,
                template.repr_dim,
                template.epochs,
                template.batch_size,
                template.learning_rate,
                gamma,
                template.seed,
            )?;
            Representation::Hidden { net }
        }
        ReprLearnerKind::TransferYAdv { with_decoder } => {
            let train_cfg = TrainConfig {
                alpha: 1.0,
                beta: f64::from(u8::from(with_decoder)),
                gamma: 1.0,
                objective: AdvObjectiveKind::Eo,
                adversary_input: AdversaryInput::ClassifierOutput,
                ..template.clone()
            };
            let outcome = crate::trainer::fit(&splits.train, &train_cfg)?;
            let model = select_fair_snapshot(&outcome.checkpoints, splits, cfg, train_cfg.append_a)?;
            Representation::Encoder {
                net: model.encoder,
                append_a: train_cfg.append_a,
            }
        }
        ReprLearnerKind::TargetUnfair => Representation::Identity {
            dim: splits.train.dim(),
        },
    };
    Ok(ReprLearner { kind, repr })
}

/// Per-(learner, task) medians plus differences relative to the direct
/// baseline; a relative difference of -0.10 means a 10% decrease.
#[derive(Debug, Clone, Serialize)]
pub struct TaskResult {
    pub learner: String,
    pub task: String,
    pub error: f64,
    pub delta_eo: f64,
    pub rel_error: f64,
    pub rel_delta_eo: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnerAudit {
    pub learner: String,
    pub mmd: f64,
    pub adv_acc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub tasks: Vec<TaskResult>,
    pub audits: Vec<LearnerAudit>,
    /// Mean over tasks of the relative error difference, per learner.
    pub mean_rel_error: BTreeMap<String, f64>,
    /// Mean over tasks of the relative equalized-odds difference.
    pub mean_rel_delta_eo: BTreeMap<String, f64>,
    /// Per-task failures; the suite continues past them.
    pub failures: Vec<String>,
}

impl TransferReport {
    /// Recompute a relative difference from the stored absolute values.
    pub fn relative(value: f64, baseline: f64) -> f64 {
        (value - baseline) / baseline.max(1e-9)
    }
}

/// Run the full transfer suite: every learner x every transfer task,
/// probes trained on the transfer-train rows and evaluated on the
/// transfer-test rows, medians over `r` probe seeds, relative differences
/// against the direct baseline, plus the representation audit.
pub fn run_transfer_suite(
    learner_kinds: &[ReprLearnerKind],
    splits: &Splits,
    cfg: &TransferConfig,
) -> Result<TransferReport> {
    let mut kinds: Vec<ReprLearnerKind> = learner_kinds.to_vec();
    if !kinds.contains(&ReprLearnerKind::TargetUnfair) {
        // Relative differences need the direct baseline.
        kinds.push(ReprLearnerKind::TargetUnfair);
    }
    let tasks: Vec<String> = splits.transfer_train.transfer.keys().cloned().collect();
    if tasks.is_empty() {
        return Err(Error::RejectedInput("dataset has no transfer labels".into()));
    }

    let mut learners = Vec::new();
    for &kind in &kinds {
        learners.push(build_repr_learner(kind, splits, cfg)?);
    }

    let mut failures = Vec::new();
    // medians[(learner, task)] = (error, delta_eo)
    let mut medians: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for learner in &learners {
        let frozen = learner.repr.fingerprint();
        for task in &tasks {
            let run = (|| -> Result<(f64, f64)> {
                let train = splits.transfer_train.with_task_label(task)?;
                let eval_ds = splits.transfer_test.with_task_label(task)?;
                let z_train = learner.repr.map(&train.x, &train.a)?;
                let mut errs = Vec::with_capacity(cfg.r);
                let mut deltas = Vec::with_capacity(cfg.r);
                for s in 0..cfg.r {
                    let probe_seed = cfg
                        .seed
                        .wrapping_mul(977)
                        .wrapping_add(crate::fingerprint64(task.as_bytes()))
                        .wrapping_add(s as u64);
                    let probe =
                        train_binary_classifier(&z_train, &train.y, &cfg.probe, probe_seed)?;
                    let records = probe_predictions(&learner.repr, &probe, &eval_ds, 0.5)?;
                    errs.push(1.0 - accuracy(&records));
                    deltas.push(delta_eo(&records)?);
                }
                Ok((median(&mut errs), median(&mut deltas)))
            })();
            match run {
                Ok(pair) => {
                    medians.insert((learner.kind.as_str().into(), task.clone()), pair);
                }
                Err(e) => failures.push(format!(
                    "{}/{}: {}",
                    learner.kind.as_str(),
                    task,
                    e
                )),
            }
        }
        if learner.repr.fingerprint() != frozen {
            return Err(Error::InternalState(format!(
                "representation {} changed during probing",
                learner.kind.as_str()
            )));
        }
    }

    let baseline_name = ReprLearnerKind::TargetUnfair.as_str();
    let mut task_results = Vec::new();
    let mut rel_err_acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut rel_eo_acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for learner in &learners {
        let lname = learner.kind.as_str().to_string();
        for task in &tasks {
            let Some(&(err, deo)) = medians.get(&(lname.clone(), task.clone())) else {
                continue;
            };
            let Some(&(base_err, base_deo)) = medians.get(&(baseline_name.into(), task.clone()))
            else {
                continue;
            };
            let rel_error = TransferReport::relative(err, base_err);
            let rel_delta_eo = TransferReport::relative(deo, base_deo);
            rel_err_acc.entry(lname.clone()).or_default().push(rel_error);
            rel_eo_acc.entry(lname.clone()).or_default().push(rel_delta_eo);
            task_results.push(TaskResult {
                learner: lname.clone(),
                task: task.clone(),
                error: err,
                delta_eo: deo,
                rel_error,
                rel_delta_eo,
            });
        }
    }
    let mean = |m: &BTreeMap<String, Vec<f64>>| -> BTreeMap<String, f64> {
        m.iter()
            .map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    };

    let audits = representation_audit(&learners, &splits.test, cfg)?;

    Ok(TransferReport {
        tasks: task_results,
        audits,
        mean_rel_error: mean(&rel_err_acc),
        mean_rel_delta_eo: mean(&rel_eo_acc),
        failures,
    })
}

/// Coarse representation-level fairness: MMD (sigma = 1) between the
/// per-group representation clouds, and the adversarial probe accuracy.
pub fn representation_audit(
    learners: &[ReprLearner],
    audit: &GroupedDataset,
    cfg: &TransferConfig,
) -> Result<Vec<LearnerAudit>> {
    let cells = partition_rows(&audit.a, &audit.y);
    let mut out = Vec::with_capacity(learners.len());
    for learner in learners {
        let z = learner.repr.map(&audit.x, &audit.a)?;
        let mmd = mmd_rbf(&z.select_rows(&cells.d0), &z.select_rows(&cells.d1), 1.0)?;
        let adv = adversarial_accuracy_probe(
            &z,
            &audit.a,
            &cfg.probe,
            0.7,
            cfg.seed ^ 0x5eed_ad0f,
        )?;
        out.push(LearnerAudit {
            learner: learner.kind.as_str().into(),
            mmd,
            adv_acc: adv.accuracy,
        });
    }
    Ok(out)
}
