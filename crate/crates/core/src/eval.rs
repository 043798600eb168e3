//! Freeze-and-probe evaluation: train naive classifiers on frozen
//! representations, select checkpoints by median validation error + delta,
//! sweep the fairness coefficient, and extract Pareto fronts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{GroupedDataset, Splits};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::metrics::{
    accuracy, adversarial_accuracy_probe, delta_dp, delta_eo, delta_eopp, harden, mmd_rbf,
    FairnessReport, PredictionRecord,
};
use crate::nn::{adam_step, loss_grad, loss_value, AdamState, LossKind, MlpNetwork, OutputActivation};
use crate::objectives::AdvObjectiveKind;
use crate::trainer::{fit, Checkpoint, TrainConfig};

/// Probe training configuration: a single hidden layer of half the
/// representation width, cross-entropy loss, and early stopping when the
/// training loss fails to reduce for `patience` consecutive epochs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProbeConfig {
    /// Hidden width; `None` means `max(1, repr_dim / 2)`.
    pub hidden_width: Option<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden_width: None,
            max_epochs: 1000,
            patience: 20,
            learning_rate: 0.001,
            batch_size: 64,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::RejectedInput("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 {
            return Err(Error::RejectedInput("bad probe optimizer settings".into()));
        }
        Ok(())
    }

    fn hidden_for(&self, repr_dim: usize) -> usize {
        self.hidden_width.unwrap_or_else(|| (repr_dim / 2).max(1))
    }
}

/// A frozen representation function used by probes.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// A trained encoder; `append_a` mirrors its training-time input.
    Encoder { net: MlpNetwork, append_a: bool },
    /// The leaky hidden layer of a full task MLP.
    Hidden { net: MlpNetwork },
    /// Raw features pass through unchanged.
    Identity { dim: usize },
}

impl Representation {
    pub fn dim(&self) -> usize {
        match self {
            Representation::Encoder { net, .. } => net.output_dim(),
            Representation::Hidden { net } => net.layer_dims()[1],
            Representation::Identity { dim } => *dim,
        }
    }

    /// Map raw features (and groups, for encoders that consume A) to
    /// representation space.
    pub fn map(&self, x: &Mat, a: &[u8]) -> Result<Mat> {
        match self {
            Representation::Encoder { net, append_a } => {
                let input = if *append_a {
                    let a_col = Mat::column(&a.iter().map(|&v| v as f64).collect::<Vec<_>>());
                    x.hstack(&a_col)
                } else {
                    x.clone()
                };
                net.forward(&input)
            }
            Representation::Hidden { net } => {
                let cache = net.forward_cached(x)?;
                Ok(cache.activation(0).clone())
            }
            Representation::Identity { .. } => Ok(x.clone()),
        }
    }

    /// Stable parameter hash; probes must never change it.
    pub fn fingerprint(&self) -> u64 {
        match self {
            Representation::Encoder { net, append_a } => {
                let mut flat = vec![f64::from(u8::from(*append_a))];
                net.write_params(&mut flat);
                let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
                crate::fingerprint64(&bytes)
            }
            Representation::Hidden { net } => {
                let mut flat = Vec::new();
                net.write_params(&mut flat);
                let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
                crate::fingerprint64(&bytes)
            }
            Representation::Identity { dim } => *dim as u64,
        }
    }
}

/// Train a fresh single-hidden-layer binary classifier with early stopping
/// on the training loss.
pub fn train_binary_classifier(
    x: &Mat,
    targets: &[u8],
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<MlpNetwork> {
    cfg.validate()?;
    if x.rows() != targets.len() || x.rows() == 0 {
        return Err(Error::RejectedInput(
            "classifier inputs must be nonempty and aligned".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = cfg.hidden_for(x.cols());
    let mut net = MlpNetwork::new(&[x.cols(), hidden, 1], OutputActivation::Sigmoid, &mut rng);
    let mut adam = AdamState::new(net.param_count(), cfg.learning_rate);
    let t_col = Mat::column(&targets.iter().map(|&v| v as f64).collect::<Vec<_>>());

    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    for _epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select_rows(chunk);
            let bt = t_col.select_rows(chunk);
            let cache = net.forward_cached(&bx)?;
            let up = loss_grad(LossKind::CrossEntropy, cache.output(), &bt)?;
            let back = net.backward(&cache, &up)?;
            let mut grads = Vec::with_capacity(net.param_count());
            MlpNetwork::write_grads(&back.grads, &mut grads);
            let mut params = Vec::with_capacity(net.param_count());
            net.write_params(&mut params);
            let net_ref = &net;
            adam_step(&mut params, &grads, &mut adam, |i| net_ref.param_path(i))?;
            net.read_params(&params);
        }
        let out = net.forward(x)?;
        let epoch_loss = loss_value(LossKind::CrossEntropy, &out, &t_col)?;
        if epoch_loss < best {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(net)
}

/// Prediction records of a trained probe on a dataset, via the frozen
/// representation.
pub fn probe_predictions(
    repr: &Representation,
    probe: &MlpNetwork,
    ds: &GroupedDataset,
    threshold: f64,
) -> Result<Vec<PredictionRecord>> {
    let z = repr.map(&ds.x, &ds.a)?;
    let soft = probe.forward(&z)?;
    let hard = harden(&soft.col(0), threshold);
    Ok((0..ds.len())
        .map(|i| PredictionRecord::new(hard[i], ds.y[i], ds.a[i]))
        .collect())
}

/// A trained probe plus its held-out fairness report.
pub struct ProbeOutcome {
    pub classifier: MlpNetwork,
    pub report: FairnessReport,
}

/// Algorithm-1 style probe: train a naive classifier on the frozen
/// representation of `train`, then report accuracy, the three fairness
/// gaps, representation MMD, and the adversarial probe accuracy on `eval`.
pub fn probe_train(
    repr: &Representation,
    train: &GroupedDataset,
    eval_ds: &GroupedDataset,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<ProbeOutcome> {
    let z_train = repr.map(&train.x, &train.a)?;
    let classifier = train_binary_classifier(&z_train, &train.y, cfg, seed)?;
    let records = probe_predictions(repr, &classifier, eval_ds, 0.5)?;

    let z_eval = repr.map(&eval_ds.x, &eval_ds.a)?;
    let cells = crate::data::partition_rows(&eval_ds.a, &eval_ds.y);
    let mmd = mmd_rbf(
        &z_eval.select_rows(&cells.d0),
        &z_eval.select_rows(&cells.d1),
        1.0,
    )?;
    let adv = adversarial_accuracy_probe(&z_eval, &eval_ds.a, cfg, 0.7, seed ^ 0xadfa_ce01)?;

    Ok(ProbeOutcome {
        classifier,
        report: FairnessReport {
            accuracy: accuracy(&records),
            delta_dp: delta_dp(&records)?,
            delta_eo: delta_eo(&records)?,
            delta_eopp: delta_eopp(&records)?,
            mmd,
            adv_acc: adv.accuracy,
        },
    })
}

/// The delta matching the training objective, used for "error + delta"
/// model selection and sweep summaries.
pub fn active_delta(objective: AdvObjectiveKind, report: &FairnessReport) -> f64 {
    match objective {
        AdvObjectiveKind::Dp | AdvObjectiveKind::CeBaseline => report.delta_dp,
        AdvObjectiveKind::Eo => report.delta_eo,
        AdvObjectiveKind::Eopp => report.delta_eopp,
    }
}

fn delta_of_records(objective: AdvObjectiveKind, records: &[PredictionRecord]) -> Result<f64> {
    match objective {
        AdvObjectiveKind::Dp | AdvObjectiveKind::CeBaseline => delta_dp(records),
        AdvObjectiveKind::Eo => delta_eo(records),
        AdvObjectiveKind::Eopp => delta_eopp(records),
    }
}

pub(crate) fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pure selection rule on per-checkpoint seed scores: argmin of the median
/// score, ties broken by the earliest epoch.
pub fn select_by_scores(scores: &[(usize, Vec<f64>)]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Selection("no checkpoints to select from".into()));
    }
    let mut best: Option<(f64, usize, usize)> = None; // (median, epoch, index)
    for (i, (epoch, seeds)) in scores.iter().enumerate() {
        if seeds.is_empty() {
            continue;
        }
        let med = median(&mut seeds.clone());
        let cand = (med, *epoch, i);
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
    best.map(|(_, _, i)| i)
        .ok_or_else(|| Error::Selection("all probes failed".into()))
}

/// Appendix-B style checkpoint selection: for every checkpoint, train `r`
/// probes with `r` seeds on the train split, score each by validation
/// error + the active delta, and return the checkpoint with the lowest
/// median score (ties to the earliest epoch).
pub fn select_model<'a>(
    checkpoints: &'a [Checkpoint],
    train: &GroupedDataset,
    validation: &GroupedDataset,
    config: &TrainConfig,
    probe_cfg: &ProbeConfig,
    r: usize,
    seed: u64,
) -> Result<&'a Checkpoint> {
    if checkpoints.is_empty() {
        return Err(Error::Selection("no checkpoints".into()));
    }
    if r == 0 {
        return Err(Error::Selection("need at least one probe seed".into()));
    }
    let mut scores: Vec<(usize, Vec<f64>)> = Vec::with_capacity(checkpoints.len());
    let mut any_ok = false;
    for ckpt in checkpoints {
        let repr = Representation::Encoder {
            net: ckpt.model.encoder.clone(),
            append_a: config.append_a,
        };
        let z_train = repr.map(&train.x, &train.a)?;
        let mut seed_scores = Vec::with_capacity(r);
        for s in 0..r {
            let probe_seed = seed
                .wrapping_mul(31)
                .wrapping_add(ckpt.epoch as u64)
                .wrapping_mul(1009)
                .wrapping_add(s as u64);
            let outcome = (|| -> Result<f64> {
                let probe = train_binary_classifier(&z_train, &train.y, probe_cfg, probe_seed)?;
                let records = probe_predictions(&repr, &probe, validation, 0.5)?;
                let err = 1.0 - accuracy(&records);
                let delta = delta_of_records(config.objective, &records)?;
                Ok(err + delta)
            })();
            if let Ok(score) = outcome {
                seed_scores.push(score);
                any_ok = true;
            }
        }
        scores.push((ckpt.epoch, seed_scores));
    }
    if !any_ok {
        return Err(Error::Selection("all probes failed".into()));
    }
    let idx = select_by_scores(&scores)?;
    Ok(&checkpoints[idx])
}

/// Fit with checkpointing, then keep the checkpoint with the lowest median
/// validation error + active delta. Adversarial training oscillates, so
/// downstream consumers should train probes on the selected snapshot, not
/// the final epoch.
pub fn fit_selected(
    splits: &Splits,
    config: &TrainConfig,
    probe_cfg: &ProbeConfig,
    r: usize,
    seed: u64,
) -> Result<(crate::trainer::LaftrModel, usize)> {
    let outcome = fit(&splits.train, config)?;
    let chosen = select_model(
        &outcome.checkpoints,
        &splits.train,
        &splits.validation,
        config,
        probe_cfg,
        r,
        seed,
    )?;
    Ok((chosen.model.clone(), chosen.epoch))
}

/// One sweep record: metrics for one gamma and one probe seed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub gamma: f64,
    pub probe_seed: usize,
    pub checkpoint_epoch: usize,
    pub validation_error: f64,
    pub validation_delta: f64,
    pub test_error: f64,
    pub test_accuracy: f64,
    pub test_delta_dp: f64,
    pub test_delta_eo: f64,
    pub test_delta_eopp: f64,
}

/// Median per-gamma summary used for the Pareto front.
#[derive(Debug, Clone, Serialize)]
pub struct GammaSummary {
    pub gamma: f64,
    pub checkpoint_epoch: usize,
    pub median_test_accuracy: f64,
    pub median_test_delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub objective: AdvObjectiveKind,
    pub records: Vec<SweepRecord>,
    pub summaries: Vec<GammaSummary>,
    /// Indices into `summaries` forming the Pareto front.
    pub pareto_front: Vec<usize>,
    /// Per-gamma failures (gamma, error text); the sweep continues past them.
    pub failures: Vec<(f64, String)>,
}

/// Default gamma grid: 8 log-spaced values in [0.1, 4].
pub fn default_gamma_grid() -> Vec<f64> {
    let (lo, hi, k) = (0.1f64, 4.0f64, 8);
    (0..k)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

/// Sweep configuration: the gamma grid, probe-seed count, the training
/// template (gamma is overridden per point), and the probe settings.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    pub r: usize,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

/// Run the full gamma sweep: fit, select a checkpoint on validation, train
/// `r` fresh probes on the unseen test partition (its transfer-train rows),
/// evaluate on the transfer-test rows, and compute the Pareto front over
/// per-gamma medians of (test accuracy, active test delta).
pub fn sweep(splits: &Splits, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.gammas.is_empty() {
        return Err(Error::RejectedInput("gamma list is empty".into()));
    }
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut failures = Vec::new();

    for (gi, &gamma) in cfg.gammas.iter().enumerate() {
        let run = (|| -> Result<(Vec<SweepRecord>, GammaSummary)> {
            let mut train_cfg = cfg.train.clone();
            train_cfg.gamma = gamma;
            let outcome = fit(&splits.train, &train_cfg)?;
            let chosen = select_model(
                &outcome.checkpoints,
                &splits.train,
                &splits.validation,
                &train_cfg,
                &cfg.probe,
                cfg.r,
                train_cfg.seed.wrapping_add(gi as u64),
            )?;
            let repr = Representation::Encoder {
                net: chosen.model.encoder.clone(),
                append_a: train_cfg.append_a,
            };

            let mut recs = Vec::with_capacity(cfg.r);
            let mut accs = Vec::new();
            let mut deltas = Vec::new();
            for s in 0..cfg.r {
                let probe_seed = train_cfg
                    .seed
                    .wrapping_mul(2654435761)
                    .wrapping_add((gi * 1000 + s) as u64);
                let z_train = repr.map(&splits.transfer_train.x, &splits.transfer_train.a)?;
                let probe =
                    train_binary_classifier(&z_train, &splits.transfer_train.y, &cfg.probe, probe_seed)?;
                let test_records =
                    probe_predictions(&repr, &probe, &splits.transfer_test, 0.5)?;
                let val_records = probe_predictions(&repr, &probe, &splits.validation, 0.5)?;
                let rec = SweepRecord {
                    gamma,
                    probe_seed: s,
                    checkpoint_epoch: chosen.epoch,
                    validation_error: 1.0 - accuracy(&val_records),
                    validation_delta: delta_of_records(train_cfg.objective, &val_records)?,
                    test_error: 1.0 - accuracy(&test_records),
                    test_accuracy: accuracy(&test_records),
                    test_delta_dp: delta_dp(&test_records)?,
                    test_delta_eo: delta_eo(&test_records)?,
                    test_delta_eopp: delta_eopp(&test_records)?,
                };
                accs.push(rec.test_accuracy);
                deltas.push(match train_cfg.objective {
                    AdvObjectiveKind::Dp | AdvObjectiveKind::CeBaseline => rec.test_delta_dp,
                    AdvObjectiveKind::Eo => rec.test_delta_eo,
                    AdvObjectiveKind::Eopp => rec.test_delta_eopp,
                });
                recs.push(rec);
            }
            let summary = GammaSummary {
                gamma,
                checkpoint_epoch: chosen.epoch,
                median_test_accuracy: median(&mut accs),
                median_test_delta: median(&mut deltas),
            };
            Ok((recs, summary))
        })();
        match run {
            Ok((recs, summary)) => {
                records.extend(recs);
                summaries.push(summary);
            }
            Err(e) => failures.push((gamma, e.to_string())),
        }
    }
    if summaries.is_empty() {
        return Err(Error::Selection(format!(
            "every gamma failed; first failure: {}",
            failures
                .first()
                .map(|(_, e)| e.as_str())
                .unwrap_or("none")
        )));
    }
    let points: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| (s.median_test_accuracy, s.median_test_delta))
        .collect();
    let pareto_front = pareto_front(&points);
    Ok(SweepResult {
        objective: cfg.train.objective,
        records,
        summaries,
        pareto_front,
        failures,
    })
}

/// Maximal set under (higher accuracy, lower delta) dominance. Points that
/// tie exactly are all retained; output is ordered by accuracy descending.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[j]
            .0
            .partial_cmp(&points[i].0)
            .unwrap()
            .then(points[i].1.partial_cmp(&points[j].1).unwrap())
            .then(i.cmp(&j))
    });
    let mut kept = Vec::new();
    let mut min_delta = f64::INFINITY;
    let mut best_acc_at_min = f64::NEG_INFINITY;
    for &i in &order {
        let (acc, delta) = points[i];
        if delta < min_delta {
            min_delta = delta;
            best_acc_at_min = acc;
            kept.push(i);
        } else if delta == min_delta && acc == best_acc_at_min {
            // exact tie with a kept point
            kept.push(i);
        }
    }
    kept
}
