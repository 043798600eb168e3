//! Alternating min-max training of the encoder/classifier/decoder stack
//! against the adversary.
//!
//! Each minibatch takes exactly one descent step on the (f, g, k) block
//! with the adversary frozen (gradients still flow *through* the adversary
//! into the encoder), then one ascent step on the adversary with
//! (f, g, k) frozen, using the post-descent encoder. The two blocks keep
//! independent Adam states.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{partition_rows, GroupedDataset};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    adam_step, loss_grad, loss_value, AdamState, LossKind, MlpNetwork, OutputActivation,
};
use crate::objectives::{adv_objective, adv_objective_grad, AdvObjectiveKind};
use crate::{fingerprint_hex, TOOL_VERSION};

/// What the adversary reads: the representation itself, or only the
/// classifier's soft output (the output-only baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryInput {
    Representation,
    ClassifierOutput,
}

/// Training configuration for one min-max run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub objective: AdvObjectiveKind,
    pub adversary_input: AdversaryInput,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Representation width m.
    pub repr_dim: usize,
    /// Hidden width shared by the four single-hidden-layer networks.
    pub hidden: usize,
    /// Append A as one extra input column to the encoder.
    pub append_a: bool,
    /// Checkpoint every this many epochs (epoch 0 and the final epoch are
    /// always checkpointed).
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // alpha=1, beta=0 is the fair-classification setting; transfer runs
        // switch to alpha=0, beta=1.
        TrainConfig {
            alpha: 1.0,
            beta: 0.0,
            gamma: 1.0,
            objective: AdvObjectiveKind::Dp,
            adversary_input: AdversaryInput::Representation,
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.001,
            repr_dim: 8,
            hidden: 8,
            append_a: true,
            checkpoint_interval: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::RejectedInput(
                "alpha, beta, gamma must be nonnegative".into(),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::RejectedInput("batch_size must be at least 2".into()));
        }
        if self.repr_dim == 0 || self.hidden == 0 {
            return Err(Error::RejectedInput("network widths must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::RejectedInput("learning rate must be positive".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::RejectedInput(
                "checkpoint_interval must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stable fingerprint of this config, embedded in artifacts.
    pub fn fingerprint(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        fingerprint_hex(canon.as_bytes())
    }
}

/// The four-network bundle. The decoder is present exactly when the
/// reconstruction coefficient is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LaftrModel {
    pub encoder: MlpNetwork,
    pub classifier: MlpNetwork,
    pub adversary: MlpNetwork,
    pub decoder: Option<MlpNetwork>,
}

impl LaftrModel {
    /// Standard single-hidden-layer realization of all four networks.
    pub fn new(input_dim: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let m = config.repr_dim;
        let h = config.hidden;
        let enc_in = input_dim + usize::from(config.append_a);
        let label_extra = usize::from(config.objective.uses_label());
        let adv_in = match config.adversary_input {
            AdversaryInput::Representation => m + label_extra,
            AdversaryInput::ClassifierOutput => 1 + label_extra,
        };
        // Bounded latent: keeps the adversary's sigmoid inputs in range so
        // the min-max cannot stall by saturating h.
        let encoder = MlpNetwork::new(&[enc_in, h, m], OutputActivation::Sigmoid, rng);
        let classifier = MlpNetwork::new(&[m, h, 1], OutputActivation::Sigmoid, rng);
        let adversary = MlpNetwork::new(&[adv_in, h, 1], OutputActivation::Sigmoid, rng);
        let decoder = if config.beta > 0.0 {
            Some(MlpNetwork::new(
                &[m + 1, h, input_dim],
                OutputActivation::Identity,
                rng,
            ))
        } else {
            None
        };
        Ok(LaftrModel {
            encoder,
            classifier,
            adversary,
            decoder,
        })
    }

    pub fn repr_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Flat (f, g, k) parameter block, in that order.
    pub fn fgk_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.encoder.write_params(&mut out);
        self.classifier.write_params(&mut out);
        if let Some(dec) = &self.decoder {
            dec.write_params(&mut out);
        }
        out
    }

    /// Overwrite the (f, g, k) block from a flat slice.
    pub fn fgk_read(&mut self, flat: &[f64]) {
        let mut off = self.encoder.read_params(flat);
        off += self.classifier.read_params(&flat[off..]);
        if let Some(dec) = &mut self.decoder {
            dec.read_params(&flat[off..]);
        }
    }

    pub fn fgk_param_count(&self) -> usize {
        self.encoder.param_count()
            + self.classifier.param_count()
            + self.decoder.as_ref().map_or(0, |d| d.param_count())
    }

    fn fgk_path(&self, idx: usize) -> String {
        let fe = self.encoder.param_count();
        let fg = self.classifier.param_count();
        if idx < fe {
            format!("encoder/{}", self.encoder.param_path(idx))
        } else if idx < fe + fg {
            format!("classifier/{}", self.classifier.param_path(idx - fe))
        } else if let Some(dec) = &self.decoder {
            format!("decoder/{}", dec.param_path(idx - fe - fg))
        } else {
            format!("fgk[{}]", idx)
        }
    }

    /// Stable hash of all parameters; used by frozen-weight assertions.
    pub fn param_fingerprint(&self) -> u64 {
        let mut flat = self.fgk_params();
        self.adversary.write_params(&mut flat);
        let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
        crate::fingerprint64(&bytes)
    }
}

/// One minibatch view: raw features plus labels and groups.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x: Mat,
    pub y: Vec<u8>,
    pub a: Vec<u8>,
}

impl TrainBatch {
    pub fn from_dataset(ds: &GroupedDataset, idx: &[usize]) -> TrainBatch {
        TrainBatch {
            x: ds.x.select_rows(idx),
            y: idx.iter().map(|&i| ds.y[i]).collect(),
            a: idx.iter().map(|&i| ds.a[i]).collect(),
        }
    }

    pub fn whole(ds: &GroupedDataset) -> TrainBatch {
        let idx: Vec<usize> = (0..ds.len()).collect();
        TrainBatch::from_dataset(ds, &idx)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn a_column(&self) -> Mat {
        Mat::column(&self.a.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }

    fn y_column(&self) -> Mat {
        Mat::column(&self.y.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }
}

/// Encoder input for a batch: features, with A appended when configured.
pub fn encoder_input(batch: &TrainBatch, append_a: bool) -> Mat {
    if append_a {
        batch.x.hstack(&batch.a_column())
    } else {
        batch.x.clone()
    }
}

/// The three loss terms of one combined evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTerms {
    pub classifier: f64,
    pub decoder: f64,
    pub adversary: f64,
    pub total: f64,
}

/// Combined objective
/// `alpha L_C(g(f(X[,A])), Y) + beta L_Dec(k(f,A), X) + gamma L_Adv(h(f[,Y]), A)`,
/// with cross-entropy classification loss and squared-error reconstruction.
pub fn combined_loss(
    model: &LaftrModel,
    batch: &TrainBatch,
    config: &TrainConfig,
) -> Result<LossTerms> {
    let enc_in = encoder_input(batch, config.append_a);
    let z = model.encoder.forward(&enc_in)?;
    let yhat = model.classifier.forward(&z)?;
    let l_c = loss_value(LossKind::CrossEntropy, &yhat, &batch.y_column())?;
    let l_dec = match &model.decoder {
        Some(dec) => {
            let xhat = dec.forward(&z.hstack(&batch.a_column()))?;
            loss_value(LossKind::SquaredError, &xhat, &batch.x)?
        }
        None => 0.0,
    };
    let adv_in = adversary_input(model, config, &z, &yhat, batch);
    let h_out = model.adversary.forward(&adv_in)?;
    let label_opt = config.objective.uses_label().then_some(batch.y.as_slice());
    let l_adv = adv_objective(config.objective, &h_out.col(0), &batch.a, label_opt)?;
    let total = config.alpha * l_c + config.beta * l_dec + config.gamma * l_adv;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            path: "combined loss".into(),
            detail: format!("L_C={} L_Dec={} L_Adv={}", l_c, l_dec, l_adv),
        });
    }
    Ok(LossTerms {
        classifier: l_c,
        decoder: l_dec,
        adversary: l_adv,
        total,
    })
}

fn adversary_input(
    model: &LaftrModel,
    config: &TrainConfig,
    z: &Mat,
    yhat: &Mat,
    batch: &TrainBatch,
) -> Mat {
    let base = match config.adversary_input {
        AdversaryInput::Representation => z.clone(),
        AdversaryInput::ClassifierOutput => yhat.clone(),
    };
    let _ = model;
    if config.objective.uses_label() {
        base.hstack(&batch.y_column())
    } else {
        base
    }
}

/// Min-max trainer: the model plus one Adam state per side.
pub struct MinimaxTrainer {
    pub model: LaftrModel,
    config: TrainConfig,
    fgk_adam: AdamState,
    adv_adam: AdamState,
}

impl MinimaxTrainer {
    pub fn new(input_dim: usize, config: TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = LaftrModel::new(input_dim, &config, &mut rng)?;
        Self::with_model(model, config)
    }

    /// Wrap an existing model (tests hand-assemble tiny ones).
    pub fn with_model(model: LaftrModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.beta > 0.0 && model.decoder.is_none() {
            return Err(Error::RejectedInput(
                "beta > 0 requires a decoder network".into(),
            ));
        }
        if config.beta == 0.0 && model.decoder.is_some() {
            return Err(Error::RejectedInput(
                "decoder present but beta = 0".into(),
            ));
        }
        let fgk_adam = AdamState::new(model.fgk_param_count(), config.learning_rate);
        let adv_adam = AdamState::new(model.adversary.param_count(), config.learning_rate);
        Ok(MinimaxTrainer {
            model,
            config,
            fgk_adam,
            adv_adam,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn combined_loss(&self, batch: &TrainBatch) -> Result<LossTerms> {
        combined_loss(&self.model, batch, &self.config)
    }

    /// One descent step on (f, g, k) with the adversary frozen. Gradients
    /// of the gamma-weighted adversary term flow through h into f.
    pub fn descent_step(&mut self, batch: &TrainBatch) -> Result<LossTerms> {
        let (terms, grads) = fgk_forward_backward(&self.model, batch, &self.config)?;
        let mut params = self.model.fgk_params();
        let model_ref = &self.model;
        adam_step(&mut params, &grads, &mut self.fgk_adam, |i| {
            model_ref.fgk_path(i)
        })?;
        self.model.fgk_read(&params);
        Ok(terms)
    }

    /// One ascent step on the adversary with (f, g, k) frozen, evaluated at
    /// the post-descent encoder. Returns the adversary objective before the
    /// update.
    pub fn ascent_step(&mut self, batch: &TrainBatch) -> Result<f64> {
        let (l_adv, mut grads) = adversary_forward_backward(&self.model, batch, &self.config)?;
        // Ascent: Adam on the negated objective gradient.
        for g in &mut grads {
            *g = -*g;
        }
        let mut params = Vec::with_capacity(self.model.adversary.param_count());
        self.model.adversary.write_params(&mut params);
        let adv_ref = &self.model.adversary;
        adam_step(&mut params, &grads, &mut self.adv_adam, |i| {
            format!("adversary/{}", adv_ref.param_path(i))
        })?;
        self.model.adversary.read_params(&params);
        Ok(l_adv)
    }

    /// One full alternating step: descent on (f, g, k), then ascent on h.
    pub fn train_step(&mut self, batch: &TrainBatch) -> Result<LossTerms> {
        let terms = self.descent_step(batch)?;
        self.ascent_step(batch)?;
        Ok(terms)
    }
}

/// Loss terms plus the exact analytic gradient of the combined loss with
/// respect to the flat (f, g, k) parameter block, adversary frozen.
pub fn fgk_forward_backward(
    model: &LaftrModel,
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> Result<(LossTerms, Vec<f64>)> {
    let enc_in = encoder_input(batch, cfg.append_a);
    let cache_f = model.encoder.forward_cached(&enc_in)?;
    let z = cache_f.output().clone();
    let cache_g = model.classifier.forward_cached(&z)?;
    let yhat = cache_g.output().clone();
    let y_col = batch.y_column();
    let a_col = batch.a_column();

    let l_c = loss_value(LossKind::CrossEntropy, &yhat, &y_col)?;

    // Decoder forward + gradient wrt its output.
    let mut l_dec = 0.0;
    let mut dec_back = None;
    if let Some(dec) = &model.decoder {
        let dec_in = z.hstack(&a_col);
        let cache_k = dec.forward_cached(&dec_in)?;
        l_dec = loss_value(LossKind::SquaredError, cache_k.output(), &batch.x)?;
        let mut dxhat = loss_grad(LossKind::SquaredError, cache_k.output(), &batch.x)?;
        for v in dxhat.data_mut() {
            *v *= cfg.beta;
        }
        dec_back = Some(dec.backward(&cache_k, &dxhat)?);
    }

    // Adversary forward (frozen parameters) + gradient wrt its output.
    let adv_in = adversary_input(model, cfg, &z, &yhat, batch);
    let cache_h = model.adversary.forward_cached(&adv_in)?;
    let h_col = cache_h.output().col(0);
    let label_opt = cfg.objective.uses_label().then_some(batch.y.as_slice());
    let l_adv = adv_objective(cfg.objective, &h_col, &batch.a, label_opt)?;

    let total = cfg.alpha * l_c + cfg.beta * l_dec + cfg.gamma * l_adv;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            path: "descent step".into(),
            detail: format!("L_C={} L_Dec={} L_Adv={}", l_c, l_dec, l_adv),
        });
    }

    let mut dh = Mat::column(&adv_objective_grad(
        cfg.objective,
        &h_col,
        &batch.a,
        label_opt,
    )?);
    for v in dh.data_mut() {
        *v *= cfg.gamma;
    }
    let h_back = model.adversary.backward(&cache_h, &dh)?;

    // Gradient wrt the classifier output.
    let mut dyhat = loss_grad(LossKind::CrossEntropy, &yhat, &y_col)?;
    for v in dyhat.data_mut() {
        *v *= cfg.alpha;
    }
    if cfg.adversary_input == AdversaryInput::ClassifierOutput {
        for r in 0..dyhat.rows() {
            let v = dyhat.get(r, 0) + h_back.input_grad.get(r, 0);
            dyhat.set(r, 0, v);
        }
    }
    let g_back = model.classifier.backward(&cache_g, &dyhat)?;

    // Accumulate the representation gradient from every path.
    let m = model.repr_dim();
    let mut dz = g_back.input_grad;
    if cfg.adversary_input == AdversaryInput::Representation {
        let from_h = h_back.input_grad.slice_cols(0, m);
        for (d, s) in dz.data_mut().iter_mut().zip(from_h.data().iter()) {
            *d += s;
        }
    }
    if let Some(kb) = &dec_back {
        let from_k = kb.input_grad.slice_cols(0, m);
        for (d, s) in dz.data_mut().iter_mut().zip(from_k.data().iter()) {
            *d += s;
        }
    }
    let f_back = model.encoder.backward(&cache_f, &dz)?;

    let mut grads = Vec::with_capacity(model.fgk_param_count());
    MlpNetwork::write_grads(&f_back.grads, &mut grads);
    MlpNetwork::write_grads(&g_back.grads, &mut grads);
    if let Some(kb) = dec_back {
        MlpNetwork::write_grads(&kb.grads, &mut grads);
    }
    Ok((
        LossTerms {
            classifier: l_c,
            decoder: l_dec,
            adversary: l_adv,
            total,
        },
        grads,
    ))
}

/// Adversary objective plus its exact analytic gradient with respect to
/// the adversary's flat parameters, (f, g, k) frozen.
pub fn adversary_forward_backward(
    model: &LaftrModel,
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let enc_in = encoder_input(batch, cfg.append_a);
    let z = model.encoder.forward(&enc_in)?;
    let yhat = model.classifier.forward(&z)?;
    let adv_in = adversary_input(model, cfg, &z, &yhat, batch);
    let cache_h = model.adversary.forward_cached(&adv_in)?;
    let h_col = cache_h.output().col(0);
    let label_opt = cfg.objective.uses_label().then_some(batch.y.as_slice());
    let l_adv = adv_objective(cfg.objective, &h_col, &batch.a, label_opt)?;
    if !l_adv.is_finite() {
        return Err(Error::NonFinite {
            path: "ascent step".into(),
            detail: format!("L_Adv={}", l_adv),
        });
    }
    let dh = Mat::column(&adv_objective_grad(
        cfg.objective,
        &h_col,
        &batch.a,
        label_opt,
    )?);
    let h_back = model.adversary.backward(&cache_h, &dh)?;
    let mut grads = Vec::with_capacity(model.adversary.param_count());
    MlpNetwork::write_grads(&h_back.grads, &mut grads);
    Ok((l_adv, grads))
}

/// Per-epoch mean training losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub classifier: f64,
    pub decoder: f64,
    pub adversary: f64,
    pub total: f64,
}

/// Full parameter snapshot plus the batching RNG state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: LaftrModel,
    pub config_fingerprint: String,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

/// Outcome of [`fit`]: final model, checkpoints, per-epoch loss log.
pub struct TrainOutcome {
    pub model: LaftrModel,
    pub checkpoints: Vec<Checkpoint>,
    pub loss_log: Vec<EpochLoss>,
}

/// Stratified minibatches: each needed cell is shuffled and spread across
/// batches so no batch starves the active objective.
pub(crate) fn stratified_batches(
    cells: &[Vec<usize>],
    n: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let min_cell = cells.iter().map(|c| c.len()).min().unwrap_or(0).max(1);
    let nb = n.div_ceil(batch_size).clamp(1, min_cell);
    let mut batches = vec![Vec::new(); nb];
    for cell in cells {
        let mut order = cell.clone();
        order.shuffle(rng);
        let base = order.len() / nb;
        let extra = order.len() % nb;
        let mut off = 0;
        for (b, batch) in batches.iter_mut().enumerate() {
            let take = base + usize::from(b < extra);
            batch.extend_from_slice(&order[off..off + take]);
            off += take;
        }
    }
    batches
}

pub(crate) fn needed_cells(ds: &GroupedDataset, objective: AdvObjectiveKind) -> Result<Vec<Vec<usize>>> {
    let cells = partition_rows(&ds.a, &ds.y);
    let named: Vec<(&str, Vec<usize>)> = match objective {
        AdvObjectiveKind::Dp | AdvObjectiveKind::CeBaseline => {
            vec![("a=0", cells.d0), ("a=1", cells.d1)]
        }
        AdvObjectiveKind::Eo | AdvObjectiveKind::Eopp => vec![
            ("a=0,y=0", cells.d00),
            ("a=1,y=0", cells.d10),
            ("a=0,y=1", cells.d01),
            ("a=1,y=1", cells.d11),
        ],
    };
    let mut out = Vec::with_capacity(named.len());
    for (name, idx) in named {
        if idx.is_empty() {
            // The eopp objective only needs the y=0 cells; empty y=1 cells
            // are tolerated and simply not stratified over.
            if objective == AdvObjectiveKind::Eopp && name.ends_with("y=1") {
                continue;
            }
            return Err(Error::GroupStarvation { cell: name.into() });
        }
        out.push(idx);
    }
    Ok(out)
}

/// Train for the configured number of epochs with stratified minibatching,
/// checkpointing at epoch 0, every `checkpoint_interval` epochs, and at the
/// final epoch.
pub fn fit(train: &GroupedDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::RejectedInput("train split is empty".into()));
    }
    let cells = needed_cells(train, config.objective)?;
    let fingerprint = config.fingerprint();

    let mut trainer = MinimaxTrainer::new(train.dim(), config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed_ba7c));

    let snapshot = |epoch: usize, model: &LaftrModel, rng: &ChaCha8Rng| Checkpoint {
        epoch,
        model: model.clone(),
        config_fingerprint: fingerprint.clone(),
        rng_seed: rng.get_seed(),
        rng_word_pos: rng.get_word_pos(),
    };

    let mut checkpoints = vec![snapshot(0, &trainer.model, &rng)];
    let mut loss_log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let batches = stratified_batches(&cells, train.len(), config.batch_size, &mut rng);
        let mut acc = [0.0f64; 4];
        let mut rows = 0usize;
        for idx in &batches {
            let batch = TrainBatch::from_dataset(train, idx);
            let terms = trainer.train_step(&batch).map_err(|e| match e {
                Error::NonFinite { path, detail } => Error::NonFinite {
                    path: format!("epoch {}/{}", epoch, path),
                    detail,
                },
                other => other,
            })?;
            let w = batch.len() as f64;
            acc[0] += terms.classifier * w;
            acc[1] += terms.decoder * w;
            acc[2] += terms.adversary * w;
            acc[3] += terms.total * w;
            rows += batch.len();
        }
        let w = rows as f64;
        loss_log.push(EpochLoss {
            epoch,
            classifier: acc[0] / w,
            decoder: acc[1] / w,
            adversary: acc[2] / w,
            total: acc[3] / w,
        });
        if epoch % config.checkpoint_interval == 0 || epoch == config.epochs {
            checkpoints.push(snapshot(epoch, &trainer.model, &rng));
        }
    }

    Ok(TrainOutcome {
        model: trainer.model,
        checkpoints,
        loss_log,
    })
}

/// Write the loss log as CSV: `epoch,l_c,l_dec,l_adv,l`, preceded by a
/// fingerprint comment.
pub fn write_loss_log(log: &[EpochLoss], path: &Path, fingerprint: &str) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    writeln!(
        f,
        "# config_fingerprint={} tool_version={}",
        fingerprint, TOOL_VERSION
    )
    .map_err(io_err)?;
    writeln!(f, "epoch,l_c,l_dec,l_adv,l").map_err(io_err)?;
    for row in log {
        writeln!(
            f,
            "{},{},{},{},{}",
            row.epoch, row.classifier, row.decoder, row.adversary, row.total
        )
        .map_err(io_err)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoint persistence: versioned binary with a magic header, the config
// fingerprint, epoch, RNG state, and flat parameter arrays with shapes.
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"LFRCKPT\x01";

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_net(buf: &mut Vec<u8>, net: &MlpNetwork) {
    buf.push(match net.output_activation() {
        OutputActivation::Sigmoid => 0,
        OutputActivation::Identity => 1,
    });
    let dims = net.layer_dims();
    put_u32(buf, dims.len() as u32);
    for d in &dims {
        put_u32(buf, *d as u32);
    }
    let mut params = Vec::new();
    net.write_params(&mut params);
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    off: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.off + n > self.buf.len() {
            return Err(Error::InternalState("checkpoint truncated".into()));
        }
        let s = &self.buf[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn net(&mut self) -> Result<MlpNetwork> {
        let act = match self.byte()? {
            0 => OutputActivation::Sigmoid,
            1 => OutputActivation::Identity,
            other => {
                return Err(Error::InternalState(format!(
                    "unknown activation tag {}",
                    other
                )))
            }
        };
        let ndims = self.u32()? as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(self.u32()? as usize);
        }
        let mut net = MlpNetwork::zeroed(&dims, act);
        let count = net.param_count();
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(self.f64()?);
        }
        net.read_params(&params);
        Ok(net)
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        put_u32(&mut buf, 1); // format version
        let fp = self.config_fingerprint.as_bytes();
        put_u32(&mut buf, fp.len() as u32);
        buf.extend_from_slice(fp);
        buf.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        buf.extend_from_slice(&self.rng_seed);
        buf.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        buf.push(u8::from(self.model.decoder.is_some()));
        put_net(&mut buf, &self.model.encoder);
        put_net(&mut buf, &self.model.classifier);
        put_net(&mut buf, &self.model.adversary);
        if let Some(dec) = &self.model.decoder {
            put_net(&mut buf, dec);
        }
        fs::write(path, &buf).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        let mut r = ByteReader { buf: &buf, off: 0 };
        if r.take(8)? != CKPT_MAGIC {
            return Err(Error::RejectedInput(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = r.u32()?;
        if version != 1 {
            return Err(Error::RejectedInput(format!(
                "unsupported checkpoint version {}",
                version
            )));
        }
        let fp_len = r.u32()? as usize;
        let fingerprint = String::from_utf8(r.take(fp_len)?.to_vec())
            .map_err(|_| Error::InternalState("fingerprint is not utf-8".into()))?;
        let epoch = r.u64()? as usize;
        let rng_seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let rng_word_pos = r.u128()?;
        let has_decoder = r.byte()? == 1;
        let encoder = r.net()?;
        let classifier = r.net()?;
        let adversary = r.net()?;
        let decoder = if has_decoder { Some(r.net()?) } else { None };
        Ok(Checkpoint {
            epoch,
            model: LaftrModel {
                encoder,
                classifier,
                adversary,
                decoder,
            },
            config_fingerprint: fingerprint,
            rng_seed,
            rng_word_pos,
        })
    }
}
