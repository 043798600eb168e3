//! Finite-difference verification of every analytic gradient path: plain
//! networks under each loss kind, and the combined objective through the
//! full four-network model.

use laftr_core::mat::Mat;
use laftr_core::nn::{loss_grad, loss_value, LossKind, MlpNetwork, OutputActivation};
use laftr_core::objectives::AdvObjectiveKind;
use laftr_core::trainer::{
    adversary_forward_backward, combined_loss, encoder_input, fgk_forward_backward,
    AdversaryInput, LaftrModel, TrainBatch, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-7;
/// Pre-activations closer than this to the rectifier kink force a redraw.
const KINK_GUARD: f64 = 1e-3;

fn grad_close(analytic: f64, fd: f64) -> bool {
    let diff = (analytic - fd).abs();
    diff <= ABS_FLOOR + REL_TOL * analytic.abs().max(fd.abs())
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Mat {
    Mat::from_rows(
        &(0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect::<Vec<_>>(),
    )
}

/// Loss of `net` on `(x, targets)` as a function of its flat parameters.
fn net_loss(net: &MlpNetwork, params: &[f64], x: &Mat, t: &Mat, kind: LossKind) -> f64 {
    let mut n = net.clone();
    n.read_params(params);
    let out = n.forward(x).unwrap();
    loss_value(kind, &out, t).unwrap()
}

fn check_net_shape(
    rng: &mut ChaCha8Rng,
    dims: &[usize],
    act: OutputActivation,
    kind: LossKind,
    draws: usize,
) {
    let d_in = dims[0];
    let d_out = *dims.last().unwrap();
    let mut done = 0;
    let mut attempts = 0;
    while done < draws {
        attempts += 1;
        assert!(attempts < draws * 50, "could not find kink-free draws");
        let net = MlpNetwork::new(dims, act, rng);
        let x = random_batch(rng, 5, d_in);
        let cache = net.forward_cached(&x).unwrap();
        if cache.min_abs_hidden_preactivation() < KINK_GUARD {
            continue;
        }
        let out = cache.output().clone();
        let t = match kind {
            LossKind::CrossEntropy => Mat::from_rows(
                &(0..5)
                    .map(|_| (0..d_out).map(|_| f64::from(rng.random_bool(0.5))).collect())
                    .collect::<Vec<_>>(),
            ),
            _ => {
                let t = random_batch(rng, 5, d_out);
                if kind == LossKind::AbsoluteError {
                    // Exclude the subgradient kink.
                    let near = out
                        .data()
                        .iter()
                        .zip(t.data().iter())
                        .any(|(&p, &v)| (p - v).abs() < 1e-3);
                    if near {
                        continue;
                    }
                }
                t
            }
        };

        let up = loss_grad(kind, &out, &t).unwrap();
        let back = net.backward(&cache, &up).unwrap();
        let mut analytic = Vec::new();
        MlpNetwork::write_grads(&back.grads, &mut analytic);

        let mut params = Vec::new();
        net.write_params(&mut params);
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += FD_STEP;
            let up_l = net_loss(&net, &p, &x, &t, kind);
            p[i] -= 2.0 * FD_STEP;
            let dn_l = net_loss(&net, &p, &x, &t, kind);
            let fd = (up_l - dn_l) / (2.0 * FD_STEP);
            assert!(
                grad_close(analytic[i], fd),
                "{:?} {:?} param {}: analytic {} vs fd {}",
                kind,
                dims,
                i,
                analytic[i],
                fd
            );
        }
        done += 1;
    }
}

#[test]
fn network_gradients_match_central_differences_for_every_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9d5a);
    // Shapes covering the widths used across the crate; >= 100 draws per
    // loss kind in total.
    let shapes: [(&[usize], OutputActivation); 4] = [
        (&[3, 4, 1], OutputActivation::Sigmoid),
        (&[2, 3, 1], OutputActivation::Sigmoid),
        (&[4, 5, 2], OutputActivation::Identity),
        (&[5, 3, 4], OutputActivation::Identity),
    ];
    for kind in [
        LossKind::CrossEntropy,
        LossKind::AbsoluteError,
        LossKind::SquaredError,
    ] {
        for (dims, act) in shapes {
            // Cross-entropy expects probabilities, so pair it with sigmoid.
            if kind == LossKind::CrossEntropy && act == OutputActivation::Identity {
                continue;
            }
            check_net_shape(&mut rng, dims, act, kind, 30);
        }
        // Deeper net to exercise chained leaky layers.
        let act = if kind == LossKind::CrossEntropy {
            OutputActivation::Sigmoid
        } else {
            OutputActivation::Identity
        };
        check_net_shape(&mut rng, &[3, 4, 3, 1], act, kind, 40);
    }
}

fn random_model_batch(
    rng: &mut ChaCha8Rng,
    cfg: &TrainConfig,
    d: usize,
    n: usize,
) -> (LaftrModel, TrainBatch) {
    let mut seed_rng = ChaCha8Rng::seed_from_u64(rng.random_range(0..u64::MAX / 2));
    let model = LaftrModel::new(d, cfg, &mut seed_rng).unwrap();
    // Batch containing all four group-label cells.
    let mut y = vec![0u8, 0, 1, 1];
    let mut a = vec![0u8, 1, 0, 1];
    for _ in 4..n {
        y.push(u8::from(rng.random_bool(0.5)));
        a.push(u8::from(rng.random_bool(0.5)));
    }
    let x = random_batch(rng, n, d);
    (model, TrainBatch { x, y, a })
}

fn model_kink_free(model: &LaftrModel, batch: &TrainBatch, cfg: &TrainConfig) -> bool {
    let enc_in = encoder_input(batch, cfg.append_a);
    let cache_f = model.encoder.forward_cached(&enc_in).unwrap();
    if cache_f.min_abs_hidden_preactivation() < KINK_GUARD {
        return false;
    }
    let z = cache_f.output().clone();
    let cache_g = model.classifier.forward_cached(&z).unwrap();
    if cache_g.min_abs_hidden_preactivation() < KINK_GUARD {
        return false;
    }
    if let Some(dec) = &model.decoder {
        let a_col = Mat::column(&batch.a.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let cache_k = dec.forward_cached(&z.hstack(&a_col)).unwrap();
        if cache_k.min_abs_hidden_preactivation() < KINK_GUARD {
            return false;
        }
    }
    let yhat = model.classifier.forward(&z).unwrap();
    let y_col = Mat::column(&batch.y.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let adv_base = match cfg.adversary_input {
        AdversaryInput::Representation => z,
        AdversaryInput::ClassifierOutput => yhat,
    };
    let adv_in = if cfg.objective.uses_label() {
        adv_base.hstack(&y_col)
    } else {
        adv_base
    };
    let cache_h = model.adversary.forward_cached(&adv_in).unwrap();
    cache_h.min_abs_hidden_preactivation() >= KINK_GUARD
}

/// Combined loss as a function of the flat (f, g, k) block.
fn combined_of_fgk(
    model: &LaftrModel,
    params: &[f64],
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> f64 {
    let mut m = model.clone();
    m.fgk_read(params);
    combined_loss(&m, batch, cfg).unwrap().total
}

fn adversary_objective_of_params(
    model: &LaftrModel,
    params: &[f64],
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> f64 {
    let mut m = model.clone();
    m.adversary.read_params(params);
    combined_loss(&m, batch, cfg).unwrap().adversary
}

#[test]
fn combined_loss_gradients_match_central_differences_on_100_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let objectives = [
        AdvObjectiveKind::Dp,
        AdvObjectiveKind::Eo,
        AdvObjectiveKind::Eopp,
        AdvObjectiveKind::CeBaseline,
    ];
    let mut done = 0;
    let mut attempts = 0;
    while done < 100 {
        attempts += 1;
        assert!(attempts < 5000, "could not find kink-free draws");
        let objective = objectives[done % objectives.len()];
        let cfg = TrainConfig {
            alpha: rng.random_range(0.2..1.5),
            beta: rng.random_range(0.2..1.5),
            gamma: rng.random_range(0.2..1.5),
            objective,
            adversary_input: if done % 5 == 4 {
                AdversaryInput::ClassifierOutput
            } else {
                AdversaryInput::Representation
            },
            repr_dim: 3,
            hidden: 4,
            append_a: done % 2 == 0,
            seed: done as u64,
            ..Default::default()
        };
        let (model, batch) = random_model_batch(&mut rng, &cfg, 3, 8);
        if !model_kink_free(&model, &batch, &cfg) {
            continue;
        }

        // (f, g, k) block against FD of the full combined loss.
        let (_, analytic) = fgk_forward_backward(&model, &batch, &cfg).unwrap();
        let params = model.fgk_params();
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += FD_STEP;
            let up = combined_of_fgk(&model, &p, &batch, &cfg);
            p[i] -= 2.0 * FD_STEP;
            let dn = combined_of_fgk(&model, &p, &batch, &cfg);
            let fd = (up - dn) / (2.0 * FD_STEP);
            assert!(
                grad_close(analytic[i], fd),
                "model {} ({:?}) fgk param {}: analytic {} vs fd {}",
                done,
                objective,
                i,
                analytic[i],
                fd
            );
        }

        // Adversary block against FD of the adversary objective.
        let (_, h_grads) = adversary_forward_backward(&model, &batch, &cfg).unwrap();
        let mut h_params = Vec::new();
        model.adversary.write_params(&mut h_params);
        for i in 0..h_params.len() {
            let mut p = h_params.clone();
            p[i] += FD_STEP;
            let up = adversary_objective_of_params(&model, &p, &batch, &cfg);
            p[i] -= 2.0 * FD_STEP;
            let dn = adversary_objective_of_params(&model, &p, &batch, &cfg);
            let fd = (up - dn) / (2.0 * FD_STEP);
            assert!(
                grad_close(h_grads[i], fd),
                "model {} ({:?}) adversary param {}: analytic {} vs fd {}",
                done,
                objective,
                i,
                h_grads[i],
                fd
            );
        }
        done += 1;
    }
}
