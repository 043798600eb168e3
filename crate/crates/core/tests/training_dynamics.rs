//! Paired-run checks that adversarial pressure actually scrubs the group
//! signal out of the representation.

use laftr_core::data::{generate_synthetic, prepare, SplitSpec, SyntheticSpec};
use laftr_core::eval::{fit_selected, probe_train, ProbeConfig, Representation};
use laftr_core::objectives::AdvObjectiveKind;
use laftr_core::trainer::{fit, TrainConfig};

fn proxy_splits(seed: u64) -> laftr_core::data::Splits {
    let ds = generate_synthetic(&SyntheticSpec {
        n: 3000,
        d: 10,
        proxy_strength: 1.0,
        seed,
        ..Default::default()
    })
    .unwrap();
    prepare(&ds, &SplitSpec { seed, ..Default::default() }).unwrap()
}

fn config(gamma: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        alpha: 1.0,
        beta: 0.0,
        gamma,
        objective: AdvObjectiveKind::Dp,
        epochs: 60,
        repr_dim: 8,
        hidden: 8,
        checkpoint_interval: 15,
        seed,
        ..Default::default()
    }
}

#[test]
fn large_gamma_scrubs_the_adversary_objective() {
    let splits = proxy_splits(41);
    let free = fit(&splits.train, &config(0.0, 7)).unwrap();
    let scrubbed = fit(&splits.train, &config(3.0, 7)).unwrap();
    let adv_free = free.loss_log.last().unwrap().adversary;
    let adv_scrubbed = scrubbed.loss_log.last().unwrap().adversary;
    assert!(
        adv_scrubbed < adv_free,
        "adversary objective: gamma=3 {} vs gamma=0 {}",
        adv_scrubbed,
        adv_free
    );
}

#[test]
fn scrubbed_encoder_yields_fairer_probes_than_unfair_encoder() {
    let splits = proxy_splits(42);
    let probe_cfg = ProbeConfig {
        max_epochs: 150,
        ..Default::default()
    };

    let (unfair, _) = fit_selected(&splits, &config(0.0, 11), &probe_cfg, 2, 1).unwrap();
    let (fair, _) = fit_selected(&splits, &config(2.0, 11), &probe_cfg, 2, 1).unwrap();

    let repr_of = |model: &laftr_core::trainer::LaftrModel| Representation::Encoder {
        net: model.encoder.clone(),
        append_a: true,
    };
    let unfair_probe = probe_train(
        &repr_of(&unfair),
        &splits.transfer_train,
        &splits.transfer_test,
        &probe_cfg,
        5,
    )
    .unwrap();
    let fair_probe = probe_train(
        &repr_of(&fair),
        &splits.transfer_train,
        &splits.transfer_test,
        &probe_cfg,
        5,
    )
    .unwrap();

    assert!(
        fair_probe.report.delta_dp < unfair_probe.report.delta_dp,
        "delta_dp: fair {} vs unfair {}",
        fair_probe.report.delta_dp,
        unfair_probe.report.delta_dp
    );
}
