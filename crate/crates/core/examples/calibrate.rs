//! Scratch calibration runs for the min-max dynamics (not shipped).

use laftr_core::data::{generate_synthetic, prepare, SplitSpec, SyntheticSpec};
use laftr_core::eval::{probe_train, ProbeConfig, Representation};
use laftr_core::objectives::AdvObjectiveKind;
use laftr_core::eval::fit_selected;
use laftr_core::trainer::TrainConfig;
use laftr_core::transfer::{run_transfer_suite, ReprLearnerKind, TransferConfig};

fn classification_calibration(n: usize, epochs: usize, proxy: f64) {
    let ds = generate_synthetic(&SyntheticSpec {
        n,
        d: 10,
        proxy_strength: proxy,
        seed: 42,
        ..Default::default()
    })
    .unwrap();
    let splits = prepare(
        &ds,
        &SplitSpec {
            transfer_train: 0.45,
            transfer_validation: 0.1,
            transfer_test: 0.45,
            seed: 42,
            ..Default::default()
        },
    )
    .unwrap();
    let probe_cfg = ProbeConfig { max_epochs: 150, ..Default::default() };

    for (gamma, objective) in [
        (0.0, AdvObjectiveKind::Dp),
        (2.0, AdvObjectiveKind::Dp),
        (2.0, AdvObjectiveKind::Eo),
    ] {
        for seed in [1u64, 2, 3, 4, 5, 6, 7] {
            let cfg = TrainConfig {
                alpha: 1.0,
                beta: 0.0,
                gamma,
                objective,
                epochs,
                repr_dim: 8,
                hidden: 8,
                checkpoint_interval: 10,
                seed,
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            let (model, epoch) = fit_selected(&splits, &cfg, &probe_cfg, 3, seed).unwrap();
            let repr = Representation::Encoder {
                net: model.encoder.clone(),
                append_a: true,
            };
            let probe = probe_train(
                &repr,
                &splits.transfer_train,
                &splits.transfer_test,
                &probe_cfg,
                seed + 100,
            )
            .unwrap();
            println!(
                "gamma={:>4} obj={:?} seed={} ({:.1}s, epoch {:>3}) | acc={:.4} ddp={:.4} deo={:.4} adv_acc={:.4} mmd={:.2e}",
                gamma,
                objective,
                seed,
                t0.elapsed().as_secs_f64(),
                epoch,
                probe.report.accuracy,
                probe.report.delta_dp,
                probe.report.delta_eo,
                probe.report.adv_acc,
                probe.report.mmd
            );
        }
    }
}

fn transfer_calibration(n: usize, epochs: usize, proxy: f64) {
    let ds = generate_synthetic(&SyntheticSpec {
        n,
        d: 10,
        proxy_strength: proxy,
        seed: 77,
        ..Default::default()
    })
    .unwrap();
    let splits = prepare(
        &ds,
        &SplitSpec {
            transfer_train: 0.45,
            transfer_validation: 0.1,
            transfer_test: 0.45,
            seed: 77,
            ..Default::default()
        },
    )
    .unwrap();
    for seed in [1u64, 2, 3, 4, 5] {
        let cfg = TransferConfig {
            repr_train: TrainConfig {
                epochs,
                repr_dim: 12,
                hidden: 12,
                checkpoint_interval: 10,
                seed,
                ..Default::default()
            },
            fair_gamma: 1.0,
            probe: ProbeConfig { max_epochs: 150, ..Default::default() },
            r: 3,
            r_select: 3,
            seed,
        };
        let t0 = std::time::Instant::now();
        let report = run_transfer_suite(
            &[
                ReprLearnerKind::TargetUnfair,
                ReprLearnerKind::TransferUnfair,
                ReprLearnerKind::Laftr,
            ],
            &splits,
            &cfg,
        )
        .unwrap();
        println!(
            "seed={} ({:.1}s)  mean_rel_deo: laftr={:.4} unfair={:.4}  mean_rel_err: laftr={:.4} unfair={:.4}",
            seed,
            t0.elapsed().as_secs_f64(),
            report.mean_rel_delta_eo["laftr"],
            report.mean_rel_delta_eo["transfer-unfair"],
            report.mean_rel_error["laftr"],
            report.mean_rel_error["transfer-unfair"],
        );
        for audit in &report.audits {
            println!(
                "  audit {:>16}: mmd={:.3e} adv_acc={:.4}",
                audit.learner, audit.mmd, audit.adv_acc
            );
        }
        if !report.failures.is_empty() {
            println!("  failures: {:?}", report.failures);
        }

    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "cls".into());
    let n: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3000);
    let epochs: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let proxy: f64 = std::env::args()
        .nth(4)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.8);
    match mode.as_str() {
        "transfer" => transfer_calibration(n, epochs, proxy),
        _ => classification_calibration(n, epochs, proxy),
    }
}
