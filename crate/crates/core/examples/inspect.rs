//! Scratch: per-checkpoint view of the transfer-LAFTR run (alpha=0, beta=1, EO).
use laftr_core::data::{generate_synthetic, prepare, SplitSpec, SyntheticSpec};
use laftr_core::eval::{probe_train, ProbeConfig, Representation};
use laftr_core::objectives::AdvObjectiveKind;
use laftr_core::trainer::{fit, TrainConfig};

fn main() {
    let ds = generate_synthetic(&SyntheticSpec { n: 10000, d: 10, proxy_strength: 0.8, seed: 77, ..Default::default() }).unwrap();
    let splits = prepare(&ds, &SplitSpec { seed: 77, ..Default::default() }).unwrap();
    let cfg = TrainConfig {
        alpha: 0.0, beta: 1.0, gamma: 1.0, objective: AdvObjectiveKind::Eo,
        epochs: 150, repr_dim: 8, hidden: 8, checkpoint_interval: 25, seed: 1,
        ..Default::default()
    };
    let out = fit(&splits.train, &cfg).unwrap();
    let probe_cfg = ProbeConfig { max_epochs: 150, ..Default::default() };
    let task_train = splits.transfer_train.with_task_label("task03").unwrap();
    let task_test = splits.transfer_test.with_task_label("task03").unwrap();
    for ckpt in &out.checkpoints {
        let row = out.loss_log.iter().find(|r| r.epoch == ckpt.epoch);
        let (l_dec, l_adv) = row.map(|r| (r.decoder, r.adversary)).unwrap_or((f64::NAN, f64::NAN));
        let repr = Representation::Encoder { net: ckpt.model.encoder.clone(), append_a: true };
        let val = probe_train(&repr, &splits.train, &splits.validation, &probe_cfg, 31).unwrap();
        let task = probe_train(&repr, &task_train, &task_test, &probe_cfg, 32).unwrap();
        println!("epoch {:>3} l_dec={:.4} l_adv={:+.4} | Y: acc={:.4} deo={:.4} score={:.4} | task03: acc={:.4} deo={:.4} | adv_acc={:.4} mmd={:.2e}",
            ckpt.epoch, l_dec, l_adv,
            val.report.accuracy, val.report.delta_eo, 1.0 - val.report.accuracy + val.report.delta_eo,
            task.report.accuracy, task.report.delta_eo, val.report.adv_acc, val.report.mmd);
    }
}
