//! Evaluation-time fairness quantities: test discrepancy, statistical
//! distance by brute-force enumeration, demographic parity / equalized
//! odds / equal opportunity gaps, unbiased RBF-kernel MMD, and the
//! adversarial accuracy probe.

use serde::{Deserialize, Serialize};

use crate::data::partition_rows;
use crate::error::{Error, Result};
use crate::eval::ProbeConfig;
use crate::mat::Mat;

/// One evaluated example: hard prediction, label, group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionRecord {
    pub prediction: u8,
    pub label: u8,
    pub group: u8,
}

impl PredictionRecord {
    pub fn new(prediction: u8, label: u8, group: u8) -> Self {
        debug_assert!(prediction <= 1 && label <= 1 && group <= 1);
        PredictionRecord {
            prediction,
            label,
            group,
        }
    }
}

/// Hard predictions from classifier outputs; the 0.5 default threshold is
/// configurable.
pub fn harden(soft: &[f64], threshold: f64) -> Vec<u8> {
    soft.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Two distributions over a shared finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistributionPair {
    p0: Vec<f64>,
    p1: Vec<f64>,
}

impl DiscreteDistributionPair {
    pub fn new(p0: Vec<f64>, p1: Vec<f64>) -> Result<Self> {
        if p0.len() != p1.len() || p0.is_empty() {
            return Err(Error::RejectedInput(
                "distributions need equal, nonzero support sizes".into(),
            ));
        }
        for (name, p) in [("p0", &p0), ("p1", &p1)] {
            if p.iter().any(|&v| v < 0.0) {
                return Err(Error::RejectedInput(format!("{} has a negative mass", name)));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::RejectedInput(format!(
                    "{} sums to {}, expected 1",
                    name, sum
                )));
            }
        }
        Ok(DiscreteDistributionPair { p0, p1 })
    }

    pub fn support_size(&self) -> usize {
        self.p0.len()
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn p1(&self) -> &[f64] {
        &self.p1
    }
}

/// `|E_{p0}[mu] - E_{p1}[mu]|` for a binary test function on the support.
pub fn test_discrepancy(pair: &DiscreteDistributionPair, mu: &[bool]) -> Result<f64> {
    if mu.len() != pair.support_size() {
        return Err(Error::RejectedInput(
            "test function must be total on the support".into(),
        ));
    }
    let mut diff = 0.0;
    for (i, &m) in mu.iter().enumerate() {
        if m {
            diff += pair.p0[i] - pair.p1[i];
        }
    }
    Ok(diff.abs())
}

/// Largest support size [`statistical_distance`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 24;

/// Maximum attainable test discrepancy, by enumerating all `2^k` binary
/// tests, cross-checked against the half-l1 closed form. Returns the value
/// and an argmax test.
pub fn statistical_distance(pair: &DiscreteDistributionPair) -> Result<(f64, Vec<bool>)> {
    let k = pair.support_size();
    if k > ENUMERATION_LIMIT {
        return Err(Error::RejectedInput(format!(
            "support {} exceeds the enumeration limit {}; use statistical_distance_closed_form",
            k, ENUMERATION_LIMIT
        )));
    }
    let mut best = 0.0;
    let mut best_mask: u64 = 0;
    for mask in 0..(1u64 << k) {
        let mut diff = 0.0;
        for i in 0..k {
            if mask >> i & 1 == 1 {
                diff += pair.p0[i] - pair.p1[i];
            }
        }
        let d = diff.abs();
        if d > best {
            best = d;
            best_mask = mask;
        }
    }
    let closed = statistical_distance_closed_form(pair);
    if (best - closed).abs() > 1e-12 {
        return Err(Error::InternalState(format!(
            "enumeration {} disagrees with half-l1 closed form {}",
            best, closed
        )));
    }
    let mu = (0..k).map(|i| best_mask >> i & 1 == 1).collect();
    Ok((best, mu))
}

/// Total-variation identity: half the l1 distance between the vectors.
pub fn statistical_distance_closed_form(pair: &DiscreteDistributionPair) -> f64 {
    0.5 * pair
        .p0
        .iter()
        .zip(pair.p1.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

fn group_mean(preds: &[PredictionRecord], indices: &[usize]) -> f64 {
    indices
        .iter()
        .map(|&i| preds[i].prediction as f64)
        .sum::<f64>()
        / indices.len() as f64
}

fn cells_of(preds: &[PredictionRecord]) -> crate::data::Cells {
    let a: Vec<u8> = preds.iter().map(|p| p.group).collect();
    let y: Vec<u8> = preds.iter().map(|p| p.label).collect();
    partition_rows(&a, &y)
}

/// Demographic parity gap `|E[pred | a=0] - E[pred | a=1]|`.
pub fn delta_dp(preds: &[PredictionRecord]) -> Result<f64> {
    let cells = cells_of(preds);
    for (name, cell) in [("a=0", &cells.d0), ("a=1", &cells.d1)] {
        if cell.is_empty() {
            return Err(Error::MetricUndefined { cell: name.into() });
        }
    }
    Ok((group_mean(preds, &cells.d0) - group_mean(preds, &cells.d1)).abs())
}

/// Equalized odds gap: false-positive-rate difference plus
/// false-negative-rate difference across groups.
pub fn delta_eo(preds: &[PredictionRecord]) -> Result<f64> {
    let cells = cells_of(preds);
    for (name, cell) in [
        ("a=0,y=0", &cells.d00),
        ("a=1,y=0", &cells.d10),
        ("a=0,y=1", &cells.d01),
        ("a=1,y=1", &cells.d11),
    ] {
        if cell.is_empty() {
            return Err(Error::MetricUndefined { cell: name.into() });
        }
    }
    let fpr_gap = (group_mean(preds, &cells.d00) - group_mean(preds, &cells.d10)).abs();
    let fnr_gap = ((1.0 - group_mean(preds, &cells.d01)) - (1.0 - group_mean(preds, &cells.d11)))
        .abs();
    Ok(fpr_gap + fnr_gap)
}

/// Equal opportunity gap, the equalized-odds term restricted to the
/// advantaged outcome y = 0.
pub fn delta_eopp(preds: &[PredictionRecord]) -> Result<f64> {
    let cells = cells_of(preds);
    for (name, cell) in [("a=0,y=0", &cells.d00), ("a=1,y=0", &cells.d10)] {
        if cell.is_empty() {
            return Err(Error::MetricUndefined { cell: name.into() });
        }
    }
    Ok((group_mean(preds, &cells.d00) - group_mean(preds, &cells.d10)).abs())
}

/// Fraction of records whose prediction equals the label.
pub fn accuracy(preds: &[PredictionRecord]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    preds
        .iter()
        .filter(|p| p.prediction == p.label)
        .count() as f64
        / preds.len() as f64
}

/// Unbiased two-sample MMD^2 estimate with Gaussian RBF kernel
/// `exp(-||u - v||^2 / (2 sigma^2))`. Within-group sums exclude the
/// diagonal, so the value can be slightly negative; it is reported as-is.
pub fn mmd_rbf(samples0: &Mat, samples1: &Mat, sigma: f64) -> Result<f64> {
    if samples0.cols() != samples1.cols() {
        return Err(Error::RejectedInput(format!(
            "column mismatch: {} vs {}",
            samples0.cols(),
            samples1.cols()
        )));
    }
    if samples0.rows() < 2 || samples1.rows() < 2 {
        return Err(Error::RejectedInput(
            "each side needs at least 2 rows".into(),
        ));
    }
    if sigma <= 0.0 {
        return Err(Error::RejectedInput("sigma must be positive".into()));
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let kernel = |u: &[f64], v: &[f64]| {
        let mut sq = 0.0;
        for (a, b) in u.iter().zip(v.iter()) {
            let d = a - b;
            sq += d * d;
        }
        (-gamma * sq).exp()
    };
    let m = samples0.rows();
    let n = samples1.rows();
    let mut within0 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                within0 += kernel(samples0.row(i), samples0.row(j));
            }
        }
    }
    let mut within1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                within1 += kernel(samples1.row(i), samples1.row(j));
            }
        }
    }
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..n {
            cross += kernel(samples0.row(i), samples1.row(j));
        }
    }
    Ok(within0 / (m * (m - 1)) as f64 + within1 / (n * (n - 1)) as f64
        - 2.0 * cross / (m * n) as f64)
}

/// Outcome of the adversarial accuracy probe. `degenerate` flags a
/// single-class sensitive attribute, where the probe falls back to the
/// majority accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvProbeOutcome {
    pub accuracy: f64,
    pub degenerate: bool,
}

/// Train a fresh single-hidden-layer probe to predict the sensitive
/// attribute from representations; report its held-out test accuracy.
pub fn adversarial_accuracy_probe(
    reps: &Mat,
    a: &[u8],
    cfg: &ProbeConfig,
    train_fraction: f64,
    seed: u64,
) -> Result<AdvProbeOutcome> {
    if reps.rows() != a.len() {
        return Err(Error::RejectedInput(
            "representation rows must match sensitive attribute length".into(),
        ));
    }
    if reps.rows() < 4 {
        return Err(Error::RejectedInput("need at least 4 rows to probe".into()));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::RejectedInput("train_fraction must be in (0, 1)".into()));
    }
    let n = reps.rows();
    let majority = {
        let ones = a.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        ones.max(1.0 - ones)
    };
    if a.iter().all(|&v| v == a[0]) {
        return Ok(AdvProbeOutcome {
            accuracy: majority,
            degenerate: true,
        });
    }

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = ((n as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(2, n - 2);
    let (train_idx, test_idx) = order.split_at(cut);

    let train_x = reps.select_rows(train_idx);
    let train_a: Vec<u8> = train_idx.iter().map(|&i| a[i]).collect();
    let probe = crate::eval::train_binary_classifier(&train_x, &train_a, cfg, seed ^ 0x9e3779b9)?;

    let test_x = reps.select_rows(test_idx);
    let out = probe.forward(&test_x)?;
    let hard = harden(&out.col(0), 0.5);
    let correct = test_idx
        .iter()
        .zip(hard.iter())
        .filter(|(&i, &p)| a[i] == p)
        .count();
    Ok(AdvProbeOutcome {
        accuracy: correct as f64 / test_idx.len() as f64,
        degenerate: false,
    })
}

/// Flat metric report for one evaluated classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
    pub delta_eopp: f64,
    pub mmd: f64,
    pub adv_acc: f64,
}

impl FairnessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, k: usize) -> DiscreteDistributionPair {
        let mut draw = |k: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            // Re-normalize exactly so the constructor's 1e-12 gate holds.
            let s2: f64 = p.iter().sum();
            p[0] += 1.0 - s2;
            p
        };
        DiscreteDistributionPair::new(draw(k), draw(k)).unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_discrepancy_for_every_test() {
        let p = vec![0.25, 0.25, 0.5];
        let pair = DiscreteDistributionPair::new(p.clone(), p).unwrap();
        for mask in 0..8u32 {
            let mu: Vec<bool> = (0..3).map(|i| mask >> i & 1 == 1).collect();
            assert_eq!(test_discrepancy(&pair, &mu).unwrap(), 0.0);
        }
        assert_eq!(statistical_distance(&pair).unwrap().0, 0.0);
    }

    #[test]
    fn disjoint_supports_reach_one() {
        let pair =
            DiscreteDistributionPair::new(vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.3, 0.7])
                .unwrap();
        let mu = vec![true, true, false, false];
        assert!((test_discrepancy(&pair, &mu).unwrap() - 1.0).abs() < 1e-15);
        let (v, _) = statistical_distance(&pair).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_six_point_discrepancy_matches_expectation_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let pair = random_pair(&mut rng, 6);
            let mu: Vec<bool> = (0..6).map(|_| rng.random_bool(0.5)).collect();
            let got = test_discrepancy(&pair, &mu).unwrap();
            // Independent expectation arithmetic.
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for i in 0..6 {
                if mu[i] {
                    e0 += pair.p0()[i];
                    e1 += pair.p1()[i];
                }
            }
            assert!((got - (e0 - e1).abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn point_masses_on_different_atoms_have_distance_one() {
        let pair = DiscreteDistributionPair::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let (v, mu) = statistical_distance(&pair).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((test_discrepancy(&pair, &mu).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn appendix_marginals_statistical_distance() {
        // p(Z|A=0) and p(Z|A=1) from the two-point toy joint.
        let pair = DiscreteDistributionPair::new(
            vec![0.92 / 0.95, 0.03 / 0.95],
            vec![0.03 / 0.05, 0.02 / 0.05],
        )
        .unwrap();
        let (v, _) = statistical_distance(&pair).unwrap();
        let expect = 0.92 / 0.95 + 0.02 / 0.05 - 1.0;
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.368).abs() < 5e-4);
    }

    #[test]
    fn enumeration_guard_rejects_large_support() {
        let k = 25;
        let p: Vec<f64> = {
            let mut p = vec![1.0 / k as f64; k];
            let s: f64 = p.iter().sum();
            p[0] += 1.0 - s;
            p
        };
        let pair = DiscreteDistributionPair::new(p.clone(), p).unwrap();
        let err = statistical_distance(&pair).unwrap_err();
        assert!(err.to_string().contains("closed_form"));
        assert_eq!(statistical_distance_closed_form(&pair), 0.0);
    }

    #[test]
    fn enumeration_equals_half_l1_on_1000_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..1000 {
            let k = rng.random_range(2..=10);
            let pair = random_pair(&mut rng, k);
            let (v, mu) = statistical_distance(&pair).unwrap();
            let closed = statistical_distance_closed_form(&pair);
            assert!((v - closed).abs() < 1e-12, "case {}: {} vs {}", i, v, closed);
            // The returned argmax test really attains the value.
            assert!((test_discrepancy(&pair, &mu).unwrap() - v).abs() < 1e-12);
        }
    }

    fn rec(p: u8, y: u8, a: u8) -> PredictionRecord {
        PredictionRecord::new(p, y, a)
    }

    #[test]
    fn delta_dp_examples() {
        // Constant predictor.
        let preds: Vec<_> = (0..8).map(|i| rec(1, 0, (i % 2) as u8)).collect();
        assert_eq!(delta_dp(&preds).unwrap(), 0.0);
        // Prediction equal to group.
        let preds: Vec<_> = (0..8).map(|i| rec((i % 2) as u8, 0, (i % 2) as u8)).collect();
        assert_eq!(delta_dp(&preds).unwrap(), 1.0);
        // Handcrafted 3/4 vs 1/4.
        let mut preds = Vec::new();
        for &p in &[1, 1, 1, 0] {
            preds.push(rec(p, 0, 0));
        }
        for &p in &[1, 0, 0, 0] {
            preds.push(rec(p, 0, 1));
        }
        assert!((delta_dp(&preds).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn delta_dp_requires_both_groups() {
        let preds = vec![rec(1, 0, 0), rec(0, 1, 0)];
        match delta_dp(&preds).unwrap_err() {
            Error::MetricUndefined { cell } => assert_eq!(cell, "a=1"),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn delta_eo_examples_and_oracle() {
        // Perfect predictor.
        let mut preds = Vec::new();
        for a in 0..2u8 {
            for y in 0..2u8 {
                preds.push(rec(y, y, a));
            }
        }
        assert_eq!(delta_eo(&preds).unwrap(), 0.0);

        // Prediction equal to group on balanced cells: both terms are 1.
        let mut preds = Vec::new();
        for a in 0..2u8 {
            for y in 0..2u8 {
                preds.push(rec(a, y, a));
            }
        }
        assert_eq!(delta_eo(&preds).unwrap(), 2.0);

        // Random records vs a four-loop cell-rate oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let preds: Vec<_> = (0..200)
            .map(|_| {
                rec(
                    rng.random_range(0..2) as u8,
                    rng.random_range(0..2) as u8,
                    rng.random_range(0..2) as u8,
                )
            })
            .collect();
        let rate = |a: u8, y: u8| {
            let cell: Vec<_> = preds.iter().filter(|p| p.group == a && p.label == y).collect();
            cell.iter().map(|p| p.prediction as f64).sum::<f64>() / cell.len() as f64
        };
        let want = (rate(0, 0) - rate(1, 0)).abs()
            + ((1.0 - rate(0, 1)) - (1.0 - rate(1, 1))).abs();
        assert!((delta_eo(&preds).unwrap() - want).abs() < 1e-12);
        let want_eopp = (rate(0, 0) - rate(1, 0)).abs();
        assert!((delta_eopp(&preds).unwrap() - want_eopp).abs() < 1e-12);
    }

    #[test]
    fn delta_eo_names_empty_cell() {
        let preds = vec![rec(0, 0, 0), rec(1, 0, 1), rec(1, 1, 0)];
        match delta_eo(&preds).unwrap_err() {
            Error::MetricUndefined { cell } => assert_eq!(cell, "a=1,y=1"),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn delta_eopp_never_exceeds_delta_eo() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let preds: Vec<_> = (0..40)
                .map(|_| {
                    rec(
                        rng.random_range(0..2) as u8,
                        rng.random_range(0..2) as u8,
                        rng.random_range(0..2) as u8,
                    )
                })
                .collect();
            match (delta_eopp(&preds), delta_eo(&preds)) {
                (Ok(eopp), Ok(eo)) => assert!(eopp <= eo + 1e-15),
                // A starved cell invalidates one or both metrics; skip.
                _ => continue,
            }
        }
    }

    #[test]
    fn dp_bounded_by_statistical_distance_on_small_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let k = rng.random_range(2..=12);
            let pair = random_pair(&mut rng, k);
            let (tv, _) = statistical_distance(&pair).unwrap();
            let g: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
            // Delta_DP of a deterministic g on the pair is its discrepancy.
            let ddp = test_discrepancy(&pair, &g).unwrap();
            assert!(ddp <= tv + 1e-12);
        }
    }

    #[test]
    fn mmd_identical_sets_below_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mat::from_rows(
            &(0..30)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect::<Vec<_>>(),
        );
        let v = mmd_rbf(&m, &m, 1.0).unwrap();
        // Unbiased estimator: on the same set the value is <= 0.
        assert!(v < 1e-9, "mmd {}", v);
    }

    #[test]
    fn mmd_far_clouds_approach_twice_within_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.random_range(-0.5..0.5)).collect())
            .collect();
        let far: Vec<Vec<f64>> = base
            .iter()
            .map(|row| row.iter().map(|v| v + 1000.0).collect())
            .collect();
        let m0 = Mat::from_rows(&base);
        let m1 = Mat::from_rows(&far);
        let v = mmd_rbf(&m0, &m1, 1.0).unwrap();
        // Cross terms vanish; both within-group means are equal by construction.
        let mut within = 0.0;
        let m = base.len();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let sq: f64 = base[i]
                        .iter()
                        .zip(base[j].iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    within += (-sq / 2.0).exp();
                }
            }
        }
        let kbar = within / (m * (m - 1)) as f64;
        assert!((v - 2.0 * kbar).abs() < 1e-9, "{} vs {}", v, 2.0 * kbar);
    }

    #[test]
    fn mmd_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        };
        let r0 = rows(50, &mut rng);
        let r1 = rows(50, &mut rng);
        let got = mmd_rbf(&Mat::from_rows(&r0), &Mat::from_rows(&r1), 1.3).unwrap();

        // Naive double-sum oracle.
        let k = |u: &[f64], v: &[f64]| {
            let sq: f64 = u.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (-sq / (2.0 * 1.3 * 1.3)).exp()
        };
        let m = r0.len() as f64;
        let n = r1.len() as f64;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut sc = 0.0;
        for i in 0..r0.len() {
            for j in 0..r0.len() {
                if i != j {
                    s0 += k(&r0[i], &r0[j]);
                }
            }
        }
        for i in 0..r1.len() {
            for j in 0..r1.len() {
                if i != j {
                    s1 += k(&r1[i], &r1[j]);
                }
            }
        }
        for i in 0..r0.len() {
            for j in 0..r1.len() {
                sc += k(&r0[i], &r1[j]);
            }
        }
        let want = s0 / (m * (m - 1.0)) + s1 / (n * (n - 1.0)) - 2.0 * sc / (m * n);
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn mmd_symmetric_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let other: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let a = Mat::from_rows(&rows);
        let b = Mat::from_rows(&other);
        let ab = mmd_rbf(&a, &b, 1.0).unwrap();
        let ba = mmd_rbf(&b, &a, 1.0).unwrap();
        assert!((ab - ba).abs() < 1e-14);
        let mut rev = rows.clone();
        rev.reverse();
        let ar = Mat::from_rows(&rev);
        assert!((mmd_rbf(&ar, &b, 1.0).unwrap() - ab).abs() < 1e-14);
    }

    #[test]
    fn mmd_rejects_single_row_side() {
        let a = Mat::from_rows(&[vec![0.0, 0.0]]);
        let b = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert!(mmd_rbf(&a, &b, 1.0).is_err());
    }

    #[test]
    fn adv_probe_reads_group_from_broadcast_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a: Vec<u8> = (0..300).map(|_| rng.random_range(0..2) as u8).collect();
        let reps = Mat::from_rows(
            &a.iter()
                .map(|&v| vec![v as f64, rng.random_range(-1.0..1.0)])
                .collect::<Vec<_>>(),
        );
        let cfg = ProbeConfig {
            max_epochs: 400,
            learning_rate: 0.01,
            ..ProbeConfig::default()
        };
        let out = adversarial_accuracy_probe(&reps, &a, &cfg, 0.7, 1).unwrap();
        assert!(!out.degenerate);
        assert!(out.accuracy > 0.99, "accuracy {}", out.accuracy);
    }

    #[test]
    fn adv_probe_degenerate_group_returns_majority_with_flag() {
        let reps = Mat::zeros(10, 2);
        let a = vec![0u8; 10];
        let out = adversarial_accuracy_probe(&reps, &a, &ProbeConfig::default(), 0.7, 1).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.accuracy, 1.0);
    }

    #[test]
    fn report_serializes_with_all_six_keys() {
        let r = FairnessReport {
            accuracy: 0.8,
            delta_dp: 0.1,
            delta_eo: 0.2,
            delta_eopp: 0.05,
            mmd: 1e-4,
            adv_acc: 0.75,
        };
        let json = r.to_json();
        for key in ["accuracy", "delta_dp", "delta_eo", "delta_eopp", "mmd", "adv_acc"] {
            assert!(json.contains(key), "missing {}", key);
        }
    }
}
