//! Brute-force verification of the adversarial upper bounds on small
//! discrete representation spaces, plus the exact reproduction of the
//! unbalanced-data toy example that separates the cross-entropy adversary
//! from the group-normalized l1 one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{statistical_distance, DiscreteDistributionPair};

/// Largest support the demographic-parity enumeration accepts.
pub const DP_SUPPORT_LIMIT: usize = 20;
/// Largest support the equalized-odds enumeration accepts (the adversary
/// space has `2^(2k)` members).
pub const EO_SUPPORT_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq)]
enum ScenarioTable {
    /// `p(z, a)`, indexed `[z][a]`.
    Za(Vec<[f64; 2]>),
    /// `p(z, a, y)`, indexed `[z][a][y]`.
    Zay(Vec<[[f64; 2]; 2]>),
}

/// A finite representation space with a joint distribution over `(Z, A)`
/// or `(Z, A, Y)` and a binary classifier on the support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScenario {
    table: ScenarioTable,
    pub classifier: Vec<bool>,
}

impl DiscreteScenario {
    pub fn new_za(p: Vec<[f64; 2]>, classifier: Vec<bool>) -> Result<Self> {
        if p.is_empty() || classifier.len() != p.len() {
            return Err(Error::RejectedInput(
                "scenario needs a nonempty support with a total classifier".into(),
            ));
        }
        let total: f64 = p.iter().map(|c| c[0] + c[1]).sum();
        if p.iter().any(|c| c[0] < 0.0 || c[1] < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::RejectedInput(
                "joint table must be nonnegative and sum to 1".into(),
            ));
        }
        for a in 0..2 {
            let mass: f64 = p.iter().map(|c| c[a]).sum();
            if mass <= 0.0 {
                return Err(Error::RejectedInput(format!(
                    "conditional Z_{{A={}}} has zero mass",
                    a
                )));
            }
        }
        Ok(DiscreteScenario {
            table: ScenarioTable::Za(p),
            classifier,
        })
    }

    pub fn new_zay(p: Vec<[[f64; 2]; 2]>, classifier: Vec<bool>) -> Result<Self> {
        if p.is_empty() || classifier.len() != p.len() {
            return Err(Error::RejectedInput(
                "scenario needs a nonempty support with a total classifier".into(),
            ));
        }
        let total: f64 = p
            .iter()
            .map(|c| c[0][0] + c[0][1] + c[1][0] + c[1][1])
            .sum();
        if (total - 1.0).abs() > 1e-12
            || p.iter().flatten().flatten().any(|&v| v < 0.0)
        {
            return Err(Error::RejectedInput(
                "joint table must be nonnegative and sum to 1".into(),
            ));
        }
        // Zero-mass group-label cells are rejected rather than patched.
        for a in 0..2 {
            for y in 0..2 {
                let mass: f64 = p.iter().map(|c| c[a][y]).sum();
                if mass <= 0.0 {
                    return Err(Error::RejectedInput(format!(
                        "conditional Z_{{A={}}}^{{Y={}}} has zero mass",
                        a, y
                    )));
                }
            }
        }
        Ok(DiscreteScenario {
            table: ScenarioTable::Zay(p),
            classifier,
        })
    }

    pub fn support(&self) -> usize {
        match &self.table {
            ScenarioTable::Za(p) => p.len(),
            ScenarioTable::Zay(p) => p.len(),
        }
    }

    pub fn has_labels(&self) -> bool {
        matches!(self.table, ScenarioTable::Zay(_))
    }

    /// Conditional `p(z | A = a)`.
    pub fn z_given_a(&self, a: usize) -> Vec<f64> {
        match &self.table {
            ScenarioTable::Za(p) => {
                let mass: f64 = p.iter().map(|c| c[a]).sum();
                p.iter().map(|c| c[a] / mass).collect()
            }
            ScenarioTable::Zay(p) => {
                let mass: f64 = p.iter().map(|c| c[a][0] + c[a][1]).sum();
                p.iter().map(|c| (c[a][0] + c[a][1]) / mass).collect()
            }
        }
    }

    /// Conditional `p(z | A = a, Y = y)`.
    pub fn z_given_ay(&self, a: usize, y: usize) -> Result<Vec<f64>> {
        match &self.table {
            ScenarioTable::Za(_) => Err(Error::RejectedInput(
                "scenario carries no labels".into(),
            )),
            ScenarioTable::Zay(p) => {
                let mass: f64 = p.iter().map(|c| c[a][y]).sum();
                Ok(p.iter().map(|c| c[a][y] / mass).collect())
            }
        }
    }

    /// Same scenario with the support atoms relabeled by `perm`
    /// (`new index = perm[old index]`).
    pub fn permuted(&self, perm: &[usize]) -> DiscreteScenario {
        let k = self.support();
        assert_eq!(perm.len(), k);
        let mut classifier = vec![false; k];
        for z in 0..k {
            classifier[perm[z]] = self.classifier[z];
        }
        let table = match &self.table {
            ScenarioTable::Za(p) => {
                let mut q = vec![[0.0; 2]; k];
                for z in 0..k {
                    q[perm[z]] = p[z];
                }
                ScenarioTable::Za(q)
            }
            ScenarioTable::Zay(p) => {
                let mut q = vec![[[0.0; 2]; 2]; k];
                for z in 0..k {
                    q[perm[z]] = p[z];
                }
                ScenarioTable::Zay(q)
            }
        };
        DiscreteScenario {
            table,
            classifier,
        }
    }

    fn pair(&self) -> Result<DiscreteDistributionPair> {
        DiscreteDistributionPair::new(self.z_given_a(0), self.z_given_a(1))
    }
}

fn expect(dist: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    dist.iter().enumerate().map(|(z, &p)| p * f(z)).sum()
}

/// Demographic-parity adversary value
/// `E_{Z0}[1 - h] + E_{Z1}[h] - 1` for a binary `h`.
fn dp_value(z0: &[f64], z1: &[f64], h: impl Fn(usize) -> bool) -> f64 {
    expect(z0, |z| f64::from(!h(z))) + expect(z1, |z| f64::from(h(z))) - 1.0
}

/// Enumerate all `2^k` binary adversaries and return an argmax along with
/// the optimal objective value, which must equal the statistical distance
/// between the group conditionals.
pub fn optimal_adversary_dp(scenario: &DiscreteScenario) -> Result<(Vec<bool>, f64)> {
    let k = scenario.support();
    if k > DP_SUPPORT_LIMIT {
        return Err(Error::RejectedInput(format!(
            "support {} exceeds the enumeration limit {}",
            k, DP_SUPPORT_LIMIT
        )));
    }
    let z0 = scenario.z_given_a(0);
    let z1 = scenario.z_given_a(1);
    let mut best = f64::NEG_INFINITY;
    let mut best_mask = 0u64;
    for mask in 0..(1u64 << k) {
        let v = dp_value(&z0, &z1, |z| mask >> z & 1 == 1);
        if v > best {
            best = v;
            best_mask = mask;
        }
    }
    // Cross-check against the independently computed statistical distance.
    let (tv, _) = statistical_distance(&scenario.pair()?)?;
    if (best - tv).abs() > 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "optimal adversary value {} != statistical distance {}",
            best, tv
        )));
    }
    Ok(((0..k).map(|z| best_mask >> z & 1 == 1).collect(), best))
}

/// Proof record for the demographic-parity bound.
#[derive(Debug, Clone, Serialize)]
pub struct DpBoundRecord {
    pub delta_dp: f64,
    pub optimal_value: f64,
    /// Value achieved by guessing the opposite of the classifier (or the
    /// classifier itself, depending on the sign branch).
    pub constructed_value: f64,
}

/// Check `L*_dp >= Delta_DP(g)` and that the constructed adversary
/// (`1 - g` or `g`, depending on which group the classifier favors)
/// achieves exactly `Delta_DP(g)`.
pub fn verify_dp_bound(scenario: &DiscreteScenario) -> Result<DpBoundRecord> {
    let z0 = scenario.z_given_a(0);
    let z1 = scenario.z_given_a(1);
    let g = &scenario.classifier;
    let e0 = expect(&z0, |z| f64::from(g[z]));
    let e1 = expect(&z1, |z| f64::from(g[z]));
    let delta_dp = (e0 - e1).abs();

    let (_, optimal_value) = optimal_adversary_dp(scenario)?;
    // Sign branch: favoring group 0 means guessing the opposite of g.
    let flip = e0 >= e1;
    let constructed_value = dp_value(&z0, &z1, |z| g[z] != flip);

    if (constructed_value - delta_dp).abs() > 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "constructed adversary achieves {}, expected Delta_DP {}",
            constructed_value, delta_dp
        )));
    }
    if optimal_value < delta_dp - 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "optimal value {} is below Delta_DP {}",
            optimal_value, delta_dp
        )));
    }
    Ok(DpBoundRecord {
        delta_dp,
        optimal_value,
        constructed_value,
    })
}

/// Equalized-odds adversary value for a label-conditioned binary `h`.
fn eo_value(
    cells: &[Vec<f64>; 4], // [z00, z10, z01, z11]
    h: impl Fn(usize, usize) -> bool,
) -> f64 {
    expect(&cells[0], |z| f64::from(!h(z, 0)))
        + expect(&cells[1], |z| f64::from(h(z, 0)))
        + expect(&cells[2], |z| f64::from(!h(z, 1)))
        + expect(&cells[3], |z| f64::from(h(z, 1)))
        - 2.0
}

#[derive(Debug, Clone, Serialize)]
pub struct EoBoundRecord {
    pub delta_eo: f64,
    pub optimal_value: f64,
    /// Value achieved by the label-flip construction, after handling all
    /// four sign cases of the two absolute-value terms.
    pub constructed_value: f64,
}

/// Check `L*_eo >= Delta_EO(g)` by enumerating all `2^(2k)` label-
/// conditioned adversaries, and that the label-flip construction achieves
/// `Delta_EO(g)` exactly.
pub fn verify_eo_bound(scenario: &DiscreteScenario) -> Result<EoBoundRecord> {
    let k = scenario.support();
    if k > EO_SUPPORT_LIMIT {
        return Err(Error::RejectedInput(format!(
            "support {} exceeds the enumeration limit {}",
            k, EO_SUPPORT_LIMIT
        )));
    }
    let cells = [
        scenario.z_given_ay(0, 0)?,
        scenario.z_given_ay(1, 0)?,
        scenario.z_given_ay(0, 1)?,
        scenario.z_given_ay(1, 1)?,
    ];
    let g = &scenario.classifier;
    let t0 = expect(&cells[0], |z| f64::from(g[z])) - expect(&cells[1], |z| f64::from(g[z]));
    let t1 = expect(&cells[2], |z| f64::from(!g[z])) - expect(&cells[3], |z| f64::from(!g[z]));
    let delta_eo = t0.abs() + t1.abs();

    let mut optimal_value = f64::NEG_INFINITY;
    for mask in 0..(1u64 << (2 * k)) {
        // low k bits: h(z, 0); high k bits: h(z, 1)
        let v = eo_value(&cells, |z, y| mask >> (z + y * k) & 1 == 1);
        if v > optimal_value {
            optimal_value = v;
        }
    }

    // Label-flip construction with explicit sign branches: on y=0 rows the
    // adversary guesses against g when group 0 has the higher rate, and on
    // y=1 rows it follows g when group 0 has the higher miss rate.
    let flip0 = t0 >= 0.0;
    let flip1 = t1 >= 0.0;
    let constructed_value = eo_value(&cells, |z, y| {
        if y == 0 {
            g[z] != flip0
        } else {
            g[z] == flip1
        }
    });

    if (constructed_value - delta_eo).abs() > 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "constructed adversary achieves {}, expected Delta_EO {}",
            constructed_value, delta_eo
        )));
    }
    if optimal_value < delta_eo - 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "optimal value {} is below Delta_EO {}",
            optimal_value, delta_eo
        )));
    }
    Ok(EoBoundRecord {
        delta_eo,
        optimal_value,
        constructed_value,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EoppBoundRecord {
    pub delta_eopp: f64,
    pub optimal_value: f64,
    pub constructed_value: f64,
}

/// Equal-opportunity variant: only the y = 0 cells enter.
pub fn verify_eopp_bound(scenario: &DiscreteScenario) -> Result<EoppBoundRecord> {
    let k = scenario.support();
    if k > DP_SUPPORT_LIMIT {
        return Err(Error::RejectedInput(format!(
            "support {} exceeds the enumeration limit {}",
            k, DP_SUPPORT_LIMIT
        )));
    }
    let z00 = scenario.z_given_ay(0, 0)?;
    let z10 = scenario.z_given_ay(1, 0)?;
    let g = &scenario.classifier;
    let t0 = expect(&z00, |z| f64::from(g[z])) - expect(&z10, |z| f64::from(g[z]));
    let delta_eopp = t0.abs();

    let mut optimal_value = f64::NEG_INFINITY;
    for mask in 0..(1u64 << k) {
        let v = dp_value(&z00, &z10, |z| mask >> z & 1 == 1);
        if v > optimal_value {
            optimal_value = v;
        }
    }
    let flip = t0 >= 0.0;
    let constructed_value = dp_value(&z00, &z10, |z| g[z] != flip);

    if (constructed_value - delta_eopp).abs() > 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "constructed adversary achieves {}, expected Delta_EOpp {}",
            constructed_value, delta_eopp
        )));
    }
    if optimal_value < delta_eopp - 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "optimal value {} is below Delta_EOpp {}",
            optimal_value, delta_eopp
        )));
    }
    Ok(EoppBoundRecord {
        delta_eopp,
        optimal_value,
        constructed_value,
    })
}

/// Record of the two-point unbalanced toy comparison between the
/// cross-entropy adversary and the group-normalized l1 adversary.
#[derive(Debug, Clone, Serialize)]
pub struct AppendixARecord {
    /// Cross-entropy-optimal soft adversary, i.e. the posterior
    /// `p(A=1 | z)` per atom.
    pub ce_h: [f64; 2],
    /// Expected log-likelihood `E[a ln h + (1-a) ln(1-h)]` at the optimum
    /// (equals the negative conditional entropy of A given Z).
    pub ce_log_likelihood: f64,
    /// Log of the thresholded CE adversary's accuracy. The thresholded
    /// posterior predicts the majority group everywhere, so its accuracy is
    /// p(A=0) = 0.95 and this value is ln 0.95, the -0.051 headline figure.
    pub ce_log_accuracy: f64,
    /// Test discrepancy of the thresholded CE adversary: exactly 0.
    pub ce_test_discrepancy: f64,
    /// The l1-optimal binary adversary per atom.
    pub l1_h: [f64; 2],
    /// Its group-normalized objective value: 0.92/0.95 + 0.02/0.05 - 1.
    pub l1_objective: f64,
}

/// The fixed joint `p(Z, A)` of the toy example:
/// p(0,0)=0.92, p(0,1)=0.03, p(1,0)=0.03, p(1,1)=0.02.
pub fn appendix_a_scenario() -> DiscreteScenario {
    DiscreteScenario::new_za(vec![[0.92, 0.03], [0.03, 0.02]], vec![false, true])
        .expect("fixed scenario is valid")
}

/// Reproduce the toy comparison exactly: the CE-optimal adversary is the
/// posterior, classifies every atom as the majority group (discrepancy 0),
/// while the l1-optimal adversary attains the statistical distance.
pub fn reproduce_appendix_a() -> Result<AppendixARecord> {
    let scenario = appendix_a_scenario();
    let joint: [[f64; 2]; 2] = [[0.92, 0.03], [0.03, 0.02]]; // [z][a]

    // CE optimum: h*(z) = p(A=1 | z).
    let ce_h = [
        joint[0][1] / (joint[0][0] + joint[0][1]),
        joint[1][1] / (joint[1][0] + joint[1][1]),
    ];
    let mut ce_log_likelihood = 0.0;
    let mut threshold_accuracy = 0.0;
    for z in 0..2 {
        for a in 0..2 {
            let p = joint[z][a];
            let h = ce_h[z];
            ce_log_likelihood += p * if a == 1 { h.ln() } else { (1.0 - h).ln() };
            let hard = u8::from(h >= 0.5);
            if hard as usize == a {
                threshold_accuracy += p;
            }
        }
    }
    // Closed-form cross-check: -H(A|Z).
    let hb = |p: f64| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
    let pz = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let neg_cond_entropy = -(pz[0] * hb(ce_h[0]) + pz[1] * hb(ce_h[1]));
    if (ce_log_likelihood - neg_cond_entropy).abs() > 1e-12 {
        return Err(Error::TheoremViolation(format!(
            "CE optimum {} disagrees with -H(A|Z) = {}",
            ce_log_likelihood, neg_cond_entropy
        )));
    }

    // Thresholded CE adversary: discrepancy between the group conditionals.
    let z0 = scenario.z_given_a(0);
    let z1 = scenario.z_given_a(1);
    let ce_test_discrepancy = (expect(&z0, |z| f64::from(ce_h[z] >= 0.5))
        - expect(&z1, |z| f64::from(ce_h[z] >= 0.5)))
    .abs();

    // l1 optimum via full enumeration.
    let (h_star, l1_objective) = optimal_adversary_dp(&scenario)?;
    let l1_h = [f64::from(h_star[0]), f64::from(h_star[1])];

    Ok(AppendixARecord {
        ce_h,
        ce_log_likelihood,
        ce_log_accuracy: threshold_accuracy.ln(),
        ce_test_discrepancy,
        l1_h,
        l1_objective,
    })
}

/// Monte Carlo check of the randomized-classifier relaxation.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxationRecord {
    /// Enumerated optimal adversary value (the statistical distance).
    pub exact_optimal_value: f64,
    /// Monte Carlo estimate of the optimal adversary's expected value.
    pub mc_optimal_value: f64,
    /// Monte Carlo estimate of the supplied soft adversary's expected value.
    pub mc_soft_adversary_value: f64,
    /// Monte Carlo estimate of the randomized classifier's expected gap.
    pub mc_delta_g: f64,
    pub mc_standard_error: f64,
    /// `exact_optimal_value >= mc_delta_g - 3 * mc_standard_error`.
    pub holds: bool,
}

fn sample_atom(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (z, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return z;
        }
    }
    dist.len() - 1
}

/// Sample Bernoulli realizations of the soft classifier and of the
/// adversaries, estimating `E[Delta_DP(g-bar)]` and `E[L(h-bar)]` with a
/// per-evaluation randomization; check the relaxed bound within Monte
/// Carlo error.
pub fn verify_randomized_relaxation(
    scenario: &DiscreteScenario,
    soft_g: &[f64],
    soft_h: &[f64],
    samples: usize,
    seed: u64,
) -> Result<RelaxationRecord> {
    let k = scenario.support();
    if soft_g.len() != k || soft_h.len() != k {
        return Err(Error::RejectedInput(
            "soft functions must be total on the support".into(),
        ));
    }
    if soft_g
        .iter()
        .chain(soft_h.iter())
        .any(|&p| !(0.0..=1.0).contains(&p))
    {
        return Err(Error::RejectedInput(
            "soft functions must map into [0, 1]".into(),
        ));
    }
    if samples < 100 {
        return Err(Error::RejectedInput("need at least 100 samples".into()));
    }
    let z0 = scenario.z_given_a(0);
    let z1 = scenario.z_given_a(1);
    let (h_star, exact_optimal_value) = optimal_adversary_dp(scenario)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g0_sum = 0.0;
    let mut g1_sum = 0.0;
    let mut hs0_sum = 0.0; // 1 - h*(z), z ~ Z0
    let mut hs1_sum = 0.0; // h*(z), z ~ Z1
    let mut hh0_sum = 0.0; // 1 - h-bar(z), z ~ Z0
    let mut hh1_sum = 0.0; // h-bar(z), z ~ Z1
    for _ in 0..samples {
        let za = sample_atom(&z0, &mut rng);
        let zb = sample_atom(&z1, &mut rng);
        g0_sum += f64::from(rng.random_bool(soft_g[za]));
        g1_sum += f64::from(rng.random_bool(soft_g[zb]));
        hs0_sum += f64::from(!h_star[za]);
        hs1_sum += f64::from(h_star[zb]);
        hh0_sum += f64::from(!rng.random_bool(soft_h[za]));
        hh1_sum += f64::from(rng.random_bool(soft_h[zb]));
    }
    let n = samples as f64;
    let (m0, m1) = (g0_sum / n, g1_sum / n);
    let mc_delta_g = (m0 - m1).abs();
    let se = ((m0 * (1.0 - m0) + m1 * (1.0 - m1)) / n).sqrt();
    let mc_optimal_value = hs0_sum / n + hs1_sum / n - 1.0;
    let mc_soft_adversary_value = hh0_sum / n + hh1_sum / n - 1.0;
    let holds = exact_optimal_value >= mc_delta_g - 3.0 * se;
    if !holds {
        return Err(Error::TheoremViolation(format!(
            "relaxed bound failed: optimum {} < E[Delta] {} - 3se {}",
            exact_optimal_value, mc_delta_g, se
        )));
    }
    Ok(RelaxationRecord {
        exact_optimal_value,
        mc_optimal_value,
        mc_soft_adversary_value,
        mc_delta_g,
        mc_standard_error: se,
        holds,
    })
}

// ---------------------------------------------------------------------------
// Random scenario generators for the verification suites.
// ---------------------------------------------------------------------------

fn normalize_exact(masses: &mut [f64]) {
    let sum: f64 = masses.iter().sum();
    for m in masses.iter_mut() {
        *m /= sum;
    }
    let resid: f64 = 1.0 - masses.iter().sum::<f64>();
    masses[0] += resid;
}

/// Random unlabeled scenario with support in `[2, max_support]`.
pub fn random_dp_scenario(rng: &mut ChaCha8Rng, max_support: usize) -> DiscreteScenario {
    let k = rng.random_range(2..=max_support);
    let mut masses: Vec<f64> = (0..2 * k).map(|_| rng.random_range(0.01..1.0)).collect();
    normalize_exact(&mut masses);
    let table: Vec<[f64; 2]> = (0..k).map(|z| [masses[2 * z], masses[2 * z + 1]]).collect();
    let classifier: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
    DiscreteScenario::new_za(table, classifier).expect("generated scenario is valid")
}

/// Random labeled scenario with support in `[2, max_support]`.
pub fn random_eo_scenario(rng: &mut ChaCha8Rng, max_support: usize) -> DiscreteScenario {
    let k = rng.random_range(2..=max_support);
    let mut masses: Vec<f64> = (0..4 * k).map(|_| rng.random_range(0.01..1.0)).collect();
    normalize_exact(&mut masses);
    let table: Vec<[[f64; 2]; 2]> = (0..k)
        .map(|z| {
            [
                [masses[4 * z], masses[4 * z + 1]],
                [masses[4 * z + 2], masses[4 * z + 3]],
            ]
        })
        .collect();
    let classifier: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
    DiscreteScenario::new_zay(table, classifier).expect("generated scenario is valid")
}
