//! Adversary objective functions.
//!
//! The group-normalized l1 objectives average `|h - a|` within each
//! sensitive group (or group-label cell) before summing, which makes them
//! invariant to group imbalance and, for binary `h`, equal to a test
//! discrepancy. The cross-entropy baseline deliberately keeps the plain
//! whole-batch expectation and therefore inherits the imbalance pathology.

use serde::{Deserialize, Serialize};

use crate::data::partition_rows;
use crate::error::{Error, Result};
use crate::nn::CE_CLAMP;

/// Which adversarial objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvObjectiveKind {
    Dp,
    Eo,
    Eopp,
    #[serde(rename = "ce")]
    CeBaseline,
}

impl AdvObjectiveKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dp" => AdvObjectiveKind::Dp,
            "eo" => AdvObjectiveKind::Eo,
            "eopp" => AdvObjectiveKind::Eopp,
            "ce" => AdvObjectiveKind::CeBaseline,
            other => {
                return Err(Error::RejectedInput(format!(
                    "unknown adversarial objective {:?} (expected dp|eo|eopp|ce)",
                    other
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdvObjectiveKind::Dp => "dp",
            AdvObjectiveKind::Eo => "eo",
            AdvObjectiveKind::Eopp => "eopp",
            AdvObjectiveKind::CeBaseline => "ce",
        }
    }

    /// Does the adversary receive the label as an extra input?
    pub fn uses_label(self) -> bool {
        matches!(self, AdvObjectiveKind::Eo | AdvObjectiveKind::Eopp)
    }
}

/// Per-cell mean of `|h - a|` with the cell sizes that normalized it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAverages {
    pub cells: Vec<CellAverage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellAverage {
    /// Cell name, e.g. `a=0` or `a=1,y=0`.
    pub cell: String,
    pub mean_abs_error: f64,
    pub count: usize,
}

fn cell_mean(h: &[f64], a: &[u8], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| (h[i] - a[i] as f64).abs()).sum::<f64>() / idx.len() as f64
}

fn check_lengths(h: &[f64], a: &[u8], y: Option<&[u8]>) -> Result<()> {
    if h.is_empty() || h.len() != a.len() || y.map_or(false, |y| y.len() != h.len()) {
        return Err(Error::RejectedInput(
            "objective inputs must be equal-length and nonempty".into(),
        ));
    }
    Ok(())
}

/// Group-normalized cell averages for the cells the objective needs.
pub fn cell_averages(
    kind: AdvObjectiveKind,
    h: &[f64],
    a: &[u8],
    y: Option<&[u8]>,
) -> Result<CellAverages> {
    check_lengths(h, a, y)?;
    let zeros;
    let y = match y {
        Some(y) => y,
        None => {
            zeros = vec![0u8; a.len()];
            &zeros
        }
    };
    let cells = partition_rows(a, y);
    let named: Vec<(&str, &Vec<usize>)> = match kind {
        AdvObjectiveKind::Dp | AdvObjectiveKind::CeBaseline => {
            vec![("a=0", &cells.d0), ("a=1", &cells.d1)]
        }
        AdvObjectiveKind::Eo => vec![
            ("a=0,y=0", &cells.d00),
            ("a=1,y=0", &cells.d10),
            ("a=0,y=1", &cells.d01),
            ("a=1,y=1", &cells.d11),
        ],
        AdvObjectiveKind::Eopp => vec![("a=0,y=0", &cells.d00), ("a=1,y=0", &cells.d10)],
    };
    let mut out = Vec::with_capacity(named.len());
    for (name, idx) in named {
        if idx.is_empty() {
            return Err(Error::GroupStarvation { cell: name.into() });
        }
        out.push(CellAverage {
            cell: name.into(),
            mean_abs_error: cell_mean(h, a, idx),
            count: idx.len(),
        });
    }
    Ok(CellAverages { cells: out })
}

/// Demographic-parity adversary objective:
/// `1 - sum_i mean_{D_i} |h - a|`, in `[-1, 1]`.
pub fn adv_objective_dp(h: &[f64], a: &[u8]) -> Result<f64> {
    let avgs = cell_averages(AdvObjectiveKind::Dp, h, a, None)?;
    Ok(1.0 - avgs.cells.iter().map(|c| c.mean_abs_error).sum::<f64>())
}

/// Equalized-odds adversary objective:
/// `2 - sum_{(i,j)} mean_{D_i^j} |h - a|`, in `[-2, 2]`.
pub fn adv_objective_eo(h: &[f64], a: &[u8], y: &[u8]) -> Result<f64> {
    let avgs = cell_averages(AdvObjectiveKind::Eo, h, a, Some(y))?;
    Ok(2.0 - avgs.cells.iter().map(|c| c.mean_abs_error).sum::<f64>())
}

/// Equal-opportunity adversary objective: only the y = 0 cells contribute.
pub fn adv_objective_eopp(h: &[f64], a: &[u8], y: &[u8]) -> Result<f64> {
    let avgs = cell_averages(AdvObjectiveKind::Eopp, h, a, Some(y))?;
    Ok(1.0 - avgs.cells.iter().map(|c| c.mean_abs_error).sum::<f64>())
}

/// Cross-entropy baseline: the whole-batch expected log-likelihood
/// `E[a ln h + (1-a) ln(1-h)]`, which the adversary maximizes. No group
/// normalization, so duplicating one group's rows shifts the value.
pub fn adv_objective_ce(h: &[f64], a: &[u8]) -> Result<f64> {
    check_lengths(h, a, None)?;
    let n = h.len() as f64;
    Ok(h.iter()
        .zip(a.iter())
        .map(|(&p, &ai)| {
            let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
            if ai == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n)
}

/// Dispatch on the configured objective kind.
pub fn adv_objective(
    kind: AdvObjectiveKind,
    h: &[f64],
    a: &[u8],
    y: Option<&[u8]>,
) -> Result<f64> {
    match kind {
        AdvObjectiveKind::Dp => adv_objective_dp(h, a),
        AdvObjectiveKind::Eo => {
            let y = y.ok_or_else(|| Error::RejectedInput("eo objective needs labels".into()))?;
            adv_objective_eo(h, a, y)
        }
        AdvObjectiveKind::Eopp => {
            let y = y.ok_or_else(|| Error::RejectedInput("eopp objective needs labels".into()))?;
            adv_objective_eopp(h, a, y)
        }
        AdvObjectiveKind::CeBaseline => adv_objective_ce(h, a),
    }
}

/// Gradient of the objective with respect to each adversary output.
///
/// For the l1 objectives the gradient inside (0,1) is constant per cell:
/// `+1/|cell|` on a = 1 rows and `-1/|cell|` on a = 0 rows (rows outside
/// the needed cells get zero).
pub fn adv_objective_grad(
    kind: AdvObjectiveKind,
    h: &[f64],
    a: &[u8],
    y: Option<&[u8]>,
) -> Result<Vec<f64>> {
    check_lengths(h, a, y)?;
    let n = h.len();
    let mut grad = vec![0.0; n];
    match kind {
        AdvObjectiveKind::CeBaseline => {
            for i in 0..n {
                let p = h[i];
                if p <= CE_CLAMP || p >= 1.0 - CE_CLAMP {
                    continue;
                }
                grad[i] = if a[i] == 1 {
                    1.0 / p
                } else {
                    -1.0 / (1.0 - p)
                } / n as f64;
            }
        }
        _ => {
            let label_slice = if kind.uses_label() {
                Some(y.ok_or_else(|| {
                    Error::RejectedInput("label-conditioned objective needs labels".into())
                })?)
            } else {
                None
            };
            let avgs = cell_averages(kind, h, a, label_slice)?;
            let counts: std::collections::BTreeMap<&str, usize> = avgs
                .cells
                .iter()
                .map(|c| (c.cell.as_str(), c.count))
                .collect();
            let zeros;
            let yv = match label_slice {
                Some(y) => y,
                None => {
                    zeros = vec![0u8; n];
                    &zeros
                }
            };
            for i in 0..n {
                let name = match kind {
                    AdvObjectiveKind::Dp => {
                        if a[i] == 0 {
                            "a=0"
                        } else {
                            "a=1"
                        }
                    }
                    AdvObjectiveKind::Eo | AdvObjectiveKind::Eopp => {
                        match (a[i] == 1, yv[i] == 1) {
                            (false, false) => "a=0,y=0",
                            (true, false) => "a=1,y=0",
                            (false, true) => "a=0,y=1",
                            (true, true) => "a=1,y=1",
                        }
                    }
                    AdvObjectiveKind::CeBaseline => unreachable!(),
                };
                let Some(&count) = counts.get(name) else {
                    continue; // y=1 rows under the eopp objective
                };
                // d/dh of -|h - a| with h in (0,1): +1/|cell| when a=1.
                let sign = if a[i] == 1 { 1.0 } else { -1.0 };
                let at_kink = (h[i] - a[i] as f64).abs() == 0.0;
                grad[i] = if at_kink { 0.0 } else { sign / count as f64 };
            }
        }
    }
    Ok(grad)
}
