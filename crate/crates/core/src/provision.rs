//! Upper-bound reference signals: the hypothetical optimally regulated
//! demand a selection is measured against.
//!
//! Both bounds reshape the incentive signal into demand space. UB1 pins the
//! mean of the baseline demand onto the normalized reflection of the prices;
//! UB2 additionally matches the baseline volatility by z-scoring the
//! reflection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    mean, normalize_reflection, population_std, reflect, SignalKind, TransactiveSignal,
};

/// Which demand constraints the bound satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperBoundKind {
    /// Mean-constrained: μ(UB1) = μ(iTFS).
    Ub1,
    /// Mean- and volatility-constrained: μ(UB2) = μ(iTFS), σ(UB2) = σ(iTFS).
    Ub2,
}

impl UpperBoundKind {
    pub fn name(self) -> &'static str {
        match self {
            UpperBoundKind::Ub1 => "ub1",
            UpperBoundKind::Ub2 => "ub2",
        }
    }
}

impl std::fmt::Display for UpperBoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An upper-bound signal together with its constraint diagnostics.
///
/// Residuals are checked against 1e-9 on every construction; negative values
/// (possible for UB2 when σ(iTFS)/σ(TIS) is large) are surfaced through
/// `min_value` rather than clipped, since clipping would break the proven
/// mean/volatility constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub kind: UpperBoundKind,
    pub signal: TransactiveSignal,
    /// |mean(UB) − mean(iTFS)| / mean(iTFS).
    pub mean_residual: f64,
    /// |σ(UB) − σ(iTFS)| / σ(iTFS); UB2 only.
    pub volatility_residual: Option<f64>,
    /// Smallest value in the bound; negative values must be reported.
    pub min_value: f64,
}

impl UpperBound {
    pub fn values(&self) -> &[f64] {
        self.signal.values()
    }

    pub fn has_negative_values(&self) -> bool {
        self.min_value < 0.0
    }
}

const RESIDUAL_TOLERANCE: f64 = 1e-9;

fn check_inputs(tis: &TransactiveSignal, itfs: &TransactiveSignal) -> Result<()> {
    if tis.kind() != SignalKind::Tis {
        return Err(Error::KindMismatch {
            expected: "TIS",
            found: tis.kind().name(),
        });
    }
    if itfs.kind() != SignalKind::Itfs {
        return Err(Error::KindMismatch {
            expected: "iTFS",
            found: itfs.kind().name(),
        });
    }
    if tis.len() != itfs.len() {
        return Err(Error::LengthMismatch {
            expected: tis.len(),
            found: itfs.len(),
        });
    }
    Ok(())
}

/// Relative residual, falling back to the absolute one when the reference
/// is zero (a constant baseline has zero volatility).
fn residual(actual: f64, reference: f64) -> f64 {
    let diff = (actual - reference).abs();
    if reference != 0.0 {
        diff / reference.abs()
    } else {
        diff
    }
}

fn package(
    kind: UpperBoundKind,
    values: Vec<f64>,
    itfs_mean: f64,
    itfs_std: Option<f64>,
) -> Result<UpperBound> {
    let mean_residual = residual(mean(&values), itfs_mean);
    if mean_residual >= RESIDUAL_TOLERANCE {
        return Err(Error::ConstraintViolation {
            constraint: "upper-bound mean",
            residual: mean_residual,
        });
    }
    let volatility_residual = match itfs_std {
        Some(sd) => {
            let r = residual(population_std(&values), sd);
            if r >= RESIDUAL_TOLERANCE {
                return Err(Error::ConstraintViolation {
                    constraint: "upper-bound volatility",
                    residual: r,
                });
            }
            Some(r)
        }
        None => None,
    };
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UpperBound {
        kind,
        signal: TransactiveSignal::new_unchecked(SignalKind::Ub, values),
        mean_residual,
        volatility_residual,
        min_value,
    })
}

/// Per-step basis of UB1: the normalized reflection divided by the incentive
/// mean. UB1 for a baseline is then `mean(itfs) · basis_t`.
///
/// Splitting the bound this way lets the engine score many candidate
/// baselines against one precomputed basis in O(T) without re-normalizing.
pub(crate) fn ub1_basis(tis: &TransactiveSignal) -> Result<Vec<f64>> {
    let normalized = normalize_reflection(&reflect(tis)?)?;
    let tis_mean = tis.mean();
    Ok(normalized.values().iter().map(|&n| n / tis_mean).collect())
}

/// Per-step z-scores of the reflected incentive signal: (ρ_t − μ)/σ.
/// UB2 for a baseline is `σ(itfs) · z_t + mean(itfs)`.
pub(crate) fn ub2_zscores(tis: &TransactiveSignal) -> Result<Vec<f64>> {
    let tis_std = population_std(tis.values());
    if tis_std == 0.0 {
        return Err(Error::DegenerateIncentive);
    }
    let tis_mean = mean(tis.values());
    // ρ_t − μ = (2μ − v_t) − μ = μ − v_t.
    Ok(tis
        .values()
        .iter()
        .map(|&v| (tis_mean - v) / tis_std)
        .collect())
}

/// Mean-constrained upper bound: out_t = (mean(itfs)/mean(tis)) · N_t where
/// N is the normalized reflection of the incentive signal.
pub fn upper_bound_1(tis: &TransactiveSignal, itfs: &TransactiveSignal) -> Result<UpperBound> {
    check_inputs(tis, itfs)?;
    let basis = ub1_basis(tis)?;
    let itfs_mean = itfs.mean();
    let values = basis.iter().map(|&b| itfs_mean * b).collect();
    package(UpperBoundKind::Ub1, values, itfs_mean, None)
}

/// Mean- and volatility-constrained upper bound:
/// out_t = σ(itfs)·(ρ_t − mean(tis))/σ(tis) + mean(itfs).
pub fn upper_bound_2(tis: &TransactiveSignal, itfs: &TransactiveSignal) -> Result<UpperBound> {
    check_inputs(tis, itfs)?;
    let zscores = ub2_zscores(tis)?;
    let itfs_mean = itfs.mean();
    let itfs_std = population_std(itfs.values());
    let values = zscores.iter().map(|&z| itfs_std * z + itfs_mean).collect();
    package(UpperBoundKind::Ub2, values, itfs_mean, Some(itfs_std))
}

/// Dispatch over the bound kind.
pub fn upper_bound(
    kind: UpperBoundKind,
    tis: &TransactiveSignal,
    itfs: &TransactiveSignal,
) -> Result<UpperBound> {
    match kind {
        UpperBoundKind::Ub1 => upper_bound_1(tis, itfs),
        UpperBoundKind::Ub2 => upper_bound_2(tis, itfs),
    }
}
