//! Evaluation of a regulation run: response, savings, moment errors,
//! informational diversity of plans, and cross-experiment correlations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plangen::Plan;
use crate::provision::UpperBoundKind;
use crate::signal::{compensated_sum, mean, population_std, TransactiveSignal};

/// Scores of one regulation run against one upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// How far the regulated demand moved towards the bound, in signal space.
    /// May exceed 1 when the demand overshoots the bound.
    pub response: f64,
    /// The same movement in economic terms (cost under the incentive signal).
    pub savings: f64,
    /// |1 − mean(eTFS)/mean(iTFS)|.
    pub mean_error: f64,
    /// |1 − σ(eTFS)/σ(iTFS)|.
    pub volatility_error: f64,
    /// Which bound the run was scored against.
    pub ub_kind: UpperBoundKind,
    /// Opaque provenance of the configuration that produced the run.
    pub config_tag: String,
}

/// Experimental aspect along which runs are grouped for correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aspect {
    GenerationScheme,
    SelectionFunction,
    Dataset,
    Scenario,
}

impl Aspect {
    pub fn name(self) -> &'static str {
        match self {
            Aspect::GenerationScheme => "generation-scheme",
            Aspect::SelectionFunction => "selection-function",
            Aspect::Dataset => "dataset",
            Aspect::Scenario => "scenario",
        }
    }
}

/// Pairwise correlations between the three headline metrics across the
/// reports of one aspect group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectCorrelation {
    pub aspect: Aspect,
    pub r_response_savings: f64,
    pub r_error_response: f64,
    pub r_error_savings: f64,
}

fn check_lengths(a: &TransactiveSignal, b: &TransactiveSignal) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Similarity of the regulated demand to the upper bound, in signal space:
/// Σ|itfs_t − etfs_t| / Σ|itfs_t − ub_t|.
pub fn response(
    itfs: &TransactiveSignal,
    etfs: &TransactiveSignal,
    ub: &TransactiveSignal,
) -> Result<f64> {
    check_lengths(itfs, etfs)?;
    check_lengths(itfs, ub)?;
    let moved: Vec<f64> = itfs
        .values()
        .iter()
        .zip(etfs.values())
        .map(|(&i, &e)| (i - e).abs())
        .collect();
    let possible: Vec<f64> = itfs
        .values()
        .iter()
        .zip(ub.values())
        .map(|(&i, &u)| (i - u).abs())
        .collect();
    let denominator = compensated_sum(&possible);
    if denominator == 0.0 {
        return Err(Error::DegenerateBound);
    }
    Ok(compensated_sum(&moved) / denominator)
}

/// Total cost of a demand signal under an incentive signal: Σ tis_t·s_t.
fn cost(tis: &TransactiveSignal, s: &TransactiveSignal) -> f64 {
    let products: Vec<f64> = tis
        .values()
        .iter()
        .zip(s.values())
        .map(|(&p, &v)| p * v)
        .collect();
    compensated_sum(&products)
}

/// The response in economic terms:
/// (cost(itfs) − cost(etfs)) / (cost(itfs) − cost(ub)).
pub fn savings(
    tis: &TransactiveSignal,
    itfs: &TransactiveSignal,
    etfs: &TransactiveSignal,
    ub: &TransactiveSignal,
) -> Result<f64> {
    check_lengths(tis, itfs)?;
    check_lengths(tis, etfs)?;
    check_lengths(tis, ub)?;
    let baseline = cost(tis, itfs);
    let denominator = baseline - cost(tis, ub);
    if denominator == 0.0 {
        return Err(Error::DegenerateBound);
    }
    Ok((baseline - cost(tis, etfs)) / denominator)
}

/// Relative errors of the regulated demand's first two moments:
/// (|1 − mean(etfs)/mean(itfs)|, |1 − σ(etfs)/σ(itfs)|).
pub fn mean_volatility_error(
    itfs: &TransactiveSignal,
    etfs: &TransactiveSignal,
) -> Result<(f64, f64)> {
    check_lengths(itfs, etfs)?;
    let itfs_mean = mean(itfs.values());
    let itfs_std = population_std(itfs.values());
    if itfs_mean <= 0.0 || itfs_std == 0.0 {
        return Err(Error::DegenerateBaseline);
    }
    let mean_error = (1.0 - mean(etfs.values()) / itfs_mean).abs();
    let volatility_error = (1.0 - population_std(etfs.values()) / itfs_std).abs();
    Ok((mean_error, volatility_error))
}

/// Positional displacement between a seed plan and a diversified plan:
/// Σ|t − t̂| where t̂ is the position the seed's value at t moved to.
///
/// Repeated values are matched in ascending position order on both sides
/// (stable matching), which is deterministic and measures the least
/// displacement consistent with the values.
pub fn informational_diversity(seed_plan: &Plan, diversified_plan: &Plan) -> Result<f64> {
    let a = seed_plan.values();
    let b = diversified_plan.values();
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        // Stable position order among equal values.
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
        idx
    };
    let seed_order = order(a);
    let div_order = order(b);
    let mut displacement = 0.0;
    for (&t, &t_hat) in seed_order.iter().zip(&div_order) {
        if a[t] != b[t_hat] {
            return Err(Error::NotAPermutation);
        }
        displacement += (t as f64 - t_hat as f64).abs();
    }
    Ok(displacement)
}

/// Sample Pearson correlation coefficient of two equal-length series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: xs.len(),
        });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        dx += (x - mx) * (x - mx);
        dy += (y - my) * (y - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    // sqrt of the product keeps perfectly (anti)correlated pairs exact:
    // for ys = ±xs the numerator equals ±dx and sqrt(dx·dx) rounds to dx.
    Ok((num / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlate the three headline metrics over one aspect group of reports.
pub fn aspect_correlation(
    aspect: Aspect,
    reports: &[EvaluationReport],
) -> Result<AspectCorrelation> {
    if reports.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: reports.len(),
        });
    }
    let responses: Vec<f64> = reports.iter().map(|r| r.response).collect();
    let savings_: Vec<f64> = reports.iter().map(|r| r.savings).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.volatility_error).collect();
    Ok(AspectCorrelation {
        aspect,
        r_response_savings: pearson(&responses, &savings_)?,
        r_error_response: pearson(&errors, &responses)?,
        r_error_savings: pearson(&errors, &savings_)?,
    })
}
