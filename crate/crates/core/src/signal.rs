//! Transactive signal types and the signal algebra: statistics, reflection
//! about the mean, normalization of reflections, and Shannon entropy.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a time series plays in the regulation loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// Transactive incentive signal: a price per resource unit and time step.
    Tis,
    /// Inelastic transactive flexibility signal: baseline demand that ignores prices.
    Itfs,
    /// Elastic transactive flexibility signal: demand after regulation.
    Etfs,
    /// Upper-bound reference signal; exempt from the positivity requirement.
    Ub,
}

impl SignalKind {
    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Tis => "TIS",
            SignalKind::Itfs => "iTFS",
            SignalKind::Etfs => "eTFS",
            SignalKind::Ub => "UB",
        }
    }
}

/// A discrete time series of length T with a declared role.
///
/// Price and demand signals (all kinds except [`SignalKind::Ub`]) are
/// strictly positive; upper bounds may go negative and are only required to
/// be finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactiveSignal {
    kind: SignalKind,
    values: Vec<f64>,
}

impl TransactiveSignal {
    /// Validating constructor for signals entering the system from outside.
    pub fn new(kind: SignalKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonPositiveValue { index, value });
            }
            if kind != SignalKind::Ub && value <= 0.0 {
                return Err(Error::NonPositiveValue { index, value });
            }
        }
        Ok(TransactiveSignal { kind, values })
    }

    /// Constructor for signals derived inside the library whose invariants
    /// hold by construction (normalized reflections may contain exact zeros,
    /// upper bounds may be negative).
    pub(crate) fn new_unchecked(kind: SignalKind, values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        TransactiveSignal { kind, values }
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Horizon T.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Mean, population volatility and entropy in one pass over the signal.
    ///
    /// Entropy is undefined for signals with negative values or zero total
    /// mass (possible for imported or upper-bound data; never for validated
    /// price/demand signals).
    pub fn stats(&self) -> Result<SignalStats> {
        Ok(SignalStats {
            mean: mean(&self.values),
            volatility: population_std(&self.values),
            entropy: shannon_entropy(&self.values)?,
        })
    }

    /// Serialize as CSV with header `t,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value"])?;
        for (t, value) in self.values.iter().enumerate() {
            w.write_record([t.to_string(), format!("{value}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a `t,value` CSV written by [`write_csv`](Self::write_csv),
    /// validating values under the rules of `kind`.
    pub fn read_csv<R: Read>(kind: SignalKind, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut values = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let row = i + 2; // 1-based, after the header
            if record.len() != 2 {
                return Err(Error::CsvData {
                    row,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let t: usize = record[0].parse().map_err(|e| Error::CsvData {
                row,
                message: format!("bad time index '{}': {e}", &record[0]),
            })?;
            if t != i {
                return Err(Error::CsvData {
                    row,
                    message: format!("time index {t} out of order, expected {i}"),
                });
            }
            let value: f64 = record[1].parse().map_err(|e| Error::CsvData {
                row,
                message: format!("bad value '{}': {e}", &record[1]),
            })?;
            values.push(value);
        }
        TransactiveSignal::new(kind, values)
    }
}

/// A reflection of an incentive signal about its mean. May contain negative
/// values; the sum equals the sum of the source signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedSignal {
    values: Vec<f64>,
}

impl ReflectedSignal {
    /// Wrap raw reflection values (finite, non-empty). Primarily useful for
    /// feeding externally computed reflections into the normalization.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonPositiveValue { index, value });
        }
        Ok(ReflectedSignal { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Descriptive statistics of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub mean: f64,
    /// Population standard deviation (divide by T, not T−1).
    pub volatility: f64,
    /// Shannon entropy in bits of the value-proportional distribution.
    pub entropy: f64,
}

/// Compensated (Neumaier) summation; deterministic for a fixed order and
/// accurate enough that downstream mean-preservation residuals stay well
/// below their 1e-9 tolerance.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Arithmetic mean of a non-empty slice.
pub fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    compensated_sum(values) / values.len() as f64
}

/// Population standard deviation (divide by T).
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|&v| (v - m) * (v - m)).collect();
    (compensated_sum(&sq) / values.len() as f64).sqrt()
}

/// Shannon entropy in bits of the distribution p_t = v_t / Σv.
///
/// Zero values contribute nothing (the 0·log 0 limit); negative values or a
/// non-positive total make the distribution, and hence the entropy, undefined.
pub fn shannon_entropy(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySignal);
    }
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::EntropyUndefined);
    }
    let total = compensated_sum(values);
    if total <= 0.0 {
        return Err(Error::EntropyUndefined);
    }
    let mut acc = 0.0;
    for &v in values {
        if v > 0.0 {
            let p = v / total;
            acc -= p * p.log2();
        }
    }
    // Clamp the tiny negative that rounding can produce for near-constant signals.
    Ok(acc.max(0.0))
}

/// Reflect an incentive signal about its mean: out_t = 2·mean − v_t.
///
/// High prices map below the mean and vice versa, turning the price signal
/// into a demand-shaped target. The sum (and so the mean) is preserved.
pub fn reflect(tis: &TransactiveSignal) -> Result<ReflectedSignal> {
    if tis.kind() != SignalKind::Tis {
        return Err(Error::KindMismatch {
            expected: "TIS",
            found: tis.kind().name(),
        });
    }
    Ok(ReflectedSignal {
        values: reflect_slice(tis.values()),
    })
}

/// Reflection on a raw slice; shared with the provision fast paths.
pub(crate) fn reflect_slice(values: &[f64]) -> Vec<f64> {
    let twice_mean = 2.0 * mean(values);
    values.iter().map(|&v| twice_mean - v).collect()
}

/// Remove negative values from a reflection while preserving its mean.
///
/// Negative entries are raised to zero; to pay for it, every positive entry
/// r_t is reduced by r_t·D/P where D is the total negative magnitude and P
/// the total positive mass, so reductions are proportional to price level.
/// Infeasible when the positive mass cannot absorb the deficit (P ≤ D).
pub fn normalize_reflection(reflected: &ReflectedSignal) -> Result<TransactiveSignal> {
    let values = reflected.values();
    let positive: f64 = compensated_sum(
        &values
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect::<Vec<_>>(),
    );
    let negative: f64 = compensated_sum(
        &values
            .iter()
            .map(|&v| if v < 0.0 { -v } else { 0.0 })
            .collect::<Vec<_>>(),
    );
    if positive <= negative {
        return Err(Error::InfeasibleNormalization { positive, negative });
    }
    let out = if negative == 0.0 {
        values.to_vec()
    } else {
        let factor = negative / positive;
        // v − v·factor ≥ 0 holds in IEEE arithmetic: factor < 1, so
        // fl(v·factor) ≤ v by monotonicity of rounding.
        values
            .iter()
            .map(|&v| if v <= 0.0 { 0.0 } else { v - v * factor })
            .collect()
    };
    Ok(TransactiveSignal::new_unchecked(SignalKind::Tis, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tis(values: &[f64]) -> TransactiveSignal {
        TransactiveSignal::new(SignalKind::Tis, values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_positive() {
        assert!(matches!(
            TransactiveSignal::new(SignalKind::Tis, vec![]),
            Err(Error::EmptySignal)
        ));
        assert!(matches!(
            TransactiveSignal::new(SignalKind::Itfs, vec![1.0, 0.0]),
            Err(Error::NonPositiveValue { index: 1, .. })
        ));
        assert!(matches!(
            TransactiveSignal::new(SignalKind::Etfs, vec![1.0, f64::NAN]),
            Err(Error::NonPositiveValue { index: 1, .. })
        ));
        // Upper bounds may be negative but must stay finite.
        assert!(TransactiveSignal::new(SignalKind::Ub, vec![-1.0, 2.0]).is_ok());
        assert!(TransactiveSignal::new(SignalKind::Ub, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn stats_of_constant_signal() {
        let s = TransactiveSignal::new(SignalKind::Itfs, vec![4.0; 4]).unwrap();
        let st = s.stats().unwrap();
        assert_eq!(st.mean, 4.0);
        assert_eq!(st.volatility, 0.0);
        assert_eq!(st.entropy, 2.0);
    }

    #[test]
    fn stats_of_small_signal() {
        let st = tis(&[1.0, 2.0, 3.0]).stats().unwrap();
        assert_eq!(st.mean, 2.0);
        assert!((st.volatility - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[2.0, 2.0, 4.0]).unwrap(), 1.5);
        let uniform = vec![1.0; 144];
        assert!((shannon_entropy(&uniform).unwrap() - 144f64.log2()).abs() < 1e-12);
        // Concentration drives entropy towards zero.
        let mut spiky = vec![1e-12; 10];
        spiky[0] = 1.0;
        assert!(shannon_entropy(&spiky).unwrap() < 1e-9);
        assert!(matches!(
            shannon_entropy(&[1.0, -1.0]),
            Err(Error::EntropyUndefined)
        ));
        assert!(matches!(
            shannon_entropy(&[0.0, 0.0]),
            Err(Error::EntropyUndefined)
        ));
    }

    #[test]
    fn entropy_bounded_by_log_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = rng.random_range(2..300);
            let v: Vec<f64> = (0..t).map(|_| rng.random_range(0.01..100.0)).collect();
            let h = shannon_entropy(&v).unwrap();
            assert!(h >= 0.0 && h <= (t as f64).log2() + 1e-12);
        }
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(
            reflect(&tis(&[1.0, 2.0, 3.0])).unwrap().values(),
            &[3.0, 2.0, 1.0]
        );
        assert_eq!(reflect(&tis(&[5.0, 5.0])).unwrap().values(), &[5.0, 5.0]);
        assert_eq!(
            reflect(&tis(&[1.0, 1.0, 10.0])).unwrap().values(),
            &[7.0, 7.0, -2.0]
        );
    }

    #[test]
    fn reflect_requires_incentive_kind() {
        let s = TransactiveSignal::new(SignalKind::Itfs, vec![1.0, 2.0]).unwrap();
        assert!(matches!(reflect(&s), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn reflect_preserves_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let t = rng.random_range(2..200);
            let v: Vec<f64> = (0..t).map(|_| rng.random_range(0.1..50.0)).collect();
            let r = reflect_slice(&v);
            let sv = compensated_sum(&v);
            let sr = compensated_sum(&r);
            assert!((sv - sr).abs() / sv.abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_identity_without_negatives() {
        let r = ReflectedSignal::from_values(vec![3.0, 2.0, 1.0]).unwrap();
        assert_eq!(normalize_reflection(&r).unwrap().values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn normalize_redistributes_negative_mass() {
        let r = ReflectedSignal::from_values(vec![7.0, 7.0, -2.0]).unwrap();
        let n = normalize_reflection(&r).unwrap();
        assert_eq!(n.values(), &[6.0, 6.0, 0.0]);
        assert_eq!(mean(n.values()), 4.0);
    }

    #[test]
    fn normalize_infeasible_when_deficit_dominates() {
        let r = ReflectedSignal::from_values(vec![1.0, -3.0]).unwrap();
        assert!(matches!(
            normalize_reflection(&r),
            Err(Error::InfeasibleNormalization { .. })
        ));
    }

    #[test]
    fn normalize_preserves_order_of_positives() {
        let r = ReflectedSignal::from_values(vec![5.0, 1.0, 3.0, -2.0, 4.0]).unwrap();
        let n = normalize_reflection(&r).unwrap();
        let v = n.values();
        assert!(v[1] < v[2] && v[2] < v[4] && v[4] < v[0]);
    }

    #[test]
    fn imported_series_matches_precomputed_stats() {
        // 144-value fixture; expected values recomputed independently with
        // arbitrary-precision arithmetic and frozen here.
        let data = include_str!("../tests/data/imported_tis.csv");
        let s = TransactiveSignal::read_csv(SignalKind::Tis, data.as_bytes()).unwrap();
        assert_eq!(s.len(), 144);
        let st = s.stats().unwrap();
        assert!((st.mean - 5.1410808263888885).abs() / 5.141 < 1e-13);
        assert!((st.volatility - 1.531166966609706).abs() / 1.531 < 1e-13);
        assert!((st.entropy - 7.103993403215644).abs() / 7.104 < 1e-13);
    }

    #[test]
    fn csv_round_trip() {
        let s = tis(&[1.25, 2.5, 0.125]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = TransactiveSignal::read_csv(SignalKind::Tis, buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let out_of_order = "t,value\n0,1.0\n2,2.0\n";
        assert!(matches!(
            TransactiveSignal::read_csv(SignalKind::Tis, out_of_order.as_bytes()),
            Err(Error::CsvData { row: 3, .. })
        ));
        let bad_value = "t,value\n0,abc\n";
        assert!(matches!(
            TransactiveSignal::read_csv(SignalKind::Tis, bad_value.as_bytes()),
            Err(Error::CsvData { row: 2, .. })
        ));
    }
}
