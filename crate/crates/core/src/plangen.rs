//! Generation of each agent's possible demand plans from its base-load plan.
//!
//! All three schemes permute the values of the seed plan, so every possible
//! plan consumes the same total resource with the same mean, volatility and
//! entropy — agents only ever offer to move demand in time, never to shed it.

use std::fmt;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a plan is being used by the selection protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanRole {
    /// One of an agent's p candidate plans.
    Possible,
    /// The plan an agent committed to.
    Selected,
    /// A child plan plus everything selected beneath that child.
    Aggregate,
    /// An element-wise sum of one aggregate plan per child.
    Combinational,
}

/// A demand plan: non-negative resource units over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    values: Vec<f64>,
    owner: u32,
    role: PlanRole,
}

impl Plan {
    pub fn new(owner: u32, role: PlanRole, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NonPositiveValue { index, value });
            }
        }
        Ok(Plan {
            values,
            owner,
            role,
        })
    }

    /// For plans derived from validated plans (permutations, sums).
    pub(crate) fn new_unchecked(owner: u32, role: PlanRole, values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Plan {
            values,
            owner,
            role,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn owner(&self) -> u32 {
        self.owner
    }

    pub fn role(&self) -> PlanRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scheme for diversifying a seed plan into alternative plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GenerationScheme {
    /// Uniform random permutation of the seed values.
    Shuffle,
    /// Deterministic rotation: plan j pushes values (j−1)·step ahead in time.
    Shift { step: usize },
    /// `pairs` disjoint random position pairs exchange their values.
    Swap { pairs: usize },
}

impl GenerationScheme {
    /// Check the scheme parameters against a horizon.
    pub fn validate(self, horizon: usize) -> Result<()> {
        match self {
            GenerationScheme::Shuffle => Ok(()),
            GenerationScheme::Shift { step } => {
                if step == 0 || step >= horizon {
                    Err(Error::InvalidScheme(format!(
                        "shift step must be in 1..{horizon}, got {step}"
                    )))
                } else {
                    Ok(())
                }
            }
            GenerationScheme::Swap { pairs } => {
                if pairs == 0 || pairs > horizon / 2 {
                    Err(Error::InvalidScheme(format!(
                        "swap pairs must be in 1..={}, got {pairs}",
                        horizon / 2
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl fmt::Display for GenerationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerationScheme::Shuffle => write!(f, "shuffle"),
            GenerationScheme::Shift { step } => write!(f, "shift:{step}"),
            GenerationScheme::Swap { pairs } => write!(f, "swap:{pairs}"),
        }
    }
}

impl FromStr for GenerationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidScheme(m);
        match s.split_once(':') {
            None if s == "shuffle" => Ok(GenerationScheme::Shuffle),
            Some(("shift", d)) => {
                let step = d
                    .parse()
                    .map_err(|e| bad(format!("bad shift step '{d}': {e}")))?;
                Ok(GenerationScheme::Shift { step })
            }
            Some(("swap", m)) => {
                let pairs = m
                    .parse()
                    .map_err(|e| bad(format!("bad swap pairs '{m}': {e}")))?;
                Ok(GenerationScheme::Swap { pairs })
            }
            _ => Err(bad(format!(
                "unknown scheme '{s}' (expected shuffle, shift:<d> or swap:<m>)"
            ))),
        }
    }
}

impl TryFrom<String> for GenerationScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GenerationScheme> for String {
    fn from(s: GenerationScheme) -> String {
        s.to_string()
    }
}

/// Seed for the deterministic RNG streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

/// Derive an independent stream seed from a base seed and a domain/index
/// pair (splitmix64 chain), so per-agent randomness does not depend on the
/// order agents are processed in.
pub(crate) fn derive_seed(base: u64, domain: u64, index: u64) -> u64 {
    let mut state = base
        .wrapping_add(domain.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    state = (state ^ (state >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    state = (state ^ (state >> 27)).wrapping_mul(0x94d049bb133111eb);
    state ^ (state >> 31)
}

/// The possible plans generated for one agent.
#[derive(Debug, Clone)]
pub struct GeneratedPlans {
    /// Plan 1 is always the seed plan itself (the inelastic option).
    pub plans: Vec<Plan>,
    /// 1-based indices of plans (beyond the first) identical to the seed,
    /// e.g. a shift rotation that wrapped all the way around.
    pub duplicates: Vec<usize>,
}

/// Generate an agent's `p` possible plans from its seed plan.
///
/// Plan 1 is the seed itself; plans 2..=p are applications of the scheme.
/// Shift is deterministic (plan j rotates by (j−1)·step); Shuffle and Swap
/// draw from the given seed. Every output is a value-permutation of the seed.
pub fn generate(
    seed_plan: &Plan,
    scheme: GenerationScheme,
    p: usize,
    seed: RngSeed,
) -> Result<GeneratedPlans> {
    if p == 0 {
        return Err(Error::InvalidConfig(
            "plan count p must be at least 1".into(),
        ));
    }
    let horizon = seed_plan.len();
    scheme.validate(horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut plans = Vec::with_capacity(p);
    plans.push(seed_plan.clone());
    let mut duplicates = Vec::new();
    for j in 2..=p {
        let mut values = seed_plan.values().to_vec();
        match scheme {
            GenerationScheme::Shuffle => values.shuffle(&mut rng),
            GenerationScheme::Shift { step } => {
                values.rotate_right(((j - 1) * step) % horizon);
            }
            GenerationScheme::Swap { pairs } => {
                let idx = rand::seq::index::sample(&mut rng, horizon, 2 * pairs);
                for pair in 0..pairs {
                    values.swap(idx.index(2 * pair), idx.index(2 * pair + 1));
                }
            }
        }
        if values == seed_plan.values() {
            duplicates.push(j);
        }
        plans.push(Plan::new_unchecked(
            seed_plan.owner(),
            PlanRole::Possible,
            values,
        ));
    }
    Ok(GeneratedPlans { plans, duplicates })
}

/// Sample the informational-diversity distribution of a scheme: apply the
/// scheme once per sample to a distinct-valued seed of the given horizon and
/// measure the positional displacement against the seed.
pub fn diversity_distribution(
    scheme: GenerationScheme,
    horizon: usize,
    samples: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    scheme.validate(horizon)?;
    // Distinct values make the position correspondence unambiguous.
    let seed_values: Vec<f64> = (0..horizon).map(|t| t as f64).collect();
    let seed_plan = Plan::new_unchecked(0, PlanRole::Possible, seed_values);
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let stream = RngSeed(derive_seed(seed.0, 0xd1fe, i as u64));
        // p = 2: the seed plus one application of the scheme.
        let generated = generate(&seed_plan, scheme, 2, stream)?;
        out.push(crate::metrics::informational_diversity(
            &generated.plans[0],
            &generated.plans[1],
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(values: &[f64]) -> Plan {
        Plan::new(1, PlanRole::Possible, values.to_vec()).unwrap()
    }

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn plan_rejects_negative_values() {
        assert!(matches!(
            Plan::new(1, PlanRole::Possible, vec![1.0, -0.5]),
            Err(Error::NonPositiveValue { index: 1, .. })
        ));
        // Zero demand is a legal plan value.
        assert!(Plan::new(1, PlanRole::Possible, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn scheme_strings_round_trip() {
        for s in ["shuffle", "shift:20", "swap:15"] {
            let scheme: GenerationScheme = s.parse().unwrap();
            assert_eq!(scheme.to_string(), s);
        }
        assert!("shift:0"
            .parse::<GenerationScheme>()
            .unwrap()
            .validate(10)
            .is_err());
        assert!("swap:6"
            .parse::<GenerationScheme>()
            .unwrap()
            .validate(10)
            .is_err());
        assert!("rotate:3".parse::<GenerationScheme>().is_err());
        assert!("shift:x".parse::<GenerationScheme>().is_err());
    }

    #[test]
    fn shift_rotates_cumulatively() {
        let g = generate(
            &plan(&[1.0, 2.0, 3.0, 4.0]),
            GenerationScheme::Shift { step: 1 },
            3,
            RngSeed(0),
        )
        .unwrap();
        assert_eq!(g.plans[0].values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.plans[1].values(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.plans[2].values(), &[3.0, 4.0, 1.0, 2.0]);
        assert!(g.duplicates.is_empty());
    }

    #[test]
    fn shift_wrapping_to_seed_is_flagged() {
        let g = generate(
            &plan(&[1.0, 2.0, 3.0, 4.0]),
            GenerationScheme::Shift { step: 2 },
            4,
            RngSeed(0),
        )
        .unwrap();
        // plan 3 rotates by 4 ≡ 0 (mod 4): back to the seed.
        assert_eq!(g.plans[2].values(), g.plans[0].values());
        assert_eq!(g.duplicates, vec![3]);
    }

    #[test]
    fn swap_exchanges_exactly_one_pair() {
        let seed = plan(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = generate(&seed, GenerationScheme::Swap { pairs: 1 }, 4, RngSeed(9)).unwrap();
        for p in &g.plans[1..] {
            let moved: Vec<usize> = (0..6)
                .filter(|&t| p.values()[t] != seed.values()[t])
                .collect();
            assert_eq!(moved.len(), 2);
            assert_eq!(p.values()[moved[0]], seed.values()[moved[1]]);
            assert_eq!(p.values()[moved[1]], seed.values()[moved[0]]);
        }
    }

    #[test]
    fn all_schemes_permute_the_seed() {
        let seed_values: Vec<f64> = (0..50)
            .map(|t| (t as f64 * 0.37).sin().abs() + 0.1)
            .collect();
        let seed = plan(&seed_values);
        for scheme in [
            GenerationScheme::Shuffle,
            GenerationScheme::Shift { step: 7 },
            GenerationScheme::Swap { pairs: 12 },
        ] {
            let g = generate(&seed, scheme, 6, RngSeed(1234)).unwrap();
            assert_eq!(g.plans.len(), 6);
            for p in &g.plans {
                assert_eq!(sorted(p.values()), sorted(seed.values()));
                assert_eq!(p.owner(), seed.owner());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let seed = plan(&(0..30).map(|t| t as f64 + 1.0).collect::<Vec<_>>());
        for scheme in [
            GenerationScheme::Shuffle,
            GenerationScheme::Swap { pairs: 5 },
        ] {
            let a = generate(&seed, scheme, 5, RngSeed(42)).unwrap();
            let b = generate(&seed, scheme, 5, RngSeed(42)).unwrap();
            for (x, y) in a.plans.iter().zip(&b.plans) {
                assert_eq!(x.values(), y.values());
            }
        }
    }

    #[test]
    fn shift_diversity_is_a_point_mass() {
        let d = diversity_distribution(GenerationScheme::Shift { step: 20 }, 144, 50, RngSeed(3))
            .unwrap();
        assert!(d.iter().all(|&x| x == 4960.0));
    }

    #[test]
    fn scheme_diversity_ordering() {
        let samples = 300;
        let m = |scheme| {
            let d = diversity_distribution(scheme, 144, samples, RngSeed(17)).unwrap();
            d.iter().sum::<f64>() / samples as f64
        };
        let shuffle = m(GenerationScheme::Shuffle);
        let shift20 = m(GenerationScheme::Shift { step: 20 });
        let shift10 = m(GenerationScheme::Shift { step: 10 });
        let swap30 = m(GenerationScheme::Swap { pairs: 30 });
        let swap15 = m(GenerationScheme::Swap { pairs: 15 });
        assert!(shuffle > shift20);
        assert!(shift20 > shift10);
        assert!(shift20 > swap30);
        assert!(swap30 > swap15);
        // Closed forms: rotations displace every value.
        assert_eq!(shift10, 2.0 * 10.0 * 134.0);
    }
}
