//! Decentralized bottom-up plan selection over a balanced k-ary agent tree.
//!
//! Starting at the deepest level, every parent sums each child's plans with
//! the selections already fixed beneath that child, brute-forces all
//! combinations of its children's aggregate plans, and picks the combination
//! minimizing the selection function. The root finally picks its own plan
//! against the sum of everything else, and the elastic demand signal is the
//! sum of all n selected plans.
//!
//! Parents within one level may run in parallel; the result is required to
//! be bit-identical to the single-threaded traversal, so per-level decisions
//! are collected first and applied at a barrier.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plangen::{Plan, PlanRole};
use crate::provision::{ub1_basis, ub2_zscores};
use crate::signal::{mean, population_std, SignalKind, TransactiveSignal};

/// Criterion a parent minimizes when choosing among combinational plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SelectionFunction {
    /// Lowest root-mean-square distance to the mean-constrained bound,
    /// recomputed with the candidate standing in as the baseline.
    MinRmseUb1,
    /// As above against the mean-and-volatility-constrained bound.
    MinRmseUb2,
    /// Lowest total cost under the incentive signal.
    MinCost,
}

impl SelectionFunction {
    pub fn name(self) -> &'static str {
        match self {
            SelectionFunction::MinRmseUb1 => "min-rmse-ub1",
            SelectionFunction::MinRmseUb2 => "min-rmse-ub2",
            SelectionFunction::MinCost => "min-cost",
        }
    }
}

impl fmt::Display for SelectionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-rmse-ub1" => Ok(SelectionFunction::MinRmseUb1),
            "min-rmse-ub2" => Ok(SelectionFunction::MinRmseUb2),
            "min-cost" => Ok(SelectionFunction::MinCost),
            _ => Err(Error::InvalidConfig(format!(
                "unknown selection function '{s}' (expected min-rmse-ub1, min-rmse-ub2 or min-cost)"
            ))),
        }
    }
}

impl TryFrom<String> for SelectionFunction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SelectionFunction> for String {
    fn from(s: SelectionFunction) -> String {
        s.to_string()
    }
}

/// One agent in the overlay.
#[derive(Debug, Clone)]
pub struct AgentNode {
    id: u32,
    children: Vec<usize>,
    possible_plans: Vec<Plan>,
    /// 0-based index into `possible_plans`; exposed 1-based.
    selected: Option<usize>,
}

impl AgentNode {
    /// Agent id, 1..=n.
    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn children(&self) -> &[usize] {
        &self.children
    }

    pub fn possible_plans(&self) -> &[Plan] {
        &self.possible_plans
    }

    /// 1-based index of the selected plan, once fixed.
    pub fn selected_plan(&self) -> Option<usize> {
        self.selected.map(|s| s + 1)
    }
}

/// Balanced k-ary tree over agents 1..=n in breadth-first id order.
#[derive(Debug, Clone)]
pub struct TreeOverlay {
    arity: usize,
    nodes: Vec<AgentNode>,
    /// Node indices grouped by depth, root level first.
    levels: Vec<Vec<usize>>,
}

/// Deterministic balanced k-ary overlay: node i's children occupy slots
/// k·i+1 ..= k·i+k of the breadth-first layout.
pub fn build_tree(n: u32, arity: usize) -> Result<TreeOverlay> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "agent count must be at least 1".into(),
        ));
    }
    if arity == 0 {
        return Err(Error::InvalidConfig("tree arity must be at least 1".into()));
    }
    let n = n as usize;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let first = arity * i + 1;
        let children: Vec<usize> = (first..first + arity).take_while(|&c| c < n).collect();
        nodes.push(AgentNode {
            id: (i + 1) as u32,
            children,
            possible_plans: Vec::new(),
            selected: None,
        });
    }
    let mut depth = vec![0usize; n];
    for i in 1..n {
        depth[i] = depth[(i - 1) / arity] + 1;
    }
    let mut levels: Vec<Vec<usize>> = vec![Vec::new(); depth[n - 1] + 1];
    for (i, &d) in depth.iter().enumerate() {
        levels[d].push(i);
    }
    Ok(TreeOverlay {
        arity,
        nodes,
        levels,
    })
}

impl TreeOverlay {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, index: usize) -> &AgentNode {
        &self.nodes[index]
    }

    pub fn nodes(&self) -> &[AgentNode] {
        &self.nodes
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Attach each agent's possible plans (outer index = node index) and
    /// clear any previous selections.
    pub fn assign_plans(&mut self, per_agent: Vec<Vec<Plan>>) -> Result<()> {
        if per_agent.len() != self.nodes.len() {
            return Err(Error::MismatchedAgents {
                expected: self.nodes.len(),
                found: per_agent.len(),
            });
        }
        let p = per_agent[0].len();
        let horizon = per_agent[0].first().map_or(0, Plan::len);
        for (i, plans) in per_agent.iter().enumerate() {
            if plans.is_empty() || plans.len() != p {
                return Err(Error::InvalidConfig(format!(
                    "agent {} has {} plans, expected {p}",
                    i + 1,
                    plans.len()
                )));
            }
            for plan in plans {
                if plan.len() != horizon {
                    return Err(Error::LengthMismatch {
                        expected: horizon,
                        found: plan.len(),
                    });
                }
            }
        }
        for (node, plans) in self.nodes.iter_mut().zip(per_agent) {
            node.possible_plans = plans;
            node.selected = None;
        }
        Ok(())
    }

    /// Sum of the selected plans of all agents strictly below `node`,
    /// in deterministic (ascending node index) order.
    fn branch_sum(&self, node: usize, horizon: usize) -> Result<Vec<f64>> {
        let mut below = Vec::new();
        let mut stack: Vec<usize> = self.nodes[node].children.to_vec();
        while let Some(i) = stack.pop() {
            below.push(i);
            stack.extend_from_slice(&self.nodes[i].children);
        }
        below.sort_unstable();
        let mut sum = vec![0.0; horizon];
        for i in below {
            let s = self.nodes[i].selected.ok_or_else(|| {
                Error::ProtocolViolation(format!("agent {} has no selection yet", self.nodes[i].id))
            })?;
            for (acc, v) in sum.iter_mut().zip(self.nodes[i].possible_plans[s].values()) {
                *acc += v;
            }
        }
        Ok(sum)
    }
}

/// One child's aggregate plans: plan j = child's possible plan j plus the
/// sum of all selected plans strictly below the child.
pub fn aggregate_plan_set(tree: &TreeOverlay, child: usize) -> Result<Vec<Plan>> {
    let node = tree.node(child);
    let horizon = node
        .possible_plans
        .first()
        .map(Plan::len)
        .ok_or_else(|| Error::ProtocolViolation(format!("agent {} has no plans", node.id)))?;
    let below = tree.branch_sum(child, horizon)?;
    Ok(node
        .possible_plans
        .iter()
        .map(|plan| {
            let values = plan
                .values()
                .iter()
                .zip(&below)
                .map(|(&a, &b)| a + b)
                .collect();
            Plan::new_unchecked(node.id, PlanRole::Aggregate, values)
        })
        .collect())
}

/// One brute-force candidate: the element-wise sum of one aggregate plan per
/// child, remembering which plan index was taken from each child.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationalPlan {
    pub values: Vec<f64>,
    /// 0-based aggregate plan index chosen for each child, first child first.
    pub choice: Vec<usize>,
}

/// Enumerate all p^k element-wise sums of one aggregate plan per child, in
/// lexicographic order of the choice tuple with the first child outermost.
pub fn combinational_plans(
    children_aggregates: &[Vec<Plan>],
    budget: u64,
) -> Result<Vec<CombinationalPlan>> {
    if children_aggregates.is_empty() || children_aggregates.iter().any(Vec::is_empty) {
        return Err(Error::ProtocolViolation("empty aggregate plan set".into()));
    }
    let combinations = children_aggregates
        .iter()
        .try_fold(1u128, |acc, plans| acc.checked_mul(plans.len() as u128))
        .ok_or(Error::BudgetExceeded {
            combinations: u128::MAX,
            budget,
        })?;
    if combinations > budget as u128 {
        return Err(Error::BudgetExceeded {
            combinations,
            budget,
        });
    }
    let k = children_aggregates.len();
    let horizon = children_aggregates[0][0].len();
    let mut out = Vec::with_capacity(combinations as usize);
    let mut choice = vec![0usize; k];
    loop {
        let mut values = vec![0.0; horizon];
        for (child, &j) in choice.iter().enumerate() {
            for (acc, v) in values
                .iter_mut()
                .zip(children_aggregates[child][j].values())
            {
                *acc += v;
            }
        }
        out.push(CombinationalPlan {
            values,
            choice: choice.clone(),
        });
        // Odometer with the last child fastest keeps the first child outermost.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < children_aggregates[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Scoring context shared by every parent in a run: the incentive signal
/// plus the precomputed pieces that let an upper bound be recomputed for a
/// candidate baseline in O(T) without allocation.
#[derive(Debug, Clone)]
pub struct SelectionContext {
    selection: SelectionFunction,
    tis: Vec<f64>,
    /// Normalized reflection over the incentive mean (UB1 = mean(c)·basis).
    ub1_basis: Vec<f64>,
    /// Z-scores of the reflected incentive (UB2 = σ(c)·z + mean(c)).
    ub2_zscores: Vec<f64>,
}

impl SelectionContext {
    pub fn new(selection: SelectionFunction, tis: &TransactiveSignal) -> Result<Self> {
        if tis.kind() != SignalKind::Tis {
            return Err(Error::KindMismatch {
                expected: "TIS",
                found: tis.kind().name(),
            });
        }
        let ub1_basis = match selection {
            SelectionFunction::MinRmseUb1 => ub1_basis(tis)?,
            _ => Vec::new(),
        };
        let ub2_zscores = match selection {
            SelectionFunction::MinRmseUb2 => ub2_zscores(tis)?,
            _ => Vec::new(),
        };
        Ok(SelectionContext {
            selection,
            tis: tis.values().to_vec(),
            ub1_basis,
            ub2_zscores,
        })
    }

    pub fn selection(&self) -> SelectionFunction {
        self.selection
    }

    /// Score one candidate demand plan; lower is better.
    pub fn score(&self, candidate: &[f64]) -> f64 {
        debug_assert_eq!(candidate.len(), self.tis.len());
        let t = candidate.len() as f64;
        match self.selection {
            SelectionFunction::MinCost => {
                candidate.iter().zip(&self.tis).map(|(&c, &p)| c * p).sum()
            }
            SelectionFunction::MinRmseUb1 => {
                let m = mean(candidate);
                let sq: f64 = candidate
                    .iter()
                    .zip(&self.ub1_basis)
                    .map(|(&c, &b)| {
                        let d = c - m * b;
                        d * d
                    })
                    .sum();
                (sq / t).sqrt()
            }
            SelectionFunction::MinRmseUb2 => {
                let m = mean(candidate);
                let sd = population_std(candidate);
                let sq: f64 = candidate
                    .iter()
                    .zip(&self.ub2_zscores)
                    .map(|(&c, &z)| {
                        let d = c - (sd * z + m);
                        d * d
                    })
                    .sum();
                (sq / t).sqrt()
            }
        }
    }

    /// Index of the best-scoring candidate; ties go to the lowest index.
    pub fn best_index<'a, I>(&self, candidates: I) -> Option<usize>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.into_iter().enumerate() {
            let s = self.score(c);
            match best {
                Some((_, b)) if s >= b => {}
                _ => best = Some((i, s)),
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Tuning knobs for a selection run.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Process parents within a level concurrently. The outcome is
    /// bit-identical either way.
    pub parallel: bool,
    /// Upper limit on p^k combinations per parent.
    pub combination_budget: u64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            parallel: false,
            combination_budget: 65536,
        }
    }
}

/// Result of a selection run.
#[derive(Debug, Clone)]
pub struct EposOutcome {
    /// The regulated demand: element-wise sum of all n selected plans.
    pub etfs: TransactiveSignal,
    /// Agent id → 1-based selected plan index.
    pub selections: BTreeMap<u32, usize>,
}

/// Decide the selections a parent fixes for its children: 0-based plan
/// index per child, in child order.
fn decide_children(
    tree: &TreeOverlay,
    parent: usize,
    ctx: &SelectionContext,
    budget: u64,
) -> Result<Vec<usize>> {
    let children = tree.node(parent).children();
    let mut aggregates = Vec::with_capacity(children.len());
    for &child in children {
        aggregates.push(aggregate_plan_set(tree, child)?);
    }
    let combinationals = combinational_plans(&aggregates, budget)?;
    let best = ctx
        .best_index(combinationals.iter().map(|c| c.values.as_slice()))
        .expect("combinational enumeration is never empty");
    Ok(combinationals[best].choice.clone())
}

/// Run the full bottom-up selection protocol.
///
/// Internal nodes are processed deepest level first with a barrier between
/// levels; the root then fixes its own plan against the sum of all other
/// selections, and the elastic demand signal is assembled per agent id.
pub fn run_epos(
    tree: &mut TreeOverlay,
    selection: SelectionFunction,
    tis: &TransactiveSignal,
    options: &EngineOptions,
) -> Result<EposOutcome> {
    let horizon = tis.len();
    for node in tree.nodes() {
        if node.possible_plans().is_empty() {
            return Err(Error::ProtocolViolation(format!(
                "agent {} has no plans",
                node.id()
            )));
        }
        if node.possible_plans()[0].len() != horizon {
            return Err(Error::LengthMismatch {
                expected: horizon,
                found: node.possible_plans()[0].len(),
            });
        }
    }
    let ctx = SelectionContext::new(selection, tis)?;

    for level in (0..tree.levels.len()).rev() {
        let parents: Vec<usize> = tree.levels[level]
            .iter()
            .copied()
            .filter(|&i| !tree.nodes[i].children.is_empty())
            .collect();
        let decisions: Vec<(usize, Vec<usize>)> = if options.parallel {
            parents
                .par_iter()
                .map(|&p| {
                    decide_children(tree, p, &ctx, options.combination_budget).map(|d| (p, d))
                })
                .collect::<Result<_>>()?
        } else {
            parents
                .iter()
                .map(|&p| {
                    decide_children(tree, p, &ctx, options.combination_budget).map(|d| (p, d))
                })
                .collect::<Result<_>>()?
        };
        // Barrier: apply every decision of this level before the next level
        // reads any selection.
        for (parent, choice) in decisions {
            let children = tree.nodes[parent].children.clone();
            for (&child, &plan_index) in children.iter().zip(&choice) {
                tree.nodes[child].selected = Some(plan_index);
            }
        }
    }

    // The root picks its own plan last, against everything already fixed.
    let rest = tree.branch_sum(0, horizon)?;
    let root_candidates: Vec<Vec<f64>> = tree.nodes[0]
        .possible_plans
        .iter()
        .map(|plan| {
            plan.values()
                .iter()
                .zip(&rest)
                .map(|(&a, &b)| a + b)
                .collect()
        })
        .collect();
    let best = ctx
        .best_index(root_candidates.iter().map(Vec::as_slice))
        .expect("root has at least one plan");
    tree.nodes[0].selected = Some(best);

    let mut etfs = vec![0.0; horizon];
    let mut selections = BTreeMap::new();
    for node in &tree.nodes {
        let s = node.selected.ok_or_else(|| {
            Error::ProtocolViolation(format!("agent {} finished unselected", node.id))
        })?;
        for (acc, v) in etfs.iter_mut().zip(node.possible_plans[s].values()) {
            *acc += v;
        }
        selections.insert(node.id, s + 1);
    }
    Ok(EposOutcome {
        etfs: TransactiveSignal::new_unchecked(SignalKind::Etfs, etfs),
        selections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plangen::{generate, GenerationScheme, RngSeed};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn plan(owner: u32, values: &[f64]) -> Plan {
        Plan::new(owner, PlanRole::Possible, values.to_vec()).unwrap()
    }

    fn tis(values: &[f64]) -> TransactiveSignal {
        TransactiveSignal::new(SignalKind::Tis, values.to_vec()).unwrap()
    }

    #[test]
    fn tree_shapes() {
        let t = build_tree(4, 3).unwrap();
        assert_eq!(t.node(0).children(), &[1, 2, 3]);
        assert_eq!(t.levels(), &[vec![0], vec![1, 2, 3]]);

        let single = build_tree(1, 3).unwrap();
        assert!(single.node(0).children().is_empty());

        let perfect = build_tree(13, 3).unwrap();
        let sizes: Vec<usize> = perfect.levels().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 3, 9]);

        let chain = build_tree(4, 1).unwrap();
        assert_eq!(chain.levels().len(), 4);

        assert!(build_tree(0, 3).is_err());
        assert!(build_tree(3, 0).is_err());
    }

    #[test]
    fn tree_is_balanced() {
        for n in 1..200u32 {
            let t = build_tree(n, 3).unwrap();
            let depths = t.levels().len();
            // Breadth-first fill: only the last two levels may be partial.
            for (d, level) in t.levels().iter().enumerate() {
                if d + 2 < depths {
                    assert_eq!(level.len(), 3usize.pow(d as u32));
                }
                for &i in level {
                    assert!(t.node(i).children().len() <= 3);
                }
            }
        }
    }

    #[test]
    fn combinational_order_is_first_child_outermost() {
        let a = vec![plan(1, &[1.0]), plan(1, &[2.0])];
        let b = vec![plan(2, &[10.0]), plan(2, &[20.0])];
        let combos = combinational_plans(&[a, b], 100).unwrap();
        let values: Vec<f64> = combos.iter().map(|c| c.values[0]).collect();
        assert_eq!(values, vec![11.0, 21.0, 12.0, 22.0]);
        assert_eq!(combos[1].choice, vec![0, 1]);
    }

    #[test]
    fn combinational_single_child_passthrough() {
        let a = vec![plan(1, &[1.0, 2.0]), plan(1, &[2.0, 1.0])];
        let combos = combinational_plans(std::slice::from_ref(&a), 100).unwrap();
        assert_eq!(combos.len(), 2);
        assert_eq!(combos[0].values, a[0].values());
        assert_eq!(combos[1].values, a[1].values());
    }

    #[test]
    fn combinational_budget_guard() {
        let plans: Vec<Plan> = (0..10).map(|i| plan(1, &[i as f64])).collect();
        let sets: Vec<Vec<Plan>> = (0..3).map(|_| plans.clone()).collect();
        assert!(matches!(
            combinational_plans(&sets, 999),
            Err(Error::BudgetExceeded {
                combinations: 1000,
                ..
            })
        ));
        assert_eq!(combinational_plans(&sets, 1000).unwrap().len(), 1000);
    }

    #[test]
    fn min_cost_prefers_cheap_slots() {
        let ctx = SelectionContext::new(SelectionFunction::MinCost, &tis(&[1.0, 10.0])).unwrap();
        let candidates: Vec<Vec<f64>> = vec![vec![5.0, 1.0], vec![1.0, 5.0]];
        // costs 15 vs 51
        assert_eq!(
            ctx.best_index(candidates.iter().map(Vec::as_slice)),
            Some(0)
        );
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let ctx = SelectionContext::new(SelectionFunction::MinCost, &tis(&[1.0, 1.0])).unwrap();
        let candidates: Vec<Vec<f64>> = vec![vec![2.0, 2.0], vec![2.0, 2.0], vec![1.0, 3.0]];
        // all cost 4
        assert_eq!(
            ctx.best_index(candidates.iter().map(Vec::as_slice)),
            Some(0)
        );
    }

    #[test]
    fn min_cost_argmin_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = rng.random_range(2..30);
            let prices: Vec<f64> = (0..t).map(|_| rng.random_range(0.1..10.0)).collect();
            let candidates: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..t).map(|_| rng.random_range(0.0..5.0)).collect())
                .collect();
            let scale = rng.random_range(0.01..100.0);
            let scaled: Vec<f64> = prices.iter().map(|&p| p * scale).collect();
            let a = SelectionContext::new(SelectionFunction::MinCost, &tis(&prices)).unwrap();
            let b = SelectionContext::new(SelectionFunction::MinCost, &tis(&scaled)).unwrap();
            assert_eq!(
                a.best_index(candidates.iter().map(Vec::as_slice)),
                b.best_index(candidates.iter().map(Vec::as_slice))
            );
        }
    }

    #[test]
    fn rmse_ub2_perfect_match_scores_zero() {
        // tis [1,3] → reflection z-scores (+1,−1); [12,8] has mean 10, σ 2,
        // so its recomputed bound is 10 + 2·(±1) = itself.
        let ctx = SelectionContext::new(SelectionFunction::MinRmseUb2, &tis(&[1.0, 3.0])).unwrap();
        assert_eq!(ctx.score(&[12.0, 8.0]), 0.0);
        let candidates: Vec<Vec<f64>> = vec![vec![8.0, 12.0], vec![12.0, 8.0]];
        assert_eq!(
            ctx.best_index(candidates.iter().map(Vec::as_slice)),
            Some(1)
        );
    }

    #[test]
    fn single_agent_selects_its_best_plan() {
        let mut tree = build_tree(1, 3).unwrap();
        tree.assign_plans(vec![vec![plan(1, &[5.0, 1.0]), plan(1, &[1.0, 5.0])]])
            .unwrap();
        let out = run_epos(
            &mut tree,
            SelectionFunction::MinCost,
            &tis(&[1.0, 10.0]),
            &EngineOptions::default(),
        )
        .unwrap();
        assert_eq!(out.selections[&1], 1);
        assert_eq!(out.etfs.values(), &[5.0, 1.0]);
    }

    /// Exhaustive oracle: try all p^n global assignments, but restricted to
    /// the protocol's structure (children fixed by the parent stage, root
    /// fixed last). For a two-level tree the protocol's answer must match
    /// minimizing over children first (with the root's plans excluded), then
    /// the root's own plans.
    #[test]
    fn two_level_tree_matches_exhaustive_minimum() {
        let price = tis(&[1.0, 2.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut per_agent = Vec::new();
            for agent in 1..=4u32 {
                let plans: Vec<Plan> = (0..2)
                    .map(|_| {
                        let v: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..5.0)).collect();
                        plan(agent, &v)
                    })
                    .collect();
                per_agent.push(plans);
            }
            let mut tree = build_tree(4, 3).unwrap();
            tree.assign_plans(per_agent.clone()).unwrap();
            let out = run_epos(
                &mut tree,
                SelectionFunction::MinCost,
                &price,
                &EngineOptions::default(),
            )
            .unwrap();

            // Oracle: children 2..4 jointly minimize cost of their sum, then
            // the root minimizes with its own plan added.
            let cost =
                |v: &[f64]| -> f64 { v.iter().zip(price.values()).map(|(&a, &b)| a * b).sum() };
            let mut best_children = (0, 0, 0);
            let mut best_cost = f64::INFINITY;
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        let mut sum = vec![0.0; 3];
                        for &(i, j) in [(1usize, a), (2, b), (3, c)].iter() {
                            for (acc, v) in sum.iter_mut().zip(per_agent[i][j].values()) {
                                *acc += v;
                            }
                        }
                        let k = cost(&sum);
                        if k < best_cost {
                            best_cost = k;
                            best_children = (a, b, c);
                        }
                    }
                }
            }
            assert_eq!(out.selections[&2], best_children.0 + 1);
            assert_eq!(out.selections[&3], best_children.1 + 1);
            assert_eq!(out.selections[&4], best_children.2 + 1);
        }
    }

    #[test]
    fn aggregate_plans_add_the_branch_below() {
        // Chain 1 → 2 → 3: after fixing agent 3, agent 2's aggregates are
        // its own plans plus 3's selection.
        let mut tree = build_tree(3, 1).unwrap();
        tree.assign_plans(vec![
            vec![plan(1, &[1.0, 1.0]), plan(1, &[1.0, 1.0])],
            vec![plan(2, &[2.0, 0.0]), plan(2, &[0.0, 2.0])],
            vec![plan(3, &[1.0, 1.0]), plan(3, &[1.0, 1.0])],
        ])
        .unwrap();
        // Unfixed descendant is a protocol violation.
        assert!(matches!(
            aggregate_plan_set(&tree, 1),
            Err(Error::ProtocolViolation(_))
        ));
        tree.nodes[2].selected = Some(0);
        let agg = aggregate_plan_set(&tree, 1).unwrap();
        assert_eq!(agg[0].values(), &[3.0, 1.0]);
        assert_eq!(agg[1].values(), &[1.0, 3.0]);
        // Leaf child: empty branch sum.
        let leaf = aggregate_plan_set(&tree, 2).unwrap();
        assert_eq!(leaf[0].values(), &[1.0, 1.0]);
    }

    #[test]
    fn mean_is_preserved_through_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let horizon = 24;
        let n = 30u32;
        let prices: Vec<f64> = (0..horizon).map(|_| rng.random_range(1.0..10.0)).collect();
        let price = tis(&prices);
        for selection in [
            SelectionFunction::MinCost,
            SelectionFunction::MinRmseUb1,
            SelectionFunction::MinRmseUb2,
        ] {
            let mut itfs_sum = vec![0.0; horizon];
            let mut per_agent = Vec::new();
            for agent in 1..=n {
                let seed: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.1..3.0)).collect();
                for (acc, v) in itfs_sum.iter_mut().zip(&seed) {
                    *acc += v;
                }
                let g = generate(
                    &plan(agent, &seed),
                    GenerationScheme::Shuffle,
                    4,
                    RngSeed(1000 + agent as u64),
                )
                .unwrap();
                per_agent.push(g.plans);
            }
            let mut tree = build_tree(n, 3).unwrap();
            tree.assign_plans(per_agent).unwrap();
            let out = run_epos(&mut tree, selection, &price, &EngineOptions::default()).unwrap();
            let itfs_mean = mean(&itfs_sum);
            let etfs_mean = mean(out.etfs.values());
            assert!((etfs_mean - itfs_mean).abs() / itfs_mean < 1e-12);
            assert_eq!(out.selections.len(), n as usize);
        }
    }

    #[test]
    fn parallel_run_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let horizon = 16;
        let n = 40u32;
        let prices: Vec<f64> = (0..horizon).map(|_| rng.random_range(1.0..10.0)).collect();
        let price = tis(&prices);
        let mut per_agent = Vec::new();
        for agent in 1..=n {
            let seed: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.1..3.0)).collect();
            let g = generate(
                &plan(agent, &seed),
                GenerationScheme::Swap { pairs: 4 },
                3,
                RngSeed(agent as u64),
            )
            .unwrap();
            per_agent.push(g.plans);
        }
        for selection in [
            SelectionFunction::MinCost,
            SelectionFunction::MinRmseUb1,
            SelectionFunction::MinRmseUb2,
        ] {
            let run = |parallel: bool| {
                let mut tree = build_tree(n, 3).unwrap();
                tree.assign_plans(per_agent.clone()).unwrap();
                run_epos(
                    &mut tree,
                    selection,
                    &price,
                    &EngineOptions {
                        parallel,
                        combination_budget: 65536,
                    },
                )
                .unwrap()
            };
            let seq = run(false);
            let par = run(true);
            assert_eq!(seq.selections, par.selections);
            assert_eq!(seq.etfs.values(), par.etfs.values());
        }
    }

    #[test]
    fn flat_incentive_rejected_for_ub2_selection() {
        let mut tree = build_tree(2, 3).unwrap();
        tree.assign_plans(vec![vec![plan(1, &[1.0, 1.0])], vec![plan(2, &[1.0, 1.0])]])
            .unwrap();
        let r = run_epos(
            &mut tree,
            SelectionFunction::MinRmseUb2,
            &tis(&[2.0, 2.0]),
            &EngineOptions::default(),
        );
        assert!(matches!(r, Err(Error::DegenerateIncentive)));
    }
}
