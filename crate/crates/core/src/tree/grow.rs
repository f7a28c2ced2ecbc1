//! Cost-sensitive tree induction under a false-negative-rate constraint.

use serde::{Deserialize, Serialize};

use super::complexity::eq7_slack;
use super::prune::prune_counts;
use super::wilson::{max_empirical_fnr, FnrCap};
use super::{DecisionTree, Node, NodeCounts};
use crate::error::TreeError;
use crate::model::{Bucket, CostConfig, Label, Test, TrainingRecord};

const EPS: f64 = 1e-12;

/// Class counts per BI-RADS bucket for one candidate test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BucketCounts(pub [NodeCounts; 3]);

impl BucketCounts {
    /// Counts over the records that observed `test`; also returns how many
    /// records were skipped for lacking it.
    pub fn from_records(records: &[&TrainingRecord], test: Test) -> (Self, usize) {
        let mut out = Self::default();
        let mut missing = 0;
        for r in records {
            match r.screening.get(test) {
                Some(score) => out.0[score.bucket().index()].add(r.label),
                None => missing += 1,
            }
        }
        (out, missing)
    }

    pub fn total(&self) -> NodeCounts {
        let mut t = NodeCounts::default();
        for c in &self.0 {
            t.positives += c.positives;
            t.negatives += c.negatives;
        }
        t
    }

    /// Information gain of the split in bits.
    pub fn information_gain(&self) -> f64 {
        let total = self.total();
        let n = total.total();
        if n == 0 {
            return 0.0;
        }
        let conditional: f64 = self
            .0
            .iter()
            .filter(|c| c.total() > 0)
            .map(|c| c.total() as f64 / n as f64 * entropy(c))
            .sum();
        (entropy(&total) - conditional).max(0.0)
    }
}

fn entropy(c: &NodeCounts) -> f64 {
    let n = c.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    [c.positives, c.negatives]
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Information gain of splitting `records` on `test`, over the records that
/// observed it.
pub fn information_gain(records: &[&TrainingRecord], test: Test) -> Result<f64, TreeError> {
    let (counts, _) = BucketCounts::from_records(records, test);
    if counts.total().total() == 0 {
        return Err(TreeError::NoObservedOutcomes(test));
    }
    Ok(counts.information_gain())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Labeling {
    pub labels: [Label; 3],
    pub false_negatives: u64,
    pub false_positives: u64,
}

/// Picks leaf labels for the three buckets of a split: among the labelings
/// whose false negatives fit `fn_allowance` (`None` means unconstrained),
/// the one with the fewest false positives. Ties prefer more positive
/// leaves, then the lexicographically smallest labeling. Empty buckets take
/// `fallback`. Returns `None` when no labeling fits.
pub fn label_leaves(counts: &BucketCounts, fallback: Label, fn_allowance: Option<u64>) -> Option<Labeling> {
    let mut best: Option<(Labeling, u32)> = None;
    for mask in 0u8..8 {
        let labels = [0, 1, 2].map(|i| Label::from_bool(mask >> (2 - i) & 1 == 1));
        if (0..3).any(|i| counts.0[i].total() == 0 && labels[i] != fallback) {
            continue;
        }
        let fneg: u64 = (0..3).filter(|&i| labels[i] == Label::Negative).map(|i| counts.0[i].positives).sum();
        let fpos: u64 = (0..3).filter(|&i| labels[i] == Label::Positive).map(|i| counts.0[i].negatives).sum();
        if fn_allowance.is_some_and(|a| fneg > a) {
            continue;
        }
        let ones = mask.count_ones();
        let cand = Labeling {
            labels,
            false_negatives: fneg,
            false_positives: fpos,
        };
        // masks ascend, so an earlier mask is lexicographically smaller
        let better = match &best {
            None => true,
            Some((b, b_ones)) => fpos < b.false_positives || (fpos == b.false_positives && ones > *b_ones),
        };
        if better {
            best = Some((cand, ones));
        }
    }
    best.map(|(l, _)| l)
}

/// Sample-size limits applied in strict mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrictLimits {
    pub hypotheses: u128,
    pub sample_complexity: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowParams {
    pub eta: f64,
    pub delta: f64,
    pub costs: CostConfig,
    /// Tests the tree may use, in tie-break order.
    pub tests: Vec<Test>,
    /// Nodes with fewer records are not split.
    pub min_samples: usize,
    pub strict: Option<StrictLimits>,
    pub prune: bool,
}

impl GrowParams {
    pub fn new(eta: f64, delta: f64, costs: CostConfig) -> Self {
        Self {
            eta,
            delta,
            costs,
            tests: Test::ALL.to_vec(),
            min_samples: 10,
            strict: None,
            prune: true,
        }
    }
}

/// Training false-negative allowance for one partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnBudget {
    pub positives: u64,
    /// Largest admissible training FNR; absent when there are no positives.
    pub fnr_cap: Option<f64>,
    pub max_false_negatives: u64,
}

/// Why a partition cannot host a tree meeting the FNR target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub samples: u64,
    pub positives: u64,
    pub reason: String,
    /// Positives needed before a zero training FNR certifies the target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub required_positives: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Induction {
    Feasible { tree: DecisionTree, budget: FnBudget },
    Infeasible(FeasibilityVerdict),
}

impl Induction {
    pub fn tree(&self) -> Option<&DecisionTree> {
        match self {
            Induction::Feasible { tree, .. } => Some(tree),
            Induction::Infeasible(_) => None,
        }
    }
}

/// FN allowance for a partition with `samples` records of which `positives`
/// are positive, or the reason none exists.
pub fn fn_budget(samples: u64, positives: u64, params: &GrowParams) -> Result<Result<FnBudget, FeasibilityVerdict>, TreeError> {
    let verdict = |reason: String, required_positives| FeasibilityVerdict {
        samples,
        positives,
        reason,
        required_positives,
    };
    let mut target = params.eta;
    if let Some(limits) = params.strict {
        if samples < limits.sample_complexity {
            return Ok(Err(verdict(
                format!("{samples} samples is below the required {}", limits.sample_complexity),
                None,
            )));
        }
        let slack = eq7_slack(limits.hypotheses, params.delta, samples);
        target = params.eta - slack;
        if target <= 0.0 {
            return Ok(Err(verdict(
                format!("generalization slack {slack:.4} leaves no room under eta {}", params.eta),
                None,
            )));
        }
    }
    if positives == 0 {
        max_empirical_fnr(params.eta, params.delta, 1)?;
        return Ok(Ok(FnBudget {
            positives,
            fnr_cap: None,
            max_false_negatives: 0,
        }));
    }
    let cap = match max_empirical_fnr(params.eta, params.delta, positives)? {
        FnrCap::Feasible { max_fnr } => max_fnr.min(target),
        FnrCap::InfeasibleAtZero { required } => {
            return Ok(Err(verdict(
                format!("{positives} positives cannot certify an FNR of {}", params.eta),
                Some(required),
            )))
        }
    };
    Ok(Ok(FnBudget {
        positives,
        fnr_cap: Some(cap),
        max_false_negatives: (cap * positives as f64 + 1e-9).floor() as u64,
    }))
}

struct Item {
    label: Label,
    buckets: [Option<Bucket>; 3],
}

struct Candidate {
    test: Test,
    labeling: Labeling,
    parts: [Vec<usize>; 3],
    routed: usize,
    score: f64,
}

struct Grower<'p> {
    items: Vec<Item>,
    params: &'p GrowParams,
    negatives: u64,
    samples: f64,
    max_fn: u64,
    fn_total: u64,
    fp_total: u64,
    cost_total: f64,
}

impl Grower<'_> {
    fn combined(&self, fp: u64, cost: f64) -> f64 {
        let fpr = if self.negatives == 0 {
            0.0
        } else {
            fp as f64 / self.negatives as f64
        };
        self.params.costs.gamma * fpr + (1.0 - self.params.costs.gamma) * cost / self.samples
    }

    fn counts(&self, idx: &[usize]) -> NodeCounts {
        let mut c = NodeCounts::default();
        for &i in idx {
            c.add(self.items[i].label);
        }
        c
    }

    fn best_split(&self, idx: &[usize], label: Label, counts: NodeCounts, used: &[Test]) -> Option<Candidate> {
        let gamma = self.params.costs.gamma;
        let fn_outside = self.fn_total - if label == Label::Negative { counts.positives } else { 0 };
        let fp_outside = self.fp_total - if label == Label::Positive { counts.negatives } else { 0 };
        let allowance = self.max_fn.saturating_sub(fn_outside);
        let fallback = counts.majority();
        let mut best: Option<Candidate> = None;
        for &test in &self.params.tests {
            if used.contains(&test) {
                continue;
            }
            let mut parts: [Vec<usize>; 3] = Default::default();
            let mut bc = BucketCounts::default();
            for &i in idx {
                if let Some(b) = self.items[i].buckets[test.index()] {
                    parts[b.index()].push(i);
                    bc.0[b.index()].add(self.items[i].label);
                }
            }
            let routed = parts.iter().map(Vec::len).sum::<usize>();
            if routed == 0 {
                continue;
            }
            let gain = bc.information_gain();
            if gain <= EPS {
                continue;
            }
            let Some(labeling) = label_leaves(&bc, fallback, Some(allowance)) else {
                continue;
            };
            let fpr = if self.negatives == 0 {
                0.0
            } else {
                (fp_outside + labeling.false_positives) as f64 / self.negatives as f64
            };
            let cost = self.params.costs.cost(test);
            let denom = gamma * fpr + (1.0 - gamma) * cost;
            let score = if denom > 0.0 { gain / denom } else { f64::INFINITY };
            let replace = match &best {
                None => true,
                Some(b) => score > b.score + EPS || ((score - b.score).abs() <= EPS && cost < self.params.costs.cost(b.test)),
            };
            if replace {
                best = Some(Candidate {
                    test,
                    labeling,
                    parts,
                    routed,
                    score,
                });
            }
        }
        best
    }

    /// The root takes its best test outright; deeper nodes split only when
    /// the partition objective strictly drops.
    fn expand(&mut self, idx: &[usize], label: Label, used: &mut Vec<Test>) -> Node {
        let counts = self.counts(idx);
        let pure = counts.positives == 0 || counts.negatives == 0;
        if idx.len() < self.params.min_samples || pure || used.len() == self.params.tests.len() {
            return Node::leaf(label, counts);
        }
        let Some(cand) = self.best_split(idx, label, counts, used) else {
            return Node::leaf(label, counts);
        };
        let leaf_fn = if label == Label::Negative { counts.positives } else { 0 };
        let leaf_fp = if label == Label::Positive { counts.negatives } else { 0 };
        let new_fn = self.fn_total - leaf_fn + cand.labeling.false_negatives;
        let new_fp = self.fp_total - leaf_fp + cand.labeling.false_positives;
        let new_cost = self.cost_total + cand.routed as f64 * self.params.costs.cost(cand.test);
        let improves = self.combined(new_fp, new_cost) < self.combined(self.fp_total, self.cost_total) - EPS;
        if new_fn > self.max_fn || (!used.is_empty() && !improves) {
            return Node::leaf(label, counts);
        }
        self.fn_total = new_fn;
        self.fp_total = new_fp;
        self.cost_total = new_cost;
        used.push(cand.test);
        let mut children = Vec::with_capacity(3);
        for (b, part) in cand.parts.iter().enumerate() {
            children.push(self.expand(part, cand.labeling.labels[b], used));
        }
        used.pop();
        let children: [Node; 3] = children.try_into().expect("three children");
        Node::internal(cand.test, counts, children)
    }
}

fn items(records: &[&TrainingRecord]) -> Vec<Item> {
    records
        .iter()
        .map(|r| Item {
            label: r.label,
            buckets: Test::ALL.map(|t| r.screening.get(t).map(|s| s.bucket())),
        })
        .collect()
}

/// Grows a screening tree whose training FNR stays within the Wilson-certified
/// cap for `params.eta`, then optionally prunes it.
pub fn grow_tree(records: &[&TrainingRecord], params: &GrowParams) -> Result<Induction, TreeError> {
    if records.is_empty() {
        return Err(TreeError::EmptyTrainingSet);
    }
    let positives = records.iter().filter(|r| r.label.is_positive()).count() as u64;
    let budget = match fn_budget(records.len() as u64, positives, params)? {
        Ok(b) => b,
        Err(v) => return Ok(Induction::Infeasible(v)),
    };
    let items = items(records);
    let negatives = records.len() as u64 - positives;
    let root_label = Label::from_bool(positives > budget.max_false_negatives);
    let mut grower = Grower {
        items,
        params,
        negatives,
        samples: records.len() as f64,
        max_fn: budget.max_false_negatives,
        fn_total: if root_label == Label::Negative { positives } else { 0 },
        fp_total: if root_label == Label::Positive { negatives } else { 0 },
        cost_total: 0.0,
    };
    let all: Vec<usize> = (0..records.len()).collect();
    let root = grower.expand(&all, root_label, &mut Vec::new());
    let mut tree = DecisionTree::new(root);
    if params.prune {
        tree = prune_counts(&tree, params.delta, budget.max_false_negatives);
    }
    debug_assert!(tree.root.false_negatives() <= budget.max_false_negatives);
    Ok(Induction::Feasible { tree, budget })
}

/// Unconstrained C4.5-style tree: splits on the largest information gain,
/// labels leaves by majority and prunes on pessimistic error alone.
pub fn baseline_tree(records: &[&TrainingRecord], tests: &[Test], min_samples: usize, delta: f64) -> Result<DecisionTree, TreeError> {
    if records.is_empty() {
        return Err(TreeError::EmptyTrainingSet);
    }
    fn build(items: &[Item], idx: &[usize], label: Label, tests: &[Test], used: &mut Vec<Test>, min_samples: usize) -> Node {
        let mut counts = NodeCounts::default();
        for &i in idx {
            counts.add(items[i].label);
        }
        if idx.len() < min_samples || counts.positives == 0 || counts.negatives == 0 {
            return Node::leaf(label, counts);
        }
        let mut best: Option<(f64, Test, [Vec<usize>; 3], BucketCounts)> = None;
        for &test in tests.iter().filter(|t| !used.contains(t)) {
            let mut parts: [Vec<usize>; 3] = Default::default();
            let mut bc = BucketCounts::default();
            for &i in idx {
                if let Some(b) = items[i].buckets[test.index()] {
                    parts[b.index()].push(i);
                    bc.0[b.index()].add(items[i].label);
                }
            }
            let gain = bc.information_gain();
            if gain > EPS && best.as_ref().is_none_or(|(g, ..)| gain > g + EPS) {
                best = Some((gain, test, parts, bc));
            }
        }
        let Some((_, test, parts, bc)) = best else {
            return Node::leaf(label, counts);
        };
        used.push(test);
        let children: Vec<Node> = (0..3)
            .map(|b| {
                let l = if bc.0[b].total() == 0 { counts.majority() } else { bc.0[b].majority() };
                build(items, &parts[b], l, tests, used, min_samples)
            })
            .collect();
        used.pop();
        Node::internal(test, counts, children.try_into().expect("three children"))
    }
    let items = items(records);
    let all: Vec<usize> = (0..records.len()).collect();
    let mut counts = NodeCounts::default();
    for it in &items {
        counts.add(it.label);
    }
    let root = build(&items, &all, counts.majority(), tests, &mut Vec::new(), min_samples);
    Ok(prune_counts(&DecisionTree::new(root), delta, u64::MAX))
}
