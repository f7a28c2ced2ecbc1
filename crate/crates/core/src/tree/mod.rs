//! Screening trees: internal nodes are tests with one child per BI-RADS
//! bucket, leaves carry a final label. Also houses tree evaluation and the
//! induction, pruning and sample-size machinery.

pub mod complexity;
mod grow;
mod prune;
pub mod wilson;

use serde::{Deserialize, Serialize};

use crate::error::TreeError;
use crate::model::{Bucket, CostConfig, Label, ScreeningObservation, Test, TrainingRecord};

pub use complexity::{count_hypotheses, eq7_slack, personalization_bound, sample_complexity};
pub use grow::{
    baseline_tree, fn_budget, grow_tree, information_gain, label_leaves, BucketCounts, FeasibilityVerdict, FnBudget, GrowParams,
    Induction, Labeling, StrictLimits,
};
pub use prune::{pessimistic_error, prune, prune_counts};
pub use wilson::{max_empirical_fnr, wilson_interval, wilson_upper, FnrCap};

/// Training-set class counts of the records that reached a node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounts {
    pub positives: u64,
    pub negatives: u64,
}

impl NodeCounts {
    pub fn total(&self) -> u64 {
        self.positives + self.negatives
    }

    /// Majority label; ties go to the positive (biopsy) side.
    pub fn majority(&self) -> Label {
        Label::from_bool(self.positives >= self.negatives)
    }

    /// Records whose label differs from `label`.
    pub fn errors(&self, label: Label) -> u64 {
        match label {
            Label::Positive => self.negatives,
            Label::Negative => self.positives,
        }
    }

    fn add(&mut self, label: Label) {
        match label {
            Label::Positive => self.positives += 1,
            Label::Negative => self.negatives += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Children {
    #[serde(rename = "B1")]
    pub b1: Node,
    #[serde(rename = "B2")]
    pub b2: Node,
    #[serde(rename = "B3")]
    pub b3: Node,
}

impl Children {
    pub fn new([b1, b2, b3]: [Node; 3]) -> Self {
        Self { b1, b2, b3 }
    }

    pub fn get(&self, bucket: Bucket) -> &Node {
        match bucket {
            Bucket::B1 => &self.b1,
            Bucket::B2 => &self.b2,
            Bucket::B3 => &self.b3,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Bucket, &Node)> {
        [(Bucket::B1, &self.b1), (Bucket::B2, &self.b2), (Bucket::B3, &self.b3)].into_iter()
    }

    fn into_array(self) -> [Node; 3] {
        [self.b1, self.b2, self.b3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Internal {
        test: Test,
        counts: NodeCounts,
        children: Box<Children>,
    },
    Leaf {
        label: Label,
        counts: NodeCounts,
    },
}

impl Node {
    pub fn leaf(label: Label, counts: NodeCounts) -> Self {
        Node::Leaf { label, counts }
    }

    pub fn internal(test: Test, counts: NodeCounts, children: [Node; 3]) -> Self {
        Node::Internal {
            test,
            counts,
            children: Box::new(Children::new(children)),
        }
    }

    pub fn counts(&self) -> NodeCounts {
        match self {
            Node::Internal { counts, .. } | Node::Leaf { counts, .. } => *counts,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Node>) {
        match self {
            Node::Leaf { .. } => out.push(self),
            Node::Internal { children, .. } => {
                for (_, child) in children.iter() {
                    child.collect_leaves(out);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Internal { children, .. } => 1 + children.iter().map(|(_, c)| c.depth()).max().unwrap_or(0),
        }
    }

    /// Training false negatives under the stored leaf counts.
    pub fn false_negatives(&self) -> u64 {
        self.leaves()
            .into_iter()
            .map(|l| match l {
                Node::Leaf {
                    label: Label::Negative,
                    counts,
                } => counts.positives,
                _ => 0,
            })
            .sum()
    }
}

/// Outcome of running one complete observation through a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: Label,
    pub path: Vec<(Test, Bucket)>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionTree {
    pub root: Node,
}

impl DecisionTree {
    pub fn new(root: Node) -> Self {
        Self { root }
    }

    pub fn leaf(label: Label) -> Self {
        Self::new(Node::leaf(label, NodeCounts::default()))
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Checks structural invariants: no test repeats on a path.
    pub fn validate(&self) -> Result<(), String> {
        fn walk(node: &Node, used: &mut Vec<Test>) -> Result<(), String> {
            if let Node::Internal { test, children, .. } = node {
                if used.contains(test) {
                    return Err(format!("{test} repeats on a root-to-leaf path"));
                }
                used.push(*test);
                for (_, child) in children.iter() {
                    walk(child, used)?;
                }
                used.pop();
            }
            Ok(())
        }
        walk(&self.root, &mut Vec::new())
    }

    pub fn classify(&self, obs: &ScreeningObservation, costs: &CostConfig) -> Result<Classification, TreeError> {
        let mut node = &self.root;
        let mut path = Vec::new();
        let mut cost = 0.0;
        loop {
            match node {
                Node::Leaf { label, .. } => {
                    return Ok(Classification {
                        label: *label,
                        path,
                        cost,
                    })
                }
                Node::Internal { test, children, .. } => {
                    let score = obs.get(*test).ok_or(TreeError::MissingRequiredOutcome(*test))?;
                    cost += costs.cost(*test);
                    let bucket = score.bucket();
                    path.push((*test, bucket));
                    node = children.get(bucket);
                }
            }
        }
    }

    /// Recomputes every node's counts from a set of records. Records missing
    /// an outcome the tree needs stop counting below that node.
    pub fn recount(&self, records: &[&TrainingRecord]) -> DecisionTree {
        fn walk(node: &Node, recs: &[&TrainingRecord]) -> Node {
            let mut counts = NodeCounts::default();
            for r in recs {
                counts.add(r.label);
            }
            match node {
                Node::Leaf { label, .. } => Node::leaf(*label, counts),
                Node::Internal { test, children, .. } => {
                    let mut parts: [Vec<&TrainingRecord>; 3] = Default::default();
                    for r in recs {
                        if let Some(score) = r.screening.get(*test) {
                            parts[score.bucket().index()].push(r);
                        }
                    }
                    let kids = children.iter().map(|(b, c)| walk(c, &parts[b.index()]));
                    let kids: Vec<Node> = kids.collect();
                    let kids: [Node; 3] = kids.try_into().expect("three children");
                    Node::internal(*test, counts, kids)
                }
            }
        }
        DecisionTree::new(walk(&self.root, records))
    }
}

/// Sum of normalized costs of the tests on the realized root-to-leaf path.
pub fn path_cost(tree: &DecisionTree, obs: &ScreeningObservation, costs: &CostConfig) -> Result<f64, TreeError> {
    tree.classify(obs, costs).map(|c| c.cost)
}

/// Empirical error rates and costs of a tree on a record set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub fnr: f64,
    pub fpr: f64,
    pub mean_cost: f64,
    /// `gamma * fpr + (1 - gamma) * mean_cost`
    pub combined: f64,
    pub positives: u64,
    pub negatives: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub evaluated: u64,
    /// Records skipped because an outcome the tree asked for was missing.
    pub excluded: u64,
}

impl TreeStats {
    /// Builds rates from raw tallies. FNR with no positives and FPR with no
    /// negatives are both reported as zero.
    pub fn from_tallies(
        positives: u64,
        negatives: u64,
        false_negatives: u64,
        false_positives: u64,
        cost_sum: f64,
        excluded: u64,
        gamma: f64,
    ) -> Self {
        let evaluated = positives + negatives;
        let fnr = if positives == 0 {
            0.0
        } else {
            false_negatives as f64 / positives as f64
        };
        let fpr = if negatives == 0 {
            0.0
        } else {
            false_positives as f64 / negatives as f64
        };
        let mean_cost = if evaluated == 0 {
            0.0
        } else {
            cost_sum / evaluated as f64
        };
        Self {
            fnr,
            fpr,
            mean_cost,
            combined: gamma * fpr + (1.0 - gamma) * mean_cost,
            positives,
            negatives,
            false_negatives,
            false_positives,
            evaluated,
            excluded,
        }
    }
}

pub fn evaluate_tree(tree: &DecisionTree, records: &[&TrainingRecord], costs: &CostConfig) -> TreeStats {
    let (mut pos, mut neg, mut fneg, mut fpos, mut excluded) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut cost_sum = 0.0;
    for r in records {
        let Ok(c) = tree.classify(&r.screening, costs) else {
            excluded += 1;
            continue;
        };
        cost_sum += c.cost;
        match (r.label, c.label) {
            (Label::Positive, predicted) => {
                pos += 1;
                if predicted == Label::Negative {
                    fneg += 1;
                }
            }
            (Label::Negative, predicted) => {
                neg += 1;
                if predicted == Label::Positive {
                    fpos += 1;
                }
            }
        }
    }
    TreeStats::from_tallies(pos, neg, fneg, fpos, cost_sum, excluded, costs.gamma)
}
