//! Bottom-up pessimistic-error pruning guarded by the false-negative budget.

use super::wilson::wilson_upper;
use super::{DecisionTree, Node};
use crate::model::{Label, TrainingRecord};

fn leaf_upper(errors: u64, n: u64, delta: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    wilson_upper(errors as f64 / n as f64, n, delta).unwrap_or(1.0)
}

/// Coverage-weighted Wilson upper error of a subtree's leaves.
pub fn pessimistic_error(node: &Node, delta: f64) -> f64 {
    let leaves = node.leaves();
    let total: u64 = leaves.iter().map(|l| l.counts().total()).sum();
    if total == 0 {
        return 0.0;
    }
    leaves
        .iter()
        .map(|l| match l {
            Node::Leaf { label, counts } => counts.total() as f64 * leaf_upper(counts.errors(*label), counts.total(), delta),
            Node::Internal { .. } => 0.0,
        })
        .sum::<f64>()
        / total as f64
}

fn uniform_label(node: &Node) -> Option<Label> {
    let mut labels = node.leaves().into_iter().map(|l| match l {
        Node::Leaf { label, .. } => *label,
        Node::Internal { .. } => unreachable!("leaves only"),
    });
    let first = labels.next()?;
    labels.all(|l| l == first).then_some(first)
}

fn prune_node(node: Node, delta: f64, fn_total: &mut u64, max_fn: u64) -> Node {
    let Node::Internal { test, counts, children } = node else {
        return node;
    };
    let mut kids = Vec::with_capacity(3);
    for child in children.into_array() {
        kids.push(prune_node(child, delta, fn_total, max_fn));
    }
    let node = Node::internal(test, counts, kids.try_into().expect("three children"));
    let collapse = uniform_label(&node).or_else(|| {
        let label = counts.majority();
        let as_leaf = leaf_upper(counts.errors(label), counts.total(), delta);
        (as_leaf <= pessimistic_error(&node, delta) + 1e-12).then_some(label)
    });
    if let Some(label) = collapse {
        let leaf_fn = if label == Label::Negative { counts.positives } else { 0 };
        let after = *fn_total - node.false_negatives() + leaf_fn;
        if after <= max_fn {
            *fn_total = after;
            return Node::leaf(label, counts);
        }
    }
    node
}

/// Prunes using the counts stored in the tree. A subtree is replaced by a
/// leaf when its leaves already agree, or when the leaf's pessimistic error
/// does not exceed the subtree's, provided the tree's training false
/// negatives stay within `max_false_negatives`.
pub fn prune_counts(tree: &DecisionTree, delta: f64, max_false_negatives: u64) -> DecisionTree {
    let mut fn_total = tree.root.false_negatives();
    DecisionTree::new(prune_node(tree.root.clone(), delta, &mut fn_total, max_false_negatives))
}

/// Recounts the tree on `records` and prunes it.
pub fn prune(tree: &DecisionTree, records: &[&TrainingRecord], delta: f64, max_false_negatives: u64) -> DecisionTree {
    prune_counts(&tree.recount(records), delta, max_false_negatives)
}
