use serde::{Deserialize, Serialize};

use super::{match_partition, PartitionedPolicy};
use crate::error::{ClusterError, SessionError};
use crate::model::{BiRads, Bucket, FeatureVector, Label, Test};
use crate::tree::{wilson_interval, Node, NodeCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingOutcome { test: Test },
    Final { label: Label },
}

/// Current best guess with a two-sided Wilson interval on its error rate,
/// from the training counts of the node the session sits at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub label: Label,
    pub error: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: u64,
}

impl Diagnosis {
    fn at(label: Label, counts: NodeCounts, delta: f64) -> Self {
        let n = counts.total();
        if n == 0 {
            return Self {
                label,
                error: 0.0,
                lower: 0.0,
                upper: 1.0,
                samples: 0,
            };
        }
        let error = counts.errors(label) as f64 / n as f64;
        let (lower, upper) = wilson_interval(error, n, delta).unwrap_or((0.0, 1.0));
        Self {
            label,
            error,
            lower,
            upper,
            samples: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub test: Test,
    pub birads: BiRads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub features: FeatureVector,
    pub partition: usize,
    pub history: Vec<HistoryEntry>,
    pub status: SessionStatus,
    pub diagnosis: Diagnosis,
    /// Sum of normalized costs of the tests taken so far.
    pub cost: f64,
}

fn node_at<'a>(root: &'a Node, history: &[HistoryEntry]) -> &'a Node {
    let mut node = root;
    for h in history {
        match node {
            Node::Internal { children, .. } => node = children.get(h.birads.bucket()),
            Node::Leaf { .. } => break,
        }
    }
    node
}

fn state_of(node: &Node, delta: f64) -> (SessionStatus, Diagnosis) {
    match node {
        Node::Leaf { label, counts } => (SessionStatus::Final { label: *label }, Diagnosis::at(*label, *counts, delta)),
        Node::Internal { test, counts, .. } => (
            SessionStatus::AwaitingOutcome { test: *test },
            Diagnosis::at(counts.majority(), *counts, delta),
        ),
    }
}

impl Session {
    /// Places a patient in a partition and positions the session at the root
    /// of that partition's tree.
    pub fn start(policy: &PartitionedPolicy, id: impl Into<String>, features: FeatureVector) -> Result<Self, ClusterError> {
        let partition = match_partition(&features, policy)?;
        let root = &policy.partitions[partition].tree.root;
        let (status, diagnosis) = state_of(root, policy.config.delta);
        Ok(Self {
            id: id.into(),
            features,
            partition,
            history: Vec::new(),
            status,
            diagnosis,
            cost: 0.0,
        })
    }

    /// Records the outcome of the test currently awaited and moves down the
    /// matching bucket edge.
    pub fn advance(&mut self, policy: &PartitionedPolicy, test: Test, score: BiRads) -> Result<(), SessionError> {
        match self.status {
            SessionStatus::Final { .. } => return Err(SessionError::SessionFinal),
            SessionStatus::AwaitingOutcome { test: expected } if expected != test => {
                return Err(SessionError::WrongTest { expected, got: test })
            }
            SessionStatus::AwaitingOutcome { .. } => {}
        }
        self.history.push(HistoryEntry { test, birads: score });
        self.cost += policy.config.costs.cost(test);
        let node = node_at(&policy.partitions[self.partition].tree.root, &self.history);
        let (status, diagnosis) = state_of(node, policy.config.delta);
        self.status = status;
        self.diagnosis = diagnosis;
        Ok(())
    }

    pub fn is_final(&self) -> bool {
        matches!(self.status, SessionStatus::Final { .. })
    }

    pub fn path(&self) -> Vec<(Test, Bucket)> {
        self.history.iter().map(|h| (h.test, h.birads.bucket())).collect()
    }
}
