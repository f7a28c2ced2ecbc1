//! Reference computations for checking the engine from the outside: a
//! bisection normal quantile, the closed-form Wilson limit, and brute-force
//! enumeration of screening trees.

use screenwise_core::model::{Bucket, CostConfig, Label, Test, TrainingRecord};
use statrs::function::erf::erfc;

/// Upper-tail standard normal quantile: the `z` with `P(Z > z) = p`.
/// Accurate to about 1e-10, limited by `erfc`.
pub fn upper_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let tail = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Wilson score upper limit for proportion `p` over `n` trials.
pub fn wilson_upper(p: f64, n: u64, z: f64) -> f64 {
    let n = n as f64;
    let z2 = z * z;
    (p + z2 / (2.0 * n) + z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()) / (1.0 + z2 / n)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tree {
    Leaf(Label),
    Split(Test, Box<[Tree; 3]>),
}

/// Every tree over `tests` where no test repeats on a path and each
/// internal node has one child per bucket.
pub fn all_trees(tests: &[Test]) -> Vec<Tree> {
    let mut out = vec![Tree::Leaf(Label::Negative), Tree::Leaf(Label::Positive)];
    for (i, &t) in tests.iter().enumerate() {
        let rest: Vec<Test> = tests.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
        let subs = all_trees(&rest);
        for a in &subs {
            for b in &subs {
                for c in &subs {
                    out.push(Tree::Split(t, Box::new([a.clone(), b.clone(), c.clone()])));
                }
            }
        }
    }
    out
}

fn bucket_slot(b: Bucket) -> usize {
    match b {
        Bucket::B1 => 0,
        Bucket::B2 => 1,
        Bucket::B3 => 2,
    }
}

/// Label and summed test cost for a record with every outcome observed.
pub fn run_tree(tree: &Tree, record: &TrainingRecord, costs: &CostConfig) -> (Label, f64) {
    let mut node = tree;
    let mut cost = 0.0;
    loop {
        match node {
            Tree::Leaf(l) => return (*l, cost),
            Tree::Split(t, kids) => {
                cost += costs.cost(*t);
                let score = record.screening.get(*t).expect("complete record");
                node = &kids[bucket_slot(score.bucket())];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub false_negatives: u64,
    pub positives: u64,
    pub fpr: f64,
    pub mean_cost: f64,
    /// `gamma * fpr + (1 - gamma) * mean_cost`
    pub objective: f64,
}

impl Score {
    pub fn fnr(&self) -> f64 {
        if self.positives == 0 {
            0.0
        } else {
            self.false_negatives as f64 / self.positives as f64
        }
    }

    /// Whether the Wilson limit on the training FNR stays within `eta`.
    pub fn certifies(&self, eta: f64, z: f64) -> bool {
        self.positives == 0 || wilson_upper(self.fnr(), self.positives, z) <= eta + 1e-9
    }
}

/// Scores a labelling of records given as `(truth, predicted, cost)`.
pub fn tally(outcomes: impl IntoIterator<Item = (Label, Label, f64)>, gamma: f64) -> Score {
    let (mut pos, mut neg, mut fneg, mut fpos, mut n, mut cost) = (0u64, 0u64, 0u64, 0u64, 0u64, 0.0);
    for (truth, predicted, c) in outcomes {
        n += 1;
        cost += c;
        match truth {
            Label::Positive => {
                pos += 1;
                fneg += u64::from(predicted == Label::Negative);
            }
            Label::Negative => {
                neg += 1;
                fpos += u64::from(predicted == Label::Positive);
            }
        }
    }
    let fpr = if neg == 0 { 0.0 } else { fpos as f64 / neg as f64 };
    let mean_cost = if n == 0 { 0.0 } else { cost / n as f64 };
    Score {
        false_negatives: fneg,
        positives: pos,
        fpr,
        mean_cost,
        objective: gamma * fpr + (1.0 - gamma) * mean_cost,
    }
}

/// Closed-form hypothesis count `h(s) = 2 + s * h(s-1)^3`.
pub fn hypotheses(s: u32) -> u128 {
    (1..=s).fold(2u128, |h, k| 2 + k as u128 * h * h * h)
}
