//! Risk-initialized 2-means splitting under the blended patient distance.

use serde::{Deserialize, Serialize};

use crate::error::{ClusterError, SchemaMismatch};
use crate::risk::{blended_distance, RiskModel};

/// Iteration cap on top of the relative-improvement test.
pub const MAX_ITERATIONS: usize = 100;
pub const DEFAULT_PRECISION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub position: Vec<f64>,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub centroids: [Centroid; 2],
    /// Cluster index (0 or 1) per input point.
    pub assignments: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each accepted iteration; nonincreasing.
    pub history: Vec<f64>,
    /// Every point is at distance zero from every other one.
    pub degenerate: bool,
    /// Indices of the starting centroids (lowest and highest risk).
    pub seeds: (usize, usize),
}

/// A metric context: blending weight, risk model and horizon.
pub struct Metric<'a, R: RiskModel + ?Sized> {
    pub beta: f64,
    pub model: &'a R,
    pub horizon_years: u32,
}

impl<R: RiskModel + ?Sized> Clone for Metric<'_, R> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<R: RiskModel + ?Sized> Copy for Metric<'_, R> {}

impl<'a, R: RiskModel + ?Sized> Metric<'a, R> {
    pub fn new(beta: f64, model: &'a R, horizon_years: u32) -> Self {
        Self {
            beta,
            model,
            horizon_years,
        }
    }

    pub fn risk(&self, x: &[f64]) -> f64 {
        self.model.risk(x, self.horizon_years)
    }
}

fn nearest(point: &[f64], risk: f64, centroids: &[Vec<f64>], centroid_risks: &[f64], beta: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, (c, rc)) in centroids.iter().zip(centroid_risks).enumerate() {
        let d = blended_distance(point, risk, c, *rc, beta);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn assign<R: RiskModel + ?Sized>(
    point: &[f64],
    centroids: &[Centroid],
    metric: Metric<'_, R>,
) -> Result<usize, ClusterError> {
    if centroids.is_empty() {
        return Err(ClusterError::NoCentroids);
    }
    for c in centroids {
        if c.position.len() != point.len() {
            return Err(SchemaMismatch {
                left: point.len(),
                right: c.position.len(),
            }
            .into());
        }
    }
    let positions: Vec<Vec<f64>> = centroids.iter().map(|c| c.position.clone()).collect();
    let risks: Vec<f64> = positions.iter().map(|p| metric.risk(p)).collect();
    Ok(nearest(point, metric.risk(point), &positions, &risks, metric.beta))
}

/// Batch assignment of many points with per-point risks already known.
pub fn assign_all(points: &[&[f64]], point_risks: &[f64], centroids: &[Vec<f64>], centroid_risks: &[f64], beta: f64) -> Vec<usize> {
    points
        .iter()
        .zip(point_risks)
        .map(|(p, r)| nearest(p, *r, centroids, centroid_risks, beta))
        .collect()
}

/// Mean distance from each point to the centroid it is assigned to.
pub fn objective<R: RiskModel + ?Sized>(
    points: &[&[f64]],
    assignments: &[usize],
    centroids: &[Vec<f64>],
    metric: Metric<'_, R>,
) -> f64 {
    let risks: Vec<f64> = points.iter().map(|p| metric.risk(p)).collect();
    let centroid_risks: Vec<f64> = centroids.iter().map(|c| metric.risk(c)).collect();
    objective_cached(points, &risks, assignments, centroids, &centroid_risks, metric.beta)
}

fn objective_cached(
    points: &[&[f64]],
    risks: &[f64],
    assignments: &[usize],
    centroids: &[Vec<f64>],
    centroid_risks: &[f64],
    beta: f64,
) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let total: f64 = points
        .iter()
        .zip(risks)
        .zip(assignments)
        .map(|((p, r), &j)| blended_distance(p, *r, &centroids[j], centroid_risks[j], beta))
        .sum();
    total / points.len() as f64
}

fn mean_of(points: &[&[f64]], assignments: &[usize], cluster: usize, dim: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for (p, &a) in points.iter().zip(assignments) {
        if a == cluster {
            count += 1;
            for (s, v) in sum.iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
    }
    (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect())
}

struct IterState {
    centroids: [Vec<f64>; 2],
    centroid_risks: [f64; 2],
    assignments: Vec<usize>,
}

/// Splits a point set into two clusters.
///
/// Starts from the lowest- and highest-risk points, then alternates
/// nearest-centroid assignment and coordinate-mean updates until the relative
/// objective improvement drops to `precision`. An iteration that would raise
/// the objective is discarded and ends the loop.
pub fn split<R: RiskModel + ?Sized>(
    points: &[&[f64]],
    metric: Metric<'_, R>,
    precision: f64,
) -> Result<SplitResult, ClusterError> {
    if points.len() < 2 {
        return Err(ClusterError::TooFewPoints(points.len()));
    }
    if !(precision > 0.0) {
        return Err(ClusterError::InvalidPrecision);
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(SchemaMismatch {
            left: dim,
            right: bad.len(),
        }
        .into());
    }
    let beta = metric.beta;
    let risks: Vec<f64> = points.iter().map(|p| metric.risk(p)).collect();

    let mut i_min = 0;
    let mut i_max = 0;
    for (i, &r) in risks.iter().enumerate() {
        if r < risks[i_min] {
            i_min = i;
        }
        if r > risks[i_max] {
            i_max = i;
        }
    }

    let degenerate = points
        .iter()
        .zip(&risks)
        .all(|(p, r)| blended_distance(points[0], risks[0], p, *r, beta) == 0.0);
    if degenerate {
        let c = points[0].to_vec();
        return Ok(SplitResult {
            centroids: [
                Centroid {
                    position: c.clone(),
                    members: points.len(),
                },
                Centroid {
                    position: c,
                    members: 0,
                },
            ],
            assignments: vec![0; points.len()],
            objective: 0.0,
            iterations: 0,
            history: vec![],
            degenerate: true,
            seeds: (i_min, i_max),
        });
    }

    let mut state = IterState {
        centroids: [points[i_min].to_vec(), points[i_max].to_vec()],
        centroid_risks: [risks[i_min], risks[i_max]],
        assignments: vec![0; points.len()],
    };
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let mut assignments = assign_all(points, &risks, &state.centroids, &state.centroid_risks, beta);
        let mut next: [Option<Vec<f64>>; 2] = [
            mean_of(points, &assignments, 0, dim),
            mean_of(points, &assignments, 1, dim),
        ];
        // Empty-cluster repair: reseed at the point farthest from the other
        // centroid and move it over.
        for empty in 0..2 {
            if next[empty].is_some() {
                continue;
            }
            let other = 1 - empty;
            let other_pos = next[other].clone().expect("one cluster is nonempty");
            let other_risk = metric.risk(&other_pos);
            let mut far = 0;
            let mut far_d = f64::NEG_INFINITY;
            for (i, (p, r)) in points.iter().zip(&risks).enumerate() {
                let d = blended_distance(p, *r, &other_pos, other_risk, beta);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            assignments[far] = empty;
            next[empty] = Some(points[far].to_vec());
            next[other] = mean_of(points, &assignments, other, dim);
            if next[other].is_none() {
                // two-point input where both landed together
                next[other] = Some(other_pos);
            }
        }
        let centroids = [next[0].take().unwrap(), next[1].take().unwrap()];
        let centroid_risks = [metric.risk(&centroids[0]), metric.risk(&centroids[1])];
        let d = objective_cached(points, &risks, &assignments, &centroids, &centroid_risks, beta);

        if let Some(&prev) = history.last() {
            if d > prev {
                break;
            }
        }
        iterations += 1;
        state = IterState {
            centroids,
            centroid_risks,
            assignments,
        };
        let prev = history.last().copied();
        history.push(d);
        match prev {
            _ if d == 0.0 => break,
            Some(prev) if (prev - d) / d <= precision => break,
            _ => {}
        }
    }

    // Final membership is nearest-centroid under the returned centroids, so it
    // agrees with `assign`; fall back if that would empty a cluster.
    let final_assign = assign_all(points, &risks, &state.centroids, &state.centroid_risks, beta);
    let assignments = if final_assign.contains(&0) && final_assign.contains(&1) {
        final_assign
    } else {
        state.assignments
    };
    let objective = objective_cached(points, &risks, &assignments, &state.centroids, &state.centroid_risks, beta);
    let members = [
        assignments.iter().filter(|&&a| a == 0).count(),
        assignments.iter().filter(|&&a| a == 1).count(),
    ];
    let [c0, c1] = state.centroids;
    Ok(SplitResult {
        centroids: [
            Centroid {
                position: c0,
                members: members[0],
            },
            Centroid {
                position: c1,
                members: members[1],
            },
        ],
        assignments,
        objective,
        iterations,
        history,
        degenerate: false,
        seeds: (i_min, i_max),
    })
}
