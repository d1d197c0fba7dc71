//! Lloyd's K-means over NDVI temporal profiles with deterministic,
//! seed-driven k-means++ initialization and empty-cluster repair.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Number of independent seedings per fit; the best final inertia wins.
/// Lloyd can stall in local optima, and at desk scale a handful of
/// restarts makes that rare enough to test against brute force.
const N_INIT: usize = 8;

/// One converged K-means fit over anonymous points.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every accepted iteration of the winning run;
    /// non-increasing by construction.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, then each next centroid drawn
/// with probability proportional to squared distance from the chosen set.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());

    let mut dist: Vec<f64> = vec![0.0; n];
    while centroids.len() < k {
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (_, d) = nearest_centroid(p, &centroids);
            dist[i] = d;
            total += d;
        }
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if target < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass sits on the chosen centroids; take the
            // first point not yet selected (caller guarantees k distinct).
            (0..n)
                .find(|&i| dist[i] > 0.0 || !centroids.iter().any(|c| c == &points[i]))
                .unwrap_or(0)
        };
        centroids.push(points[next].clone());
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> KmeansFit {
    let n = points.len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for _ in 0..max_iter.max(1) {
        // Assign each point to its nearest centroid (ties → lowest index).
        let next: Vec<usize> =
            points.iter().map(|p| nearest_centroid(p, &centroids).0).collect();
        let converged = next == assignment;
        assignment = next;

        // Repair empty clusters by reseeding them with the point farthest
        // from its own centroid, never draining a singleton cluster.
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        let mut repaired = false;
        for j in 0..k {
            if sizes[j] > 0 {
                continue;
            }
            let mut far_i = usize::MAX;
            let mut far_d = -1.0;
            for (i, p) in points.iter().enumerate() {
                if sizes[assignment[i]] < 2 {
                    continue;
                }
                let d = sq_dist(p, &centroids[assignment[i]]);
                if d > far_d {
                    far_d = d;
                    far_i = i;
                }
            }
            if far_i != usize::MAX {
                sizes[assignment[far_i]] -= 1;
                assignment[far_i] = j;
                sizes[j] = 1;
                repaired = true;
            }
        }

        // Update step: centroids move to member means.
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        for (i, p) in points.iter().enumerate() {
            for (s, v) in sums[assignment[i]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / sizes[j] as f64).collect();
            }
        }

        let inertia: f64 =
            points.iter().zip(assignment.iter()).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
        trace.push(inertia);

        if converged && !repaired {
            break;
        }
    }

    KmeansFit {
        k,
        centroids,
        assignment,
        inertia: *trace.last().expect("at least one iteration"),
        inertia_trace: trace,
    }
}

/// Cluster `points` into `k` groups. Deterministic for a fixed seed; the
/// final assignment is a fixpoint of assign-then-update and the inertia
/// trace is non-increasing.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KmeansFit> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if points.is_empty() {
        return Err(Error::Invalid("no points to cluster".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Invalid("points have mixed dimensions".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    if k > distinct.len() {
        return Err(Error::Invalid(format!(
            "k = {k} exceeds {} distinct profiles",
            distinct.len()
        )));
    }

    let mut best: Option<KmeansFit> = None;
    for restart in 0..N_INIT {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("kmeans-init-{restart}")));
        let fit = lloyd(points, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_obvious_groups() {
        // Brute force over all 2-partitions puts {0.0, 0.1} and {10.0, 10.1}
        // together with centroids 0.05 and 10.05.
        let points = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let fit = kmeans(&points, 2, 7, 100).unwrap();
        assert_eq!(fit.assignment[0], fit.assignment[1]);
        assert_eq!(fit.assignment[2], fit.assignment[3]);
        assert_ne!(fit.assignment[0], fit.assignment[2]);
        let mut cents: Vec<f64> = fit.centroids.iter().map(|c| c[0]).collect();
        cents.sort_by(f64::total_cmp);
        assert!((cents[0] - 0.05).abs() < 1e-12);
        assert!((cents[1] - 10.05).abs() < 1e-12);
        assert!((fit.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let points = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        let fit = kmeans(&points, 3, 1, 100).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut seen: Vec<usize> = fit.assignment.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn identical_points_single_cluster() {
        let points = vec![vec![0.3, 0.3]; 5];
        let fit = kmeans(&points, 1, 9, 100).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert_eq!(fit.centroids[0], vec![0.3, 0.3]);
    }

    #[test]
    fn rejects_k_above_distinct_count() {
        let points = vec![vec![0.3], vec![0.3], vec![0.5]];
        assert!(kmeans(&points, 3, 1, 100).is_err());
        assert!(kmeans(&points, 2, 1, 100).is_ok());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let points: Vec<Vec<f64>> =
            (0..20).map(|i| vec![(i % 5) as f64, (i / 5) as f64 * 0.1]).collect();
        let a = kmeans(&points, 3, 42, 100).unwrap();
        let b = kmeans(&points, 3, 42, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inertia_trace_non_increasing() {
        let points: Vec<Vec<f64>> =
            (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()]).collect();
        let fit = kmeans(&points, 4, 5, 100).unwrap();
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "inertia rose: {:?}", w);
        }
    }

    #[test]
    fn assignment_is_fixpoint() {
        let points: Vec<Vec<f64>> =
            (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()]).collect();
        let fit = kmeans(&points, 4, 5, 100).unwrap();
        for (i, p) in points.iter().enumerate() {
            let (nearest, _) = nearest_centroid(p, &fit.centroids);
            let d_near = sq_dist(p, &fit.centroids[nearest]);
            let d_cur = sq_dist(p, &fit.centroids[fit.assignment[i]]);
            assert!(d_cur <= d_near + 1e-12);
        }
    }
}
