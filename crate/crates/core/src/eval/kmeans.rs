//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// Cluster of every point; clusters are numbered by decreasing size,
    /// ties by their first member.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

const MAX_ITERATIONS: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters `points` into `k` non-empty groups; the restart with the lowest
/// inertia wins. Requires `1 <= k <= points.len()`.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    relabel(best.expect("at least one restart"), k)
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        fill_empty_clusters(points, &centroids, &mut assignment, k);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    KMeans {
        assignment,
        centroids,
        inertia,
    }
}

/// Moves the point farthest from its centroid into every empty cluster.
fn fill_empty_clusters(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        assignment.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a], &centroids[assignment[a]]);
                let db = sq_dist(&points[b], &centroids[assignment[b]]);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two points");
        assignment[donor] = empty;
    }
}

fn relabel(run: KMeans, k: usize) -> KMeans {
    let mut order: Vec<usize> = (0..k).collect();
    let size = |c: usize| run.assignment.iter().filter(|&&a| a == c).count();
    let first = |c: usize| run.assignment.iter().position(|&a| a == c).unwrap_or(usize::MAX);
    order.sort_by(|&a, &b| size(b).cmp(&size(a)).then(first(a).cmp(&first(b))));
    let mut new_label = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        new_label[old] = new;
    }
    KMeans {
        assignment: run.assignment.iter().map(|&c| new_label[c]).collect(),
        centroids: order.iter().map(|&c| run.centroids[c].clone()).collect(),
        inertia: run.inertia,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_groups() {
        let points: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 10.0, 10.1, 5.0]
            .iter()
            .map(|&x| vec![x])
            .collect();
        let r = kmeans(&points, 3, 10, 1);
        assert_eq!(r.assignment[0], r.assignment[1]);
        assert_eq!(r.assignment[1], r.assignment[2]);
        assert_eq!(r.assignment[3], r.assignment[4]);
        assert_ne!(r.assignment[0], r.assignment[3]);
        assert_ne!(r.assignment[5], r.assignment[0]);
        assert_eq!(r.assignment[0], 0);
    }

    #[test]
    fn identical_points_still_fill_every_cluster() {
        let points = vec![vec![1.0, 1.0]; 4];
        let r = kmeans(&points, 3, 2, 0);
        for c in 0..3 {
            assert!(r.assignment.contains(&c));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let points: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        assert_eq!(kmeans(&points, 4, 10, 3), kmeans(&points, 4, 10, 3));
    }
}
