use serde::Serialize;

use crate::embedding::Model;
use crate::error::{Error, Result};
use crate::matrix::{norm, Real};
use crate::model::ModelParams;

use super::kmeans::kmeans;

/// Restarts of k-means when clustering positional features.
pub const CLUSTER_RESTARTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositionImportance {
    pub position: i32,
    pub norm: f64,
    /// Min-max scaled over all positions of the window.
    pub scaled: f64,
}

fn positional<F: Real>(params: &ModelParams<F>) -> Result<&crate::matrix::Matrix<F>> {
    match (&params.positional, params.kind().is_positional()) {
        (Some(d), true) => Ok(d),
        _ => Err(Error::NotPositional),
    }
}

/// ℓ₂ norm of every `d_p`, min-max scaled to `[0, 1]`. If every norm is
/// the same the scaled values are all 1.
pub fn position_importance<F: Real>(params: &ModelParams<F>) -> Result<Vec<PositionImportance>> {
    let d = positional(params)?;
    let norms: Vec<(i32, f64)> = params
        .positions()
        .into_iter()
        .map(|p| (p, norm(d.row(params.position_row(p).unwrap())).to_f64()))
        .collect();
    let min = norms.iter().map(|n| n.1).fold(f64::INFINITY, f64::min);
    let max = norms.iter().map(|n| n.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(norms
        .into_iter()
        .map(|(position, n)| PositionImportance {
            position,
            norm: n,
            scaled: if max > min { (n - min) / (max - min) } else { 1.0 },
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureClustering {
    pub k: usize,
    /// Cluster of every positional feature `j < D'`.
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    pub positions: Vec<i32>,
    /// `curves[J][i]`: mean of `|d_{p,j}|` over `j ∈ J` at `positions[i]`.
    pub curves: Vec<Vec<f64>>,
}

impl FeatureClustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(j, _)| j)
    }
}

/// Groups the positional features by k-means on their absolute profiles
/// `(|d_{p,j}|)_p`, with k-means++ seeding and [`CLUSTER_RESTARTS`] restarts.
pub fn cluster_positional_features<F: Real>(
    params: &ModelParams<F>,
    k: usize,
    seed: u64,
) -> Result<FeatureClustering> {
    let d = positional(params)?;
    let dp = params.positional_dim();
    if k == 0 || k > dp {
        return Err(Error::InvalidInput(format!(
            "cluster count {k} must be between 1 and the {dp} positional features"
        )));
    }
    let positions = params.positions();
    let points: Vec<Vec<f64>> = (0..dp)
        .map(|j| d.iter_rows().map(|row| row[j].to_f64().abs()).collect())
        .collect();
    let result = kmeans(&points, k, CLUSTER_RESTARTS, seed);
    let mut sizes = vec![0; k];
    result.assignment.iter().for_each(|&c| sizes[c] += 1);
    let curves = (0..k)
        .map(|c| {
            positions
                .iter()
                .map(|&p| {
                    let row = params.position_row(p).unwrap();
                    let sum: f64 = (0..dp)
                        .filter(|&j| result.assignment[j] == c)
                        .map(|j| points[j][row])
                        .sum();
                    sum / sizes[c] as f64
                })
                .collect()
        })
        .collect();
    Ok(FeatureClustering {
        k,
        assignment: result.assignment,
        sizes,
        positions,
        curves,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordImportance {
    pub word: String,
    /// Mean of `|u_{w,j}|` over `j ∈ J`, one entry per cluster.
    pub importance: Vec<f64>,
    /// Cluster with the largest importance; ties go to the lower cluster.
    pub cluster: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordImportanceReport {
    pub task: &'static str,
    pub words: Vec<WordImportance>,
    /// Per cluster, up to `top_m` attributed words by decreasing importance.
    pub top_words: Vec<Vec<String>>,
}

/// Per-cluster importance of a word vector `u`.
pub fn cluster_importance(u: &[f64], clustering: &FeatureClustering) -> Result<WordImportance> {
    if clustering.assignment.len() > u.len() {
        return Err(Error::Dimension(format!(
            "clustering covers {} features, word vector has {}",
            clustering.assignment.len(),
            u.len()
        )));
    }
    let importance: Vec<f64> = (0..clustering.k)
        .map(|c| {
            let (sum, n) = clustering
                .members(c)
                .fold((0.0, 0usize), |(s, n), j| (s + u[j].abs(), n + 1));
            sum / n as f64
        })
        .collect();
    let cluster = importance
        .iter()
        .enumerate()
        .fold(0, |best, (c, &v)| if v > importance[best] { c } else { best });
    Ok(WordImportance {
        word: String::new(),
        importance,
        cluster,
    })
}

/// Importance of context words for every feature cluster.
pub fn context_word_importance<S: AsRef<str>>(
    model: &Model,
    clustering: &FeatureClustering,
    words: &[S],
    top_m: usize,
) -> Result<WordImportanceReport> {
    if clustering.assignment.len() != model.params.positional_dim() {
        return Err(Error::Dimension(format!(
            "clustering covers {} features, model has {} positional features",
            clustering.assignment.len(),
            model.params.positional_dim()
        )));
    }
    let mut scored = Vec::with_capacity(words.len());
    for w in words {
        let u: Vec<f64> = model.word_vector(w.as_ref())?.iter().map(|&x| x as f64).collect();
        let mut item = cluster_importance(&u, clustering)?;
        item.word = w.as_ref().to_owned();
        scored.push(item);
    }
    let top_words = (0..clustering.k)
        .map(|c| {
            let mut mine: Vec<&WordImportance> = scored.iter().filter(|w| w.cluster == c).collect();
            mine.sort_by(|a, b| {
                b.importance[c]
                    .partial_cmp(&a.importance[c])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            mine.iter().take(top_m).map(|w| w.word.clone()).collect()
        })
        .collect();
    Ok(WordImportanceReport {
        task: "context_word_importance",
        words: scored,
        top_words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::model::{Dims, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_with_positions(kind: ModelKind, window: usize, rows: &[Vec<f32>]) -> ModelParams<f32> {
        let dims = Dims {
            vocab_size: 2,
            buckets: 1,
            dim: 8,
            window,
        };
        let mut p = ModelParams::<f32>::zeros(kind, dims).unwrap();
        let d = p.positional.as_mut().unwrap();
        for (i, r) in rows.iter().enumerate() {
            d.row_mut(i).copy_from_slice(r);
        }
        p
    }

    fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut table = vec![vec![0u64; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            table[x][y] += 1;
        }
        let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
        let index: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
        let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
        let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
        let expected = rows * cols / c2(n as u64);
        (index - expected) / ((rows + cols) / 2.0 - expected)
    }

    #[test]
    fn norms_one_three_five_scale_to_zero_half_one() {
        // window 1 has two positions; use a constrained model with D' = 1
        let kind = ModelKind::Constrained { positional_dim: 1 };
        let p = params_with_positions(kind, 1, &[vec![1.0], vec![5.0]]);
        let r = position_importance(&p).unwrap();
        assert_eq!(r.iter().map(|x| x.scaled).collect::<Vec<_>>(), [0.0, 1.0]);
        let dims = Dims {
            vocab_size: 2,
            buckets: 1,
            dim: 4,
            window: 2,
        };
        let mut p = ModelParams::<f32>::zeros(kind, dims).unwrap();
        let d = p.positional.as_mut().unwrap();
        for (i, v) in [1.0f32, 3.0, 5.0, 5.0].iter().enumerate() {
            d.row_mut(i)[0] = *v;
        }
        let r = position_importance(&p).unwrap();
        let scaled: Vec<f64> = r.iter().map(|x| x.scaled).collect();
        assert_eq!(scaled, [0.0, 0.5, 1.0, 1.0]);
        assert_eq!(r[0].position, -2);
    }

    #[test]
    fn equal_norms_give_all_ones() {
        let p = params_with_positions(ModelKind::Positional, 1, &[vec![1.0; 8], vec![-1.0; 8]]);
        assert!(position_importance(&p).unwrap().iter().all(|x| x.scaled == 1.0));
    }

    #[test]
    fn subword_model_has_no_positions() {
        let dims = Dims {
            vocab_size: 2,
            buckets: 1,
            dim: 4,
            window: 2,
        };
        let p = ModelParams::<f32>::zeros(ModelKind::Subword, dims).unwrap();
        assert!(matches!(position_importance(&p), Err(Error::NotPositional)));
        assert!(matches!(cluster_positional_features(&p, 1, 0), Err(Error::NotPositional)));
    }

    #[test]
    fn scaling_is_invariant_to_global_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f32>> = (0..6).map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let p = params_with_positions(ModelKind::Positional, 3, &rows);
        let scaled: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|x| x * 2.5).collect()).collect();
        let q = params_with_positions(ModelKind::Positional, 3, &scaled);
        let a = position_importance(&p).unwrap();
        let b = position_importance(&q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.scaled - y.scaled).abs() < 1e-6);
        }
    }

    #[test]
    fn planted_feature_groups_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let window = 5;
        let positions = crate::model::positions(window);
        // before the target, after the target, flat
        let profiles: [fn(i32) -> f64; 3] = [
            |p| if p < 0 { 2.0 } else { 0.1 },
            |p| if p > 0 { 2.0 } else { 0.1 },
            |_| 1.0,
        ];
        let dp = 30;
        let truth: Vec<usize> = (0..dp).map(|j| j % 3).collect();
        let mut d = Matrix::<f32>::zeros(positions.len(), dp);
        for (row, &p) in positions.iter().enumerate() {
            for j in 0..dp {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                d.row_mut(row)[j] = (sign * (profiles[truth[j]](p) + rng.random_range(-0.1..0.1))) as f32;
            }
        }
        let kind = ModelKind::Constrained { positional_dim: dp };
        let dims = Dims {
            vocab_size: 2,
            buckets: 1,
            dim: 40,
            window,
        };
        let mut params = ModelParams::<f32>::zeros(kind, dims).unwrap();
        params.positional = Some(d);
        let c = cluster_positional_features(&params, 3, 7).unwrap();
        assert!(adjusted_rand(&c.assignment, &truth) >= 0.9);
        assert_eq!(c.sizes.iter().sum::<usize>(), dp);
        assert!(c.sizes.iter().all(|&s| s > 0));
        assert_eq!(c, cluster_positional_features(&params, 3, 7).unwrap());
    }

    #[test]
    fn single_cluster_curve_is_mean_absolute_value() {
        let rows = vec![vec![1.0, -3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![2.0; 8]];
        let p = params_with_positions(ModelKind::Positional, 1, &rows);
        let c = cluster_positional_features(&p, 1, 0).unwrap();
        assert_eq!(c.curves, vec![vec![0.5, 2.0]]);
    }

    #[test]
    fn duplicated_columns_share_a_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows: Vec<Vec<f32>> = (0..4).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        for r in &mut rows {
            r[5] = -r[2];
        }
        let p = params_with_positions(ModelKind::Positional, 2, &rows);
        for k in 1..=7 {
            let c = cluster_positional_features(&p, k, 5).unwrap();
            assert_eq!(c.assignment[2], c.assignment[5]);
        }
        assert!(cluster_positional_features(&p, 9, 5).is_err());
    }

    fn two_feature_clustering() -> FeatureClustering {
        FeatureClustering {
            k: 2,
            assignment: vec![0, 0, 1],
            sizes: vec![2, 1],
            positions: vec![-1, 1],
            curves: vec![vec![0.0; 2]; 2],
        }
    }

    #[test]
    fn word_importance_is_mean_absolute_feature() {
        let c = two_feature_clustering();
        let w = cluster_importance(&[0.5, -1.5, 0.2, 9.0], &c).unwrap();
        assert_eq!(w.importance[0], 1.0);
        assert_eq!(w.cluster, 0);
        let zero = cluster_importance(&[0.0; 4], &c).unwrap();
        assert_eq!(zero.importance, [0.0, 0.0]);
    }

    #[test]
    fn word_importance_is_positively_homogeneous() {
        let c = two_feature_clustering();
        let u = [0.3, -0.1, 0.9];
        let a = cluster_importance(&u, &c).unwrap();
        let b = cluster_importance(&u.map(|x| x * 3.0), &c).unwrap();
        for (x, y) in a.importance.iter().zip(&b.importance) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
        assert_eq!(a.cluster, b.cluster);
    }
}
