//! Numeric checks of the score bounds on random full windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedding::Model;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm};
use crate::model::{ContextSlot, ModelParams};

use super::importance::FeatureClustering;

/// Relative slack allowed for floating-point rounding.
pub const BOUND_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BoundReport {
    pub task: &'static str,
    pub trials: usize,
    pub tolerance: f64,
    /// `|s| ≤ (1/|P|) Σ_p ‖u_p ⊙ d̃_p‖ ‖v‖`
    pub tight_violations: usize,
    /// `|s| ≤ (1/|P|) Σ_p ‖u_p‖ ‖d̃_p‖ ‖v‖`
    pub product_violations: usize,
    /// Per-cluster elementwise bounds, the untouched features forming one
    /// extra group, and their sum.
    pub cluster_violations: usize,
    /// `|s − s'|` against its exact elementwise bound for a word moved
    /// between two positions.
    pub swap_violations: usize,
    pub mean_abs_score: f64,
    pub mean_tight_bound: f64,
    pub mean_product_bound: f64,
    pub max_tight_ratio: f64,
    pub mean_swap_difference: f64,
    pub mean_swap_bound: f64,
    pub cluster_sizes: Vec<usize>,
    /// Per cluster, the mean over trials of
    /// `(1/|P|) Σ_{j∈J} |u_{w,j}| · max_{p,q} |d_{p,j} − d_{q,j}| · max_w ‖v_w‖_∞ · D`.
    pub leading_terms: Vec<f64>,
}

impl BoundReport {
    pub fn violations(&self) -> usize {
        self.tight_violations + self.product_violations + self.cluster_violations + self.swap_violations
    }
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + BOUND_TOLERANCE * rhs.abs().max(f64::MIN_POSITIVE)
}

/// `d_p` padded with ones to the full dimension.
fn padded(params: &ModelParams<f64>, p: i32) -> Vec<f64> {
    let mut d = vec![1.0; params.dim()];
    let head = params.positional_vector(p).expect("positional model");
    d[..head.len()].copy_from_slice(head);
    d
}

struct Trial {
    abs_score: f64,
    tight: f64,
    product: f64,
    /// `(|s_J|, bound_J)` per group, the last group being the unweighted tail.
    groups: Vec<(f64, f64)>,
}

fn check_window(params: &ModelParams<f64>, groups: &[Vec<usize>], window: &[(i32, Vec<u32>)], target: u32) -> Result<Trial> {
    let slots: Vec<ContextSlot> = window
        .iter()
        .map(|(p, rows)| ContextSlot {
            position: *p,
            rows,
        })
        .collect();
    let s = params.score(target, &slots)?;
    let v = params.output.row(target as usize);
    let scale = 1.0 / window.len() as f64;
    let v_norm = norm(v);
    let mut tight = 0.0;
    let mut product = 0.0;
    let mut group_sums = vec![0.0; groups.len()];
    let mut group_bounds = vec![0.0; groups.len()];
    for (p, rows) in window {
        let u = params.word_input_vector(rows)?;
        let d = padded(params, *p);
        let weighted: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a * b).collect();
        tight += norm(&weighted) * v_norm;
        product += norm(&u) * norm(&d) * v_norm;
        for (g, members) in groups.iter().enumerate() {
            for &j in members {
                group_sums[g] += weighted[j] * v[j];
                group_bounds[g] += (weighted[j] * v[j]).abs();
            }
        }
    }
    Ok(Trial {
        abs_score: s.abs(),
        tight: scale * tight,
        product: scale * product,
        groups: group_sums
            .into_iter()
            .zip(group_bounds)
            .map(|(sum, bound)| ((scale * sum).abs(), scale * bound))
            .collect(),
    })
}

/// Draws `n_trials` random full windows and targets from the vocabulary and
/// checks every score bound in double precision. Without a clustering all
/// positional features form one group.
pub fn check_score_bounds(
    model: &Model,
    n_trials: usize,
    seed: u64,
    clustering: Option<&FeatureClustering>,
) -> Result<BoundReport> {
    if !model.params.kind().is_positional() {
        return Err(Error::NotPositional);
    }
    let params = model.params.cast::<f64>();
    let dim = params.dim();
    let dp = params.positional_dim();
    let mut groups: Vec<Vec<usize>> = match clustering {
        Some(c) => {
            if c.assignment.len() != dp {
                return Err(Error::Dimension(format!(
                    "clustering covers {} features, model has {dp} positional features",
                    c.assignment.len()
                )));
            }
            (0..c.k).map(|k| c.members(k).collect()).collect()
        }
        None => vec![(0..dp).collect()],
    };
    let cluster_sizes = groups.iter().map(Vec::len).collect();
    let n_clusters = groups.len();
    groups.push((dp..dim).collect());

    let mut word_rows = Vec::with_capacity(model.vocab.len());
    for w in model.vocab.words() {
        let rows = model.subwords.subword_ids(w, &model.vocab)?;
        if !rows.is_empty() {
            word_rows.push(rows);
        }
    }
    if word_rows.is_empty() {
        return Err(Error::EmptyVocab);
    }
    let positions = params.positions();
    let v_inf = params
        .output
        .as_slice()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    // max_{p,q} |d_{p,j} − d_{q,j}| per positional feature
    let spread: Vec<f64> = (0..dp)
        .map(|j| {
            let col = positions.iter().map(|&p| params.positional_vector(p).unwrap()[j]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            hi - lo
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundReport {
        task: "score_bounds",
        trials: n_trials,
        tolerance: BOUND_TOLERANCE,
        cluster_sizes,
        leading_terms: vec![0.0; n_clusters],
        ..Default::default()
    };
    let scale = 1.0 / positions.len() as f64;
    for _ in 0..n_trials {
        let target = rng.random_range(0..params.vocab_size()) as u32;
        let mut window: Vec<(i32, Vec<u32>)> = positions
            .iter()
            .map(|&p| (p, word_rows[rng.random_range(0..word_rows.len())].clone()))
            .collect();
        let t = check_window(&params, &groups, &window, target)?;
        report.mean_abs_score += t.abs_score;
        report.mean_tight_bound += t.tight;
        report.mean_product_bound += t.product;
        if t.tight > 0.0 {
            report.max_tight_ratio = report.max_tight_ratio.max(t.abs_score / t.tight);
        }
        report.tight_violations += usize::from(exceeds(t.abs_score, t.tight));
        report.product_violations += usize::from(exceeds(t.tight, t.product) || exceeds(t.abs_score, t.product));
        let total: f64 = t.groups.iter().map(|g| g.1).sum();
        report.cluster_violations += t.groups.iter().filter(|g| exceeds(g.0, g.1)).count();
        report.cluster_violations += usize::from(exceeds(t.abs_score, total));

        // move the word at p1 to p2 and the word at p2 to p1
        let i1 = rng.random_range(0..positions.len());
        let mut i2 = rng.random_range(0..positions.len() - 1);
        if i2 >= i1 {
            i2 += 1;
        }
        let s1 = params_score(&params, &window, target)?;
        let (w_rows, x_rows) = (window[i1].1.clone(), window[i2].1.clone());
        window[i1].1 = x_rows.clone();
        window[i2].1 = w_rows.clone();
        let s2 = params_score(&params, &window, target)?;
        let diff = (s1 - s2).abs();
        let u_w = params.word_input_vector(&w_rows)?;
        let u_x = params.word_input_vector(&x_rows)?;
        let d1 = padded(&params, positions[i1]);
        let d2 = padded(&params, positions[i2]);
        let v = params.output.row(target as usize);
        let bound: f64 = scale
            * (0..dim)
                .map(|j| (u_w[j].abs() + u_x[j].abs()) * (d1[j] - d2[j]).abs() * v[j].abs())
                .sum::<f64>();
        report.mean_swap_difference += diff;
        report.mean_swap_bound += bound;
        report.swap_violations += usize::from(exceeds(diff, bound));
        for (c, members) in groups[..n_clusters].iter().enumerate() {
            report.leading_terms[c] +=
                scale * members.iter().map(|&j| u_w[j].abs() * spread[j]).sum::<f64>() * v_inf * dim as f64;
        }
    }
    if n_trials > 0 {
        let n = n_trials as f64;
        report.mean_abs_score /= n;
        report.mean_tight_bound /= n;
        report.mean_product_bound /= n;
        report.mean_swap_difference /= n;
        report.mean_swap_bound /= n;
        report.leading_terms.iter_mut().for_each(|x| *x /= n);
    }
    Ok(report)
}

fn params_score(params: &ModelParams<f64>, window: &[(i32, Vec<u32>)], target: u32) -> Result<f64> {
    let slots: Vec<ContextSlot> = window
        .iter()
        .map(|(p, rows)| ContextSlot {
            position: *p,
            rows,
        })
        .collect();
    let h = params.context_vector(&slots)?;
    Ok(dot(&h, params.output.row(target as usize)))
}
