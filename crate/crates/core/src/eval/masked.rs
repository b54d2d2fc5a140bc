use serde::Serialize;

use crate::corpus::tokenize;
use crate::embedding::{slots, Model, PlacedWord};
use crate::error::{Error, Result};
use crate::model::sigmoid;

/// Marker for the masked word in query sentences.
pub const MASK: &str = "<mask>";

/// Splits a sentence at its single [`MASK`] and tokenizes both sides.
pub fn parse_masked(sentence: &str) -> Result<(Vec<String>, Vec<String>)> {
    let mut parts = sentence.split(MASK);
    let left = parts.next().unwrap_or_default();
    let right = parts
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("sentence has no {MASK} marker")))?;
    if parts.next().is_some() {
        return Err(Error::InvalidInput(format!("sentence has more than one {MASK} marker")));
    }
    Ok((tokenize(left), tokenize(right)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    /// 1-based rank; lower is better.
    pub rank: usize,
    pub word: String,
    pub id: u32,
    pub score: f64,
    /// `σ(score)`, a strictly increasing transform of the score.
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskedReport {
    pub task: &'static str,
    pub context: Vec<PlacedWord>,
    pub predictions: Vec<Prediction>,
}

impl MaskedReport {
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.predictions.iter().find(|p| p.word == word).map(|p| p.rank)
    }
}

/// Ranks every vocabulary word as the filler of the masked position.
///
/// Context words with no input rows are dropped; ties keep vocabulary order.
pub fn rank_masked_predictions(model: &Model, left: &[String], right: &[String]) -> Result<MaskedReport> {
    let context = model.place_context(left, right);
    if context.is_empty() {
        return Err(Error::UnrepresentableWord(
            "no context word has a representation".into(),
        ));
    }
    let h = model.params.context_vector(&slots(&context))?;
    let scores = model.params.scores(&h);
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let predictions = order
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let score = scores[id as usize] as f64;
            Prediction {
                rank: i + 1,
                word: model.vocab.word(id).to_owned(),
                id,
                score,
                probability: sigmoid(score),
            }
        })
        .collect();
    Ok(MaskedReport {
        task: "masked_prediction",
        context,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::init::{init_model, InitScheme};
    use crate::model::{Dims, ModelKind};
    use crate::subword::SubwordIndex;
    use crate::trainer::WindowMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(kind: ModelKind) -> Model {
        let vocab = build_vocab("unlike dogs cats mew bark the".split(' '), 1).unwrap();
        let subwords = SubwordIndex::new(3, 4, 40, true).unwrap();
        let mut params = init_model(
            kind,
            InitScheme::default(),
            Dims {
                vocab_size: vocab.len(),
                buckets: 40,
                dim: 6,
                window: 3,
            },
            4,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        params
            .output
            .as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-1.0..1.0));
        Model {
            params,
            vocab,
            subwords,
            window_mode: WindowMode::Fixed,
            seed: 4,
        }
    }

    #[test]
    fn parse_masked_splits_once() {
        let (l, r) = parse_masked("Unlike dogs, cats <mask>.").unwrap();
        assert_eq!(l, ["unlike", "dogs", "cats"]);
        assert!(r.is_empty());
        assert!(parse_masked("no marker").is_err());
        assert!(parse_masked("<mask> and <mask>").is_err());
    }

    #[test]
    fn equal_outputs_rank_adjacent() {
        let mut m = model(ModelKind::Positional);
        let mew = m.vocab.id("mew").unwrap() as usize;
        let bark = m.vocab.id("bark").unwrap() as usize;
        let row = m.params.output.row(mew).to_vec();
        m.params.output.row_mut(bark).copy_from_slice(&row);
        let (l, r) = parse_masked("unlike dogs cats <mask>").unwrap();
        let report = rank_masked_predictions(&m, &l, &r).unwrap();
        let a = report.rank_of("mew").unwrap();
        let b = report.rank_of("bark").unwrap();
        assert_eq!(a.abs_diff(b), 1);
        assert_eq!(report.predictions[a - 1].score, report.predictions[b - 1].score);
    }

    #[test]
    fn subword_ranking_ignores_word_order() {
        let m = model(ModelKind::Subword);
        let (l1, r1) = parse_masked("unlike dogs cats <mask>").unwrap();
        let (l2, r2) = parse_masked("unlike cats dogs <mask>").unwrap();
        let a = rank_masked_predictions(&m, &l1, &r1).unwrap();
        let b = rank_masked_predictions(&m, &l2, &r2).unwrap();
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn positional_ranking_depends_on_order() {
        let m = model(ModelKind::Positional);
        let (l1, r1) = parse_masked("unlike dogs cats <mask>").unwrap();
        let (l2, r2) = parse_masked("unlike cats dogs <mask>").unwrap();
        let a = rank_masked_predictions(&m, &l1, &r1).unwrap();
        let b = rank_masked_predictions(&m, &l2, &r2).unwrap();
        assert_ne!(a.predictions, b.predictions);
    }

    #[test]
    fn probabilities_follow_scores() {
        let m = model(ModelKind::Constrained { positional_dim: 2 });
        let (l, r) = parse_masked("the dogs <mask> the cats").unwrap();
        let report = rank_masked_predictions(&m, &l, &r).unwrap();
        assert_eq!(report.context.len(), 4);
        for w in report.predictions.windows(2) {
            assert!(w[0].score >= w[1].score);
            assert!(w[0].probability >= w[1].probability);
        }
    }

    #[test]
    fn unrepresentable_context_is_an_error() {
        let m = model(ModelKind::Positional);
        // single characters are too short for 3-grams and not in the vocabulary
        let (l, r) = parse_masked("x y <mask> z").unwrap();
        assert!(matches!(
            rank_masked_predictions(&m, &l, &r),
            Err(Error::UnrepresentableWord(_))
        ));
    }
}
