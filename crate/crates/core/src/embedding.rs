use serde::Serialize;

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::model::{ContextSlot, ModelParams};
use crate::subword::SubwordIndex;
use crate::trainer::{TrainedModel, WindowMode};

/// Trained parameters together with everything needed to look words up.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub params: ModelParams<f32>,
    pub vocab: Vocab,
    pub subwords: SubwordIndex,
    pub window_mode: WindowMode,
    pub seed: u64,
}

impl From<TrainedModel> for Model {
    fn from(m: TrainedModel) -> Self {
        Model {
            params: m.params,
            vocab: m.vocab,
            subwords: m.subwords,
            window_mode: m.config.window_mode,
            seed: m.config.seed,
        }
    }
}

/// A context word placed at a relative position, with its input rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlacedWord {
    pub position: i32,
    pub word: String,
    pub rows: Vec<u32>,
}

impl Model {
    /// Input rows of a word; fails if the word has none.
    pub fn rows(&self, word: &str) -> Result<Vec<u32>> {
        let rows = self.subwords.subword_ids(word, &self.vocab)?;
        if rows.is_empty() {
            return Err(Error::UnrepresentableWord(word.to_owned()));
        }
        Ok(rows)
    }

    /// Input vector of any word, in or out of the vocabulary.
    pub fn word_vector(&self, word: &str) -> Result<Vec<f32>> {
        self.params.word_input_vector(&self.rows(word)?)
    }

    /// Input vectors of the first `limit` vocabulary words.
    pub fn vocab_vectors(&self, limit: usize) -> Result<Vec<Vec<f32>>> {
        self.vocab
            .words()
            .take(limit)
            .map(|w| self.word_vector(w))
            .collect()
    }

    /// Places tokens around a masked word: `left` ends at position −1 and
    /// `right` starts at +1. Words outside the window and words without any
    /// input row are left out.
    pub fn place_context(&self, left: &[String], right: &[String]) -> Vec<PlacedWord> {
        let c = self.params.window();
        let before = left.iter().rev().take(c).enumerate().map(|(i, w)| (-(i as i32) - 1, w));
        let after = right.iter().take(c).enumerate().map(|(i, w)| (i as i32 + 1, w));
        let mut placed: Vec<PlacedWord> = before
            .chain(after)
            .filter_map(|(position, word)| {
                self.rows(word).ok().map(|rows| PlacedWord {
                    position,
                    word: word.clone(),
                    rows,
                })
            })
            .collect();
        placed.sort_by_key(|p| p.position);
        placed
    }
}

pub fn slots(placed: &[PlacedWord]) -> Vec<ContextSlot<'_>> {
    placed
        .iter()
        .map(|p| ContextSlot {
            position: p.position,
            rows: &p.rows,
        })
        .collect()
}
