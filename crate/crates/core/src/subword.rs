//! Character n-gram extraction and hashing.
//!
//! A word is wrapped in `<` and `>` and every character n-gram of the wrapped
//! form with length in `minn..=maxn` is hashed with 32-bit FNV-1a into one of
//! `buckets` rows placed after the vocabulary rows of the input matrix.

use crate::corpus::Vocab;
use crate::error::{Error, Result};

pub const BOW: char = '<';
pub const EOW: char = '>';

/// Identifier of the n-gram hash function stored in model headers.
pub const HASH_FNV1A_32: u8 = 1;

/// 32-bit FNV-1a over raw bytes.
#[inline]
pub fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(0x811c_9dc5u32, |h, &b| {
        (h ^ u32::from(b)).wrapping_mul(0x0100_0193)
    })
}

/// Extracts the character n-grams of `<word>` with length in `minn..=maxn`,
/// position-major then length-major, leaving out the gram equal to the whole
/// wrapped word. Duplicates are kept.
pub fn extract_ngrams(word: &str, minn: usize, maxn: usize) -> Vec<String> {
    let mut out = Vec::new();
    for_each_ngram(word, minn, maxn, |gram| out.push(gram.to_owned()));
    out
}

fn for_each_ngram(word: &str, minn: usize, maxn: usize, mut f: impl FnMut(&str)) {
    let wrapped = format!("{BOW}{word}{EOW}");
    // byte offsets of every char boundary, including the end
    let bounds: Vec<usize> = wrapped
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(wrapped.len()))
        .collect();
    let nchars = bounds.len() - 1;
    for start in 0..nchars {
        for n in minn.max(1)..=maxn {
            let end = start + n;
            if end > nchars {
                break;
            }
            if start == 0 && end == nchars {
                continue;
            }
            f(&wrapped[bounds[start]..bounds[end]]);
        }
    }
}

/// N-gram configuration mapping words to rows of the input matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubwordIndex {
    pub minn: usize,
    pub maxn: usize,
    pub buckets: usize,
    pub include_word: bool,
}

impl Default for SubwordIndex {
    fn default() -> Self {
        SubwordIndex {
            minn: 3,
            maxn: 6,
            buckets: 2_000_000,
            include_word: true,
        }
    }
}

impl SubwordIndex {
    pub fn new(minn: usize, maxn: usize, buckets: usize, include_word: bool) -> Result<Self> {
        let index = SubwordIndex {
            minn,
            maxn,
            buckets,
            include_word,
        };
        index.validate()?;
        Ok(index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.minn == 0 || self.minn > self.maxn {
            return Err(Error::InvalidInput(format!(
                "n-gram lengths must satisfy 1 <= minn <= maxn, got {}..{}",
                self.minn, self.maxn
            )));
        }
        if self.buckets == 0 {
            return Err(Error::InvalidInput("bucket count must be positive".into()));
        }
        Ok(())
    }

    /// Row of the input matrix for an n-gram, given vocabulary size `vocab_size`.
    #[inline]
    pub fn hash_ngram(&self, ngram: &[u8], vocab_size: usize) -> u32 {
        hash_ngram(ngram, vocab_size, self.buckets)
    }

    /// Input-matrix rows representing `word`: its own vocabulary row first
    /// (when enabled and present), then one hashed row per n-gram.
    ///
    /// An empty result means the word has no representation.
    pub fn subword_ids(&self, word: &str, vocab: &Vocab) -> Result<Vec<u32>> {
        if word.is_empty() {
            return Err(Error::InvalidInput("empty word".into()));
        }
        let mut ids = Vec::new();
        if self.include_word {
            if let Some(id) = vocab.id(word) {
                ids.push(id);
            }
        }
        let v = vocab.len();
        for_each_ngram(word, self.minn, self.maxn, |gram| {
            ids.push(self.hash_ngram(gram.as_bytes(), v));
        });
        Ok(ids)
    }
}

/// `vocab_size + fnv1a32(ngram) mod buckets`.
#[inline]
pub fn hash_ngram(ngram: &[u8], vocab_size: usize, buckets: usize) -> u32 {
    (vocab_size as u64 + u64::from(fnv1a32(ngram)) % buckets as u64) as u32
}

/// Precomputed [`SubwordIndex::subword_ids`] for every vocabulary word.
#[derive(Clone, Debug)]
pub struct SubwordTable {
    offsets: Vec<usize>,
    ids: Vec<u32>,
}

impl SubwordTable {
    pub fn new(vocab: &Vocab, index: &SubwordIndex) -> Result<Self> {
        let mut offsets = Vec::with_capacity(vocab.len() + 1);
        let mut ids = Vec::new();
        offsets.push(0);
        for word in vocab.words() {
            ids.extend(index.subword_ids(word, vocab)?);
            offsets.push(ids.len());
        }
        Ok(SubwordTable { offsets, ids })
    }

    #[inline]
    pub fn rows(&self, word: u32) -> &[u32] {
        let w = word as usize;
        &self.ids[self.offsets[w]..self.offsets[w + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
