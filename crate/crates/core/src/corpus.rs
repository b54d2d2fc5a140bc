//! Text ingestion, vocabulary construction and frequency subsampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::error::{Error, Result};

/// Unicode version of the word-property table used by [`tokenize`].
pub const WORD_PROPERTY_UNICODE_VERSION: &str = "16.0.0";

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+").expect("valid regex"));

/// Unicode versions of the segmentation and case-mapping tables, recorded in
/// model headers so that out-of-vocabulary lookups are reproducible.
pub fn unicode_version() -> String {
    let (major, minor, update) = char::UNICODE_VERSION;
    format!("word={WORD_PROPERTY_UNICODE_VERSION};case={major}.{minor}.{update}")
}

/// Lower-cases `text` and splits it into the longest runs of characters
/// carrying the Unicode word property.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    WORD.find_iter(&lower).map(|m| m.as_str().to_owned()).collect()
}

/// Like [`tokenize`], but rejects input that is not valid UTF-8.
pub fn tokenize_bytes(bytes: &[u8]) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::InvalidInput(format!("invalid UTF-8: {e}")))?;
    Ok(tokenize(text))
}

/// Streams `reader` line by line and hands the tokens of every line to `f`.
///
/// Lines are read as raw bytes so that a file never needs to fit in memory;
/// a line that is not valid UTF-8 aborts with an error naming the line.
pub fn for_each_line<R, F>(mut reader: R, mut f: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(Vec<String>) -> Result<()>,
{
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::Io {
            context: format!("reading line {}", line_no + 1),
            source: e,
        })?;
        if n == 0 {
            return Ok(());
        }
        line_no += 1;
        let text = std::str::from_utf8(&buf).map_err(|e| {
            Error::InvalidInput(format!("line {line_no}: invalid UTF-8: {e}"))
        })?;
        f(tokenize(text))?;
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocabEntry {
    pub word: String,
    pub count: u64,
}

/// Word table sorted by descending count.
///
/// Relative frequencies are measured against the raw corpus length,
/// including tokens of words that were pruned by `min_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocab {
    /// Reassembles a vocabulary from stored parts, checking its invariants.
    pub fn from_parts(entries: Vec<VocabEntry>, total_tokens: u64, min_count: u64) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::InvalidInput("min_count must be positive".into()));
        }
        if entries.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("vocabulary too large".into()));
        }
        let mut sum = 0u64;
        let mut index = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            if entry.count < min_count {
                return Err(Error::InvalidInput(format!(
                    "word {:?} has count {} below min_count {min_count}",
                    entry.word, entry.count
                )));
            }
            if i > 0 && entries[i - 1].count < entry.count {
                return Err(Error::InvalidInput(
                    "entries not sorted by descending count".into(),
                ));
            }
            if entry.word.is_empty() {
                return Err(Error::InvalidInput("empty word".into()));
            }
            if index.insert(entry.word.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate word {:?}", entry.word)));
            }
            sum = sum
                .checked_add(entry.count)
                .ok_or_else(|| Error::InvalidInput("count overflow".into()))?;
        }
        if sum > total_tokens {
            return Err(Error::InvalidInput(format!(
                "counts sum to {sum}, more than total_tokens {total_tokens}"
            )));
        }
        Ok(Vocab {
            entries,
            index,
            total_tokens,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.entries[id as usize].word
    }

    pub fn count(&self, id: u32) -> u64 {
        self.entries[id as usize].count
    }

    pub fn freq(&self, id: u32) -> f64 {
        self.entries[id as usize].count as f64 / self.total_tokens as f64
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }
}

/// Incremental word counter; keeps first-occurrence order for tie breaking.
#[derive(Debug, Default)]
pub struct VocabBuilder {
    counts: HashMap<String, (u64, usize)>,
    total: u64,
}

impl VocabBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, token: &str) {
        self.total += 1;
        let next = self.counts.len();
        match self.counts.get_mut(token) {
            Some((count, _)) => *count += 1,
            None => {
                self.counts.insert(token.to_owned(), (1, next));
            }
        }
    }

    pub fn build(self, min_count: u64) -> Result<Vocab> {
        if min_count == 0 {
            return Err(Error::InvalidInput("min_count must be at least 1".into()));
        }
        let mut kept: Vec<_> = self
            .counts
            .into_iter()
            .filter(|(_, (count, _))| *count >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let entries = kept
            .into_iter()
            .map(|(word, (count, _))| VocabEntry { word, count })
            .collect();
        Vocab::from_parts(entries, self.total, min_count)
    }
}

/// Counts `tokens` and keeps the words occurring at least `min_count` times.
pub fn build_vocab<I, S>(tokens: I, min_count: u64) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut builder = VocabBuilder::new();
    for token in tokens {
        builder.add(token.as_ref());
    }
    builder.build(min_count)
}

/// Builds a vocabulary by streaming a text source line by line.
pub fn build_vocab_from_reader<R: BufRead>(reader: R, min_count: u64) -> Result<Vocab> {
    let mut builder = VocabBuilder::new();
    for_each_line(reader, |tokens| {
        tokens.iter().for_each(|t| builder.add(t));
        Ok(())
    })?;
    builder.build(min_count)
}

pub fn build_vocab_from_file(path: &Path, min_count: u64) -> Result<Vocab> {
    build_vocab_from_reader(open(path)?, min_count)
}

/// Probability of dropping an occurrence of a word with relative frequency
/// `freq` under low-pass threshold `r`.
pub fn discard_prob(freq: f64, r: f64) -> f64 {
    (1.0 - (r / freq).sqrt()).max(0.0)
}

/// Independently drops every occurrence with its [`discard_prob`].
pub fn subsampled_stream(tokens: &[u32], vocab: &Vocab, r: f64, seed: u64) -> Vec<u32> {
    let discard = discard_table(vocab, r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tokens
        .iter()
        .copied()
        .filter(|&id| keep(&discard, id, &mut rng))
        .collect()
}

pub(crate) fn discard_table(vocab: &Vocab, r: f64) -> Vec<f64> {
    (0..vocab.len() as u32)
        .map(|id| discard_prob(vocab.freq(id), r))
        .collect()
}

#[inline]
pub(crate) fn keep<R: Rng>(discard: &[f64], id: u32, rng: &mut R) -> bool {
    let p = discard[id as usize];
    p == 0.0 || rng.random::<f64>() >= p
}

/// Corpus encoded as vocabulary ids with document (line) boundaries.
///
/// Out-of-vocabulary tokens are dropped, but every document remembers how
/// many raw tokens it had so that learning-rate progress follows the raw
/// corpus length.
#[derive(Clone, Debug, Default)]
pub struct EncodedCorpus {
    tokens: Vec<u32>,
    docs: Vec<Document>,
    raw_tokens: u64,
}

#[derive(Clone, Copy, Debug)]
struct Document {
    end: usize,
    raw: u64,
}

impl EncodedCorpus {
    pub fn from_reader<R: BufRead>(reader: R, vocab: &Vocab) -> Result<Self> {
        let mut corpus = EncodedCorpus::default();
        for_each_line(reader, |tokens| {
            corpus.push_document(tokens.iter().map(String::as_str), vocab);
            Ok(())
        })?;
        Ok(corpus)
    }

    pub fn from_text(text: &str, vocab: &Vocab) -> Self {
        let mut corpus = EncodedCorpus::default();
        for line in text.lines() {
            let tokens = tokenize(line);
            corpus.push_document(tokens.iter().map(String::as_str), vocab);
        }
        corpus
    }

    pub fn from_file(path: &Path, vocab: &Vocab) -> Result<Self> {
        Self::from_reader(open(path)?, vocab)
    }

    pub fn push_document<'a, I>(&mut self, tokens: I, vocab: &Vocab)
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut raw = 0;
        for token in tokens {
            raw += 1;
            if let Some(id) = vocab.id(token) {
                self.tokens.push(id);
            }
        }
        self.raw_tokens += raw;
        self.docs.push(Document {
            end: self.tokens.len(),
            raw,
        });
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn raw_tokens(&self) -> u64 {
        self.raw_tokens
    }

    pub fn num_documents(&self) -> usize {
        self.docs.len()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    /// Documents as `(token ids, raw token count)`.
    pub fn documents(&self) -> impl Iterator<Item = (&[u32], u64)> + '_ {
        self.documents_in(0..self.docs.len())
    }

    pub(crate) fn documents_in(
        &self,
        range: std::ops::Range<usize>,
    ) -> impl Iterator<Item = (&[u32], u64)> + '_ {
        range.map(move |i| {
            let start = if i == 0 { 0 } else { self.docs[i - 1].end };
            let doc = self.docs[i];
            (&self.tokens[start..doc.end], doc.raw)
        })
    }

    /// Splits the documents into `n` contiguous shards of roughly equal
    /// token counts.
    pub(crate) fn shards(&self, n: usize) -> Vec<std::ops::Range<usize>> {
        let n = n.max(1);
        let total = self.tokens.len().max(1);
        let mut shards = Vec::with_capacity(n);
        let mut start = 0;
        for s in 1..=n {
            let target = total * s / n;
            let mut end = start;
            while end < self.docs.len() && (s == n || self.docs[end].end <= target) {
                end += 1;
            }
            shards.push(start..end);
            start = end;
        }
        shards
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Unlike dogs, cats mew."),
            ["unlike", "dogs", "cats", "mew"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Fruit-flies 2x"), ["fruit", "flies", "2x"]);
    }

    #[test]
    fn tokenize_keeps_marks_and_connectors() {
        // combining acute accent (Mn) and underscore (Pc) carry the word property
        assert_eq!(tokenize("Cafe\u{301} snake_case"), ["cafe\u{301}", "snake_case"]);
        assert_eq!(tokenize("Žluťoučký kůň"), ["žluťoučký", "kůň"]);
        assert!(tokenize(" ,.;!? ").is_empty());
    }

    #[test]
    fn tokenize_bytes_rejects_invalid_utf8() {
        assert!(matches!(
            tokenize_bytes(&[0x66, 0xff, 0x66]),
            Err(Error::InvalidInput(_))
        ));
        assert_eq!(tokenize_bytes(b"Ab c").unwrap(), ["ab", "c"]);
    }

    #[test]
    fn vocab_threshold() {
        let tokens = "a a a a a a b b b b c".split(' ');
        let vocab = build_vocab(tokens, 5).unwrap();
        assert_eq!(vocab.len(), 1);
        assert_eq!(vocab.word(0), "a");
        assert_eq!(vocab.count(0), 6);
        assert_eq!(vocab.total_tokens(), 11);
        assert_eq!(vocab.freq(0), 6.0 / 11.0);
    }

    #[test]
    fn vocab_boundary_and_ties() {
        let vocab = build_vocab("a a a a a".split(' '), 5).unwrap();
        assert_eq!(vocab.words().collect::<Vec<_>>(), ["a"]);

        let vocab = build_vocab("b a b a a b".split(' '), 1).unwrap();
        assert_eq!(vocab.words().collect::<Vec<_>>(), ["b", "a"]);
    }

    #[test]
    fn vocab_empty_and_zero_min_count() {
        let vocab = build_vocab(std::iter::empty::<&str>(), 5).unwrap();
        assert!(vocab.is_empty());
        assert!(build_vocab(["a"], 0).is_err());
    }

    #[test]
    fn from_parts_rejects_broken_invariants() {
        let e = |w: &str, c| VocabEntry {
            word: w.into(),
            count: c,
        };
        assert!(Vocab::from_parts(vec![e("a", 1), e("b", 2)], 3, 1).is_err());
        assert!(Vocab::from_parts(vec![e("a", 2), e("a", 2)], 4, 1).is_err());
        assert!(Vocab::from_parts(vec![e("a", 2)], 1, 1).is_err());
        assert!(Vocab::from_parts(vec![e("a", 2)], 2, 3).is_err());
        assert!(Vocab::from_parts(vec![e("a", 2), e("b", 2)], 9, 2).is_ok());
    }

    #[test]
    fn discard_prob_examples() {
        let r = 1e-5;
        assert_eq!(discard_prob(r, r), 0.0);
        assert!((discard_prob(4.0 * r, r) - 0.5).abs() < 1e-15);
        assert_eq!(discard_prob(r / 2.0, r), 0.0);
    }

    #[test]
    fn subsampling_identity_and_empty() {
        let vocab = build_vocab("a b a c a".split(' '), 1).unwrap();
        let tokens = [0, 1, 0, 2, 0];
        assert_eq!(subsampled_stream(&tokens, &vocab, 1.0, 3), tokens);
        assert!(subsampled_stream(&[], &vocab, 1e-5, 3).is_empty());
    }

    #[test]
    fn subsampling_is_seeded() {
        let vocab = build_vocab("a b a c a".split(' '), 1).unwrap();
        let tokens: Vec<u32> = (0..1000).map(|i| i % 3).collect();
        let a = subsampled_stream(&tokens, &vocab, 0.05, 9);
        let b = subsampled_stream(&tokens, &vocab, 0.05, 9);
        assert_eq!(a, b);
        assert!(a.len() < tokens.len());
    }

    #[test]
    fn encoded_corpus_tracks_raw_tokens() {
        let vocab = build_vocab("a b a".split(' '), 2).unwrap();
        let corpus = EncodedCorpus::from_text("a b a\n\nb a c", &vocab);
        assert_eq!(corpus.raw_tokens(), 6);
        assert_eq!(corpus.num_documents(), 3);
        let docs: Vec<_> = corpus.documents().collect();
        assert_eq!(docs[0], (&[0u32, 0][..], 3));
        assert_eq!(docs[1], (&[][..], 0));
        assert_eq!(docs[2], (&[0u32][..], 3));
    }

    #[test]
    fn shards_cover_all_documents() {
        let vocab = build_vocab("a".split(' '), 1).unwrap();
        let text: String = (0..37).map(|i| "a ".repeat(i % 5 + 1) + "\n").collect();
        let corpus = EncodedCorpus::from_text(&text, &vocab);
        for n in 1..6 {
            let shards = corpus.shards(n);
            assert_eq!(shards.len(), n);
            assert_eq!(shards[0].start, 0);
            assert_eq!(shards[n - 1].end, corpus.num_documents());
            for w in shards.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }

    #[test]
    fn streaming_reader_reports_bad_line() {
        let data: &[u8] = b"ok line\nbad \xff\n";
        let err = build_vocab_from_reader(data, 1).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
