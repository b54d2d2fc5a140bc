use std::path::Path;

use serde::Serialize;

use crate::embedding::Model;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm};

/// Analogy candidates are restricted to this many most frequent words.
pub const DEFAULT_ANALOGY_VOCAB: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnalogyQuestion {
    pub section: String,
    /// `a : b :: c : d`
    pub words: [String; 4],
    pub line: usize,
}

/// Parses the usual analogy layout: one `a b c d` question per line, lines
/// starting with `:` open a new section.
pub fn parse_questions(text: &str) -> Result<Vec<AnalogyQuestion>> {
    let mut section = String::new();
    let mut questions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix(':') {
            section = name.trim().to_owned();
            continue;
        }
        let words: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
        let words: [String; 4] = words.try_into().map_err(|w: Vec<String>| {
            Error::InvalidInput(format!(
                "line {}: expected 4 words, found {}",
                i + 1,
                w.len()
            ))
        })?;
        questions.push(AnalogyQuestion {
            section: section.clone(),
            words,
            line: i + 1,
        });
    }
    Ok(questions)
}

pub fn read_questions(path: &Path) -> Result<Vec<AnalogyQuestion>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::InvalidInput(format!("{}: invalid UTF-8: {e}", path.display())))?;
    parse_questions(text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalogyItem {
    pub section: String,
    pub question: [String; 4],
    /// `None` when the question was skipped for out-of-vocabulary words.
    pub predicted: Option<String>,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectionScore {
    pub section: String,
    pub evaluated: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalogyReport {
    pub task: &'static str,
    pub restrict_vocab: usize,
    pub items: Vec<AnalogyItem>,
    pub evaluated: usize,
    pub skipped: usize,
    pub correct: usize,
    /// Fraction of evaluated questions answered correctly.
    pub accuracy: f64,
    pub sections: Vec<SectionScore>,
}

/// 3CosAdd over the `restrict_vocab` most frequent words: the answer to
/// `a : b :: c : ?` is the word maximizing `cos(u_b − u_a + u_c, u_w)`,
/// excluding `a`, `b` and `c`. Ties go to the lowest word id and a zero
/// vector has cosine 0 with everything.
pub fn evaluate_analogies(
    model: &Model,
    questions: &[AnalogyQuestion],
    restrict_vocab: usize,
) -> Result<AnalogyReport> {
    if questions.is_empty() {
        return Err(Error::InvalidInput("no analogy questions".into()));
    }
    let k = restrict_vocab.min(model.vocab.len());
    let vectors = model.vocab_vectors(k)?;
    let norms: Vec<f64> = vectors.iter().map(|v| norm(v) as f64).collect();
    let lookup = |w: &str| model.vocab.id(w).filter(|&id| (id as usize) < k);

    let mut items = Vec::with_capacity(questions.len());
    for q in questions {
        let ids: Option<Vec<u32>> = q.words.iter().map(|w| lookup(w)).collect();
        let Some(ids) = ids else {
            items.push(AnalogyItem {
                section: q.section.clone(),
                question: q.words.clone(),
                predicted: None,
                correct: false,
            });
            continue;
        };
        let (a, b, c) = (ids[0] as usize, ids[1] as usize, ids[2] as usize);
        let query: Vec<f32> = vectors[b]
            .iter()
            .zip(&vectors[a])
            .zip(&vectors[c])
            .map(|((&vb, &va), &vc)| vb - va + vc)
            .collect();
        let qn = norm(&query) as f64;
        let mut best: Option<(usize, f64)> = None;
        for (w, v) in vectors.iter().enumerate() {
            if w == a || w == b || w == c {
                continue;
            }
            let denom = qn * norms[w];
            let cos = if denom > 0.0 {
                dot(&query, v) as f64 / denom
            } else {
                0.0
            };
            if best.is_none_or(|(_, s)| cos > s) {
                best = Some((w, cos));
            }
        }
        let predicted = best.map(|(w, _)| w as u32);
        items.push(AnalogyItem {
            section: q.section.clone(),
            question: q.words.clone(),
            predicted: predicted.map(|w| model.vocab.word(w).to_owned()),
            correct: predicted == Some(ids[3]),
        });
    }
    Ok(summarize(items, k))
}

fn summarize(items: Vec<AnalogyItem>, restrict_vocab: usize) -> AnalogyReport {
    let mut sections: Vec<SectionScore> = Vec::new();
    for item in items.iter().filter(|i| i.predicted.is_some()) {
        let idx = match sections.iter().position(|s| s.section == item.section) {
            Some(i) => i,
            None => {
                sections.push(SectionScore {
                    section: item.section.clone(),
                    evaluated: 0,
                    correct: 0,
                    accuracy: 0.0,
                });
                sections.len() - 1
            }
        };
        sections[idx].evaluated += 1;
        sections[idx].correct += usize::from(item.correct);
    }
    for s in &mut sections {
        s.accuracy = s.correct as f64 / s.evaluated as f64;
    }
    let evaluated = items.iter().filter(|i| i.predicted.is_some()).count();
    let correct = items.iter().filter(|i| i.correct).count();
    AnalogyReport {
        task: "analogy",
        restrict_vocab,
        skipped: items.len() - evaluated,
        evaluated,
        correct,
        accuracy: if evaluated > 0 {
            correct as f64 / evaluated as f64
        } else {
            0.0
        },
        items,
        sections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocab, VocabEntry};
    use crate::model::{Dims, ModelKind, ModelParams};
    use crate::subword::SubwordIndex;
    use crate::trainer::WindowMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Model whose word vectors are exactly the given rows (no n-grams).
    pub(crate) fn model_with_vectors(words: &[&str], vectors: &[Vec<f32>]) -> Model {
        let n = words.len();
        let entries = words
            .iter()
            .enumerate()
            .map(|(i, w)| VocabEntry {
                word: w.to_string(),
                count: (n - i) as u64 + 10,
            })
            .collect::<Vec<_>>();
        let total = entries.iter().map(|e| e.count).sum();
        let vocab = Vocab::from_parts(entries, total, 1).unwrap();
        let dim = vectors[0].len();
        let mut params = ModelParams::<f32>::zeros(
            ModelKind::Subword,
            Dims {
                vocab_size: n,
                buckets: 1,
                dim,
                window: 2,
            },
        )
        .unwrap();
        for (i, v) in vectors.iter().enumerate() {
            params.input.row_mut(i).copy_from_slice(v);
        }
        Model {
            params,
            vocab,
            // n-grams longer than any test word never occur
            subwords: SubwordIndex::new(50, 50, 1, true).unwrap(),
            window_mode: WindowMode::Fixed,
            seed: 0,
        }
    }

    #[test]
    fn parses_sections_and_rejects_bad_lines() {
        let qs = parse_questions(": capitals\nAthens Greece Oslo Norway\n\n: family\nboy girl man woman\n").unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].section, "capitals");
        assert_eq!(qs[0].words[0], "athens");
        assert_eq!(qs[1].section, "family");
        assert_eq!(qs[1].line, 5);
        let err = parse_questions("a b c\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn planted_solution_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let words = ["a", "b", "c", "d", "e", "f", "g", "h"];
        let mut vectors: Vec<Vec<f32>> = (0..8)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        vectors[3] = (0..6).map(|j| vectors[1][j] - vectors[0][j] + vectors[2][j]).collect();
        let model = model_with_vectors(&words, &vectors);
        let qs = parse_questions("a b c d\n").unwrap();
        let r = evaluate_analogies(&model, &qs, DEFAULT_ANALOGY_VOCAB).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.items[0].predicted.as_deref(), Some("d"));
    }

    #[test]
    fn zero_vectors_tie_to_lowest_id() {
        let words = ["a", "b", "c", "d", "e"];
        let model = model_with_vectors(&words, &vec![vec![0.0; 3]; 5]);
        let qs = parse_questions("b c e a\nb c e d\n").unwrap();
        let r = evaluate_analogies(&model, &qs, 100).unwrap();
        assert_eq!(r.items[0].predicted.as_deref(), Some("a"));
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn oov_questions_are_skipped() {
        let words = ["a", "b", "c", "d", "e"];
        let model = model_with_vectors(&words, &vec![vec![1.0, 0.0]; 5]);
        let qs = parse_questions("a b c zebra\na b c d\n").unwrap();
        let r = evaluate_analogies(&model, &qs, 100).unwrap();
        assert_eq!((r.evaluated, r.skipped), (1, 1));
        // restricting the vocabulary turns "e" into an unknown word
        let qs = parse_questions("a b c e\n").unwrap();
        let r = evaluate_analogies(&model, &qs, 4).unwrap();
        assert_eq!(r.skipped, 1);
    }

    #[test]
    fn empty_question_set_is_an_error() {
        let model = model_with_vectors(&["a"], &[vec![1.0]]);
        assert!(evaluate_analogies(&model, &[], 10).is_err());
    }

    #[test]
    fn random_embeddings_score_at_chance() {
        // chance level is 1 / (V - 3): with 4 words the only candidate left
        // is always d, with 5 words it is d half of the time
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let four = ["a", "b", "c", "d"];
        for _ in 0..20 {
            let vectors: Vec<Vec<f32>> = (0..4)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let model = model_with_vectors(&four, &vectors);
            let r = evaluate_analogies(&model, &parse_questions("c a d b").unwrap(), 10).unwrap();
            assert_eq!(r.accuracy, 1.0);
        }
        let words = ["a", "b", "c", "d", "e"];
        let mut hits = 0;
        let mut total = 0;
        for _ in 0..400 {
            let vectors: Vec<Vec<f32>> = (0..5)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let model = model_with_vectors(&words, &vectors);
            let mut order = [0usize, 1, 2, 3, 4];
            for i in (1..5).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let line = format!("{} {} {} {}", words[order[0]], words[order[1]], words[order[2]], words[order[3]]);
            let r = evaluate_analogies(&model, &parse_questions(&line).unwrap(), 10).unwrap();
            hits += r.correct;
            total += 1;
        }
        let acc = hits as f64 / total as f64;
        // binomial(400, 1/2): 4 standard deviations is 0.1
        assert!((acc - 0.5).abs() < 0.1, "accuracy {acc}");
    }
}
