//! Parameter storage and the forward math shared by all three architectures.
//!
//! The context vector of a window with present positions `p` and context
//! words `w_p` is
//!
//! ```text
//! h = 1/m * sum_p u(w_p) ⊙ [d_p, 1, ..., 1]
//! ```
//!
//! where `u(w)` sums the input rows of the word's subwords, `d_p` has `D'`
//! features and `m` counts the present positions. The subword model uses
//! `D' = 0`, the positional model `D' = D`. A candidate word `w` scores
//! `h · v_w` against its output row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Subword,
    Positional,
    Constrained { positional_dim: usize },
}

impl ModelKind {
    pub fn is_positional(&self) -> bool {
        !matches!(self, ModelKind::Subword)
    }

    /// Number of position-dependent features `D'` for a model with `dim` features.
    pub fn positional_dim(&self, dim: usize) -> usize {
        match *self {
            ModelKind::Subword => 0,
            ModelKind::Positional => dim,
            ModelKind::Constrained { positional_dim } => positional_dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Subword => "subword",
            ModelKind::Positional => "positional",
            ModelKind::Constrained { .. } => "constrained",
        }
    }
}

/// Shape of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub vocab_size: usize,
    pub buckets: usize,
    pub dim: usize,
    pub window: usize,
}

/// Input, output and positional matrices of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F = f32> {
    kind: ModelKind,
    window: usize,
    /// `(V + B) × D`, vocabulary rows first, then hashed n-gram rows.
    pub input: Matrix<F>,
    /// `V × D`, one row per vocabulary word.
    pub output: Matrix<F>,
    /// `2c × D'`, rows ordered `-c, …, -1, 1, …, c`; absent for subword models.
    pub positional: Option<Matrix<F>>,
}

/// One present context position and the input rows of the word there.
#[derive(Clone, Copy, Debug)]
pub struct ContextSlot<'a> {
    pub position: i32,
    pub rows: &'a [u32],
}

impl<F: Real> ModelParams<F> {
    pub fn zeros(kind: ModelKind, dims: Dims) -> Result<Self> {
        let dp = kind.positional_dim(dims.dim);
        let positional = kind
            .is_positional()
            .then(|| Matrix::zeros(2 * dims.window, dp));
        Self::from_parts(
            kind,
            dims.window,
            Matrix::zeros(dims.vocab_size + dims.buckets, dims.dim),
            Matrix::zeros(dims.vocab_size, dims.dim),
            positional,
        )
    }

    pub fn from_parts(
        kind: ModelKind,
        window: usize,
        input: Matrix<F>,
        output: Matrix<F>,
        positional: Option<Matrix<F>>,
    ) -> Result<Self> {
        let dim = input.cols();
        if dim == 0 {
            return Err(Error::Dimension("feature count must be positive".into()));
        }
        if window == 0 {
            return Err(Error::Dimension("window size must be positive".into()));
        }
        if output.cols() != dim {
            return Err(Error::Dimension(format!(
                "output matrix has {} features, input has {dim}",
                output.cols()
            )));
        }
        if output.rows() > input.rows() {
            return Err(Error::Dimension(
                "input matrix must hold a row for every vocabulary word".into(),
            ));
        }
        if let ModelKind::Constrained { positional_dim } = kind {
            if positional_dim == 0 || positional_dim >= dim {
                return Err(Error::Dimension(format!(
                    "constrained model needs 0 < D' < D, got D'={positional_dim}, D={dim}"
                )));
            }
        }
        match (&positional, kind.is_positional()) {
            (None, false) => {}
            (Some(p), true) => {
                let dp = kind.positional_dim(dim);
                if p.rows() != 2 * window || p.cols() != dp {
                    return Err(Error::Dimension(format!(
                        "positional matrix is {}x{}, expected {}x{dp}",
                        p.rows(),
                        p.cols(),
                        2 * window
                    )));
                }
            }
            (Some(_), false) => {
                return Err(Error::Dimension(
                    "subword model cannot carry positional vectors".into(),
                ))
            }
            (None, true) => {
                return Err(Error::Dimension("positional vectors missing".into()))
            }
        }
        Ok(ModelParams {
            kind,
            window,
            input,
            output,
            positional,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn positional_dim(&self) -> usize {
        self.kind.positional_dim(self.dim())
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn vocab_size(&self) -> usize {
        self.output.rows()
    }

    pub fn buckets(&self) -> usize {
        self.input.rows() - self.output.rows()
    }

    /// Relative positions `-c..=-1, 1..=c`.
    pub fn positions(&self) -> Vec<i32> {
        positions(self.window)
    }

    /// Row of the positional matrix holding `d_p`.
    #[inline]
    pub fn position_row(&self, p: i32) -> Option<usize> {
        position_row(self.window, p)
    }

    pub fn positional_vector(&self, p: i32) -> Option<&[F]> {
        let row = self.position_row(p)?;
        self.positional.as_ref().map(|m| m.row(row))
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite()
            && self.output.is_finite()
            && self.positional.as_ref().is_none_or(|m| m.is_finite())
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            kind: self.kind,
            window: self.window,
            input: self.input.cast(),
            output: self.output.cast(),
            positional: self.positional.as_ref().map(Matrix::cast),
        }
    }

    /// Sum of the given input rows.
    pub fn word_input_vector(&self, rows: &[u32]) -> Result<Vec<F>> {
        if rows.is_empty() {
            return Err(Error::UnrepresentableWord(
                "word has no input rows".into(),
            ));
        }
        self.check_rows(rows)?;
        let mut out = vec![F::zero(); self.dim()];
        for &g in rows {
            crate::matrix::add_assign(&mut out, self.input.row(g as usize));
        }
        Ok(out)
    }

    /// Elementwise product with `d_p` on the first `D'` features, identity
    /// on the rest.
    pub fn weighted_input_vector(&self, rows: &[u32], position: i32) -> Result<Vec<F>> {
        let u = self.word_input_vector(rows)?;
        match self.kind {
            ModelKind::Subword => Ok(u),
            _ => {
                let d = self
                    .positional_vector(position)
                    .ok_or_else(|| Error::InvalidInput(format!("position {position} outside window")))?;
                constrained_hadamard(&u, d)
            }
        }
    }

    /// Context vector of a window; see the module documentation.
    pub fn context_vector(&self, slots: &[ContextSlot]) -> Result<Vec<F>> {
        self.check_window(slots)?;
        let mut h = vec![F::zero(); self.dim()];
        let mut heads = vec![F::zero(); slots.len() * self.positional_dim()];
        if self.positional_dim() == 0 {
            // fixed summation order, so permuted contexts give identical bits
            let mut sorted = slots.to_vec();
            sorted.sort_by(|a, b| a.rows.cmp(b.rows));
            self.context_vector_into(&sorted, &mut h, &mut heads);
        } else {
            self.context_vector_into(slots, &mut h, &mut heads);
        }
        Ok(h)
    }

    /// Unchecked context vector computation; `heads` receives the first `D'`
    /// features of every slot's unweighted input vector.
    pub(crate) fn context_vector_into(&self, slots: &[ContextSlot], h: &mut [F], heads: &mut [F]) {
        let dp = self.positional_dim();
        h.fill(F::zero());
        for (i, slot) in slots.iter().enumerate() {
            let head = &mut heads[i * dp..(i + 1) * dp];
            head.fill(F::zero());
            for &g in slot.rows {
                let row = self.input.row(g as usize);
                let (row_head, row_tail) = row.split_at(dp);
                head.iter_mut().zip(row_head).for_each(|(a, &b)| *a = *a + b);
                h[dp..]
                    .iter_mut()
                    .zip(row_tail)
                    .for_each(|(a, &b)| *a = *a + b);
            }
            if dp > 0 {
                let d = self
                    .positional
                    .as_ref()
                    .expect("positional model")
                    .row(self.position_row(slot.position).expect("valid position"));
                h[..dp]
                    .iter_mut()
                    .zip(head.iter().zip(d))
                    .for_each(|(a, (&u, &w))| *a = *a + u * w);
            }
        }
        let scale = F::one() / F::from_f64(slots.len() as f64);
        h.iter_mut().for_each(|x| *x = *x * scale);
    }

    pub fn score(&self, target: u32, slots: &[ContextSlot]) -> Result<F> {
        self.check_word(target)?;
        let h = self.context_vector(slots)?;
        Ok(dot(&h, self.output.row(target as usize)))
    }

    /// Scores of every vocabulary word against one context vector.
    pub fn scores(&self, h: &[F]) -> Vec<F> {
        self.output.iter_rows().map(|v| dot(h, v)).collect()
    }

    /// Negative-sampling probability `σ(s_t) · Π σ(−s_n)`.
    pub fn prediction_prob(&self, target: u32, slots: &[ContextSlot], negatives: &[u32]) -> Result<F> {
        Ok((-self.loss(target, slots, negatives)?).exp())
    }

    /// `−ln Pr(target | context)` under negative sampling.
    pub fn loss(&self, target: u32, slots: &[ContextSlot], negatives: &[u32]) -> Result<F> {
        self.check_word(target)?;
        if negatives.is_empty() {
            return Err(Error::InvalidInput("negative set is empty".into()));
        }
        for &n in negatives {
            self.check_word(n)?;
            if n == target {
                return Err(Error::InvalidInput("target word among negatives".into()));
            }
        }
        let h = self.context_vector(slots)?;
        let pos = dot(&h, self.output.row(target as usize));
        let mut loss = softplus(-pos);
        for &n in negatives {
            loss = loss + softplus(dot(&h, self.output.row(n as usize)));
        }
        Ok(loss)
    }

    pub(crate) fn check_window(&self, slots: &[ContextSlot]) -> Result<()> {
        if slots.is_empty() {
            return Err(Error::EmptyContext);
        }
        let mut seen = vec![false; 2 * self.window];
        for slot in slots {
            let row = self.position_row(slot.position).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "position {} outside window of size {}",
                    slot.position, self.window
                ))
            })?;
            if std::mem::replace(&mut seen[row], true) {
                return Err(Error::InvalidInput(format!(
                    "position {} repeated in window",
                    slot.position
                )));
            }
            if slot.rows.is_empty() {
                return Err(Error::UnrepresentableWord(format!(
                    "context word at position {} has no input rows",
                    slot.position
                )));
            }
            self.check_rows(slot.rows)?;
        }
        Ok(())
    }

    fn check_rows(&self, rows: &[u32]) -> Result<()> {
        match rows.iter().find(|&&g| g as usize >= self.input.rows()) {
            Some(g) => Err(Error::Dimension(format!(
                "input row {g} out of range {}",
                self.input.rows()
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_word(&self, w: u32) -> Result<()> {
        if (w as usize) < self.vocab_size() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "word id {w} out of vocabulary of size {}",
                self.vocab_size()
            )))
        }
    }
}

pub fn positions(window: usize) -> Vec<i32> {
    let c = window as i32;
    (-c..0).chain(1..=c).collect()
}

#[inline]
pub fn position_row(window: usize, p: i32) -> Option<usize> {
    let c = window as i32;
    match p {
        p if p < 0 && p >= -c => Some((p + c) as usize),
        p if p > 0 && p <= c => Some((p + c - 1) as usize),
        _ => None,
    }
}

/// `u ⊙ [d, 1, …, 1]`; `d` may be shorter than `u`.
pub fn constrained_hadamard<F: Real>(u: &[F], d: &[F]) -> Result<Vec<F>> {
    if d.len() > u.len() {
        return Err(Error::Dimension(format!(
            "positional vector has {} features, input vector only {}",
            d.len(),
            u.len()
        )));
    }
    let mut out = u.to_vec();
    out.iter_mut().zip(d).for_each(|(x, &w)| *x = *x * w);
    Ok(out)
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}
