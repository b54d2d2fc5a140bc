//! Binary model files and text vector export.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "PINE" u32 version
//! u8 kind  u8 window_mode  u8 hash  u8 include_word
//! u64 dim  u64 positional_dim  u64 window  u64 minn  u64 maxn  u64 buckets
//! u64 seed  u64 total_tokens  u64 min_count
//! u32 len, unicode version bytes
//! u64 V, then V × (u32 len, word bytes, u64 count)
//! f32 input (V + B) × D, f32 output V × D, f32 positional 2c × D'
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::{unicode_version, Vocab, VocabEntry};
use crate::embedding::Model;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ModelKind, ModelParams};
use crate::subword::{SubwordIndex, HASH_FNV1A_32};
use crate::trainer::WindowMode;

pub const MAGIC: &[u8; 4] = b"PINE";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any single preallocation while decoding, in elements.
const CHUNK: usize = 1 << 20;
const MAX_WORD_BYTES: usize = 1 << 16;

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Subword => 0,
        ModelKind::Positional => 1,
        ModelKind::Constrained { .. } => 2,
    }
}

fn window_code(mode: WindowMode) -> u8 {
    match mode {
        WindowMode::Fixed => 0,
        WindowMode::UniformShrink => 1,
    }
}

/// Serializes a model into `w`.
pub fn encode_model<W: Write>(model: &Model, w: &mut W) -> std::io::Result<()> {
    let p = &model.params;
    let s = &model.subwords;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[
        kind_code(p.kind()),
        window_code(model.window_mode),
        HASH_FNV1A_32,
        u8::from(s.include_word),
    ])?;
    for x in [
        p.dim(),
        p.positional_dim(),
        p.window(),
        s.minn,
        s.maxn,
        s.buckets,
    ] {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    for x in [model.seed, model.vocab.total_tokens(), model.vocab.min_count()] {
        w.write_all(&x.to_le_bytes())?;
    }
    let uv = unicode_version();
    w.write_all(&(uv.len() as u32).to_le_bytes())?;
    w.write_all(uv.as_bytes())?;
    w.write_all(&(model.vocab.len() as u64).to_le_bytes())?;
    for e in model.vocab.entries() {
        w.write_all(&(e.word.len() as u32).to_le_bytes())?;
        w.write_all(e.word.as_bytes())?;
        w.write_all(&e.count.to_le_bytes())?;
    }
    let empty = Matrix::<f32>::zeros(0, 0);
    for m in [&p.input, &p.output, p.positional.as_ref().unwrap_or(&empty)] {
        for x in m.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes a model file and syncs it to disk.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_model(model, &mut w).map_err(|e| Error::io(path, e))?;
    let file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

struct Decoder<R> {
    r: R,
}

impl<R: Read> Decoder<R> {
    fn bytes<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| Error::format(field, "file truncated"))?;
        Ok(buf)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.bytes::<1>(field)?[0])
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(field)?))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(field)?))
    }

    fn usize(&mut self, field: &'static str) -> Result<usize> {
        usize::try_from(self.u64(field)?).map_err(|_| Error::format(field, "value too large"))
    }

    fn string(&mut self, len: usize, field: &'static str) -> Result<String> {
        let mut buf = vec![0u8; len];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| Error::format(field, "file truncated"))?;
        String::from_utf8(buf).map_err(|_| Error::format(field, "invalid UTF-8"))
    }

    /// Reads `rows × cols` floats without trusting the header for the
    /// allocation size: memory grows only as data actually arrives.
    fn matrix(&mut self, rows: usize, cols: usize, field: &'static str) -> Result<Matrix<f32>> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(field, "dimensions overflow"))?;
        let mut data = Vec::with_capacity(n.min(CHUNK));
        let mut buf = vec![0u8; 4 * n.min(CHUNK)];
        while data.len() < n {
            let take = (n - data.len()).min(CHUNK);
            let chunk = &mut buf[..4 * take];
            self.r
                .read_exact(chunk)
                .map_err(|_| Error::format(field, "file truncated"))?;
            data.extend(
                chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            );
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericFailure(format!(
                "{field}: non-finite value at row {} column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

/// Parses a model from any byte stream. Trailing bytes are an error.
pub fn decode_model<R: Read>(r: R) -> Result<Model> {
    let mut d = Decoder { r };
    if &d.bytes::<4>("magic")? != MAGIC {
        return Err(Error::format("magic", "not a model file"));
    }
    let version = d.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let kind_code = d.u8("kind")?;
    let window_mode = match d.u8("window_mode")? {
        0 => WindowMode::Fixed,
        1 => WindowMode::UniformShrink,
        x => return Err(Error::format("window_mode", format!("unknown code {x}"))),
    };
    let hash = d.u8("hash")?;
    if hash != HASH_FNV1A_32 {
        return Err(Error::format("hash", format!("unknown hash function {hash}")));
    }
    let include_word = match d.u8("include_word")? {
        0 => false,
        1 => true,
        x => return Err(Error::format("include_word", format!("expected 0 or 1, found {x}"))),
    };
    let dim = d.usize("dim")?;
    let positional_dim = d.usize("positional_dim")?;
    let window = d.usize("window")?;
    let minn = d.usize("minn")?;
    let maxn = d.usize("maxn")?;
    let buckets = d.usize("buckets")?;
    let seed = d.u64("seed")?;
    let total_tokens = d.u64("total_tokens")?;
    let min_count = d.u64("min_count")?;
    let kind = match kind_code {
        0 if positional_dim == 0 => ModelKind::Subword,
        1 if positional_dim == dim => ModelKind::Positional,
        2 if positional_dim > 0 && positional_dim < dim => ModelKind::Constrained { positional_dim },
        0..=2 => {
            return Err(Error::format(
                "positional_dim",
                format!("{positional_dim} does not fit kind {kind_code} with dim {dim}"),
            ))
        }
        x => return Err(Error::format("kind", format!("unknown code {x}"))),
    };
    if dim == 0 {
        return Err(Error::format("dim", "must be positive"));
    }
    if window == 0 || window > i32::MAX as usize / 2 {
        return Err(Error::format("window", format!("invalid window {window}")));
    }
    let subwords = SubwordIndex::new(minn, maxn, buckets, include_word)
        .map_err(|e| Error::format("subwords", e.to_string()))?;
    let uv_len = d.u32("unicode_version")? as usize;
    if uv_len > 256 {
        return Err(Error::format("unicode_version", "too long"));
    }
    d.string(uv_len, "unicode_version")?;

    let v = d.usize("vocab_size")?;
    if v == 0 {
        return Err(Error::format("vocab_size", "empty vocabulary"));
    }
    if v > u32::MAX as usize {
        return Err(Error::format("vocab_size", "too large"));
    }
    let mut entries = Vec::with_capacity(v.min(CHUNK));
    for _ in 0..v {
        let len = d.u32("vocab")? as usize;
        if len == 0 || len > MAX_WORD_BYTES {
            return Err(Error::format("vocab", format!("invalid word length {len}")));
        }
        let word = d.string(len, "vocab")?;
        let count = d.u64("vocab")?;
        entries.push(VocabEntry { word, count });
    }
    let vocab = Vocab::from_parts(entries, total_tokens, min_count)
        .map_err(|e| Error::format("vocab", e.to_string()))?;

    let input_rows = v
        .checked_add(buckets)
        .ok_or_else(|| Error::format("buckets", "too large"))?;
    let input = d.matrix(input_rows, dim, "input")?;
    let output = d.matrix(v, dim, "output")?;
    let positional = if kind.is_positional() {
        Some(d.matrix(2 * window, positional_dim, "positional")?)
    } else {
        None
    };
    let mut rest = [0u8; 1];
    match d.r.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format("trailer", "unexpected bytes after positional matrix")),
        Err(e) => return Err(Error::format("trailer", e.to_string())),
    }
    let params = ModelParams::from_parts(kind, window, input, output, positional)
        .map_err(|e| Error::format("dim", e.to_string()))?;
    Ok(Model {
        params,
        vocab,
        subwords,
        window_mode,
        seed,
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_model(BufReader::new(file))
}

/// Writes `V D` and one line per vocabulary word with its input vector.
pub fn write_text_vectors<W: Write>(model: &Model, w: &mut W) -> Result<()> {
    let wrap = |e| Error::Io {
        context: "text vectors".into(),
        source: e,
    };
    writeln!(w, "{} {}", model.vocab.len(), model.params.dim()).map_err(wrap)?;
    for word in model.vocab.words() {
        let v = model.word_vector(word)?;
        write!(w, "{word}").map_err(wrap)?;
        for x in v {
            write!(w, " {x}").map_err(wrap)?;
        }
        writeln!(w).map_err(wrap)?;
    }
    Ok(())
}

pub fn export_text_vectors(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_text_vectors(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses the text vector format written by [`write_text_vectors`].
pub fn read_text_vectors<R: BufRead>(r: R) -> Result<Vec<(String, Vec<f32>)>> {
    let mut lines = r.lines().enumerate();
    let bad = |line: usize, msg: String| Error::InvalidInput(format!("line {}: {msg}", line + 1));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty vector file".into()))?;
    let header = header.map_err(|e| bad(0, e.to_string()))?;
    let mut fields = header.split_whitespace();
    let mut number = |name: &str| -> Result<usize> {
        fields
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad(0, format!("expected {name} in header")))
    };
    let (n, dim) = (number("word count")?, number("dimension")?);
    if fields.next().is_some() {
        return Err(bad(0, "header has more than two fields".into()));
    }
    let mut out = Vec::with_capacity(n.min(CHUNK));
    for (i, line) in lines {
        let line = line.map_err(|e| bad(i, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default().to_owned();
        let v = parts
            .map(|x| x.parse::<f32>().map_err(|_| bad(i, format!("bad number {x:?}"))))
            .collect::<Result<Vec<f32>>>()?;
        if v.len() != dim {
            return Err(bad(i, format!("expected {dim} values, found {}", v.len())));
        }
        if out.len() == n {
            return Err(bad(i, format!("more than {n} vectors")));
        }
        out.push((word, v));
    }
    if out.len() != n {
        return Err(Error::InvalidInput(format!(
            "header declares {n} vectors, found {}",
            out.len()
        )));
    }
    Ok(out)
}
