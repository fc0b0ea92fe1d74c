//! On-disk forms of vocabularies, idf tables and dense matrices.
//!
//! Matrix container: `DCEM` magic, `u32` version (1 = `f32`, 2 = `f64`
//! payload), `u64` rows, `u64` cols, then row-major little-endian values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use discourse_core::{IdfKind, IdfTable, Real, Tensor, Vocab};

pub const MATRIX_MAGIC: [u8; 4] = *b"DCEM";

/// Element types allowed in matrix files.
pub trait Element: Real {
    const VERSION: u32;
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const VERSION: u32 = 1;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const VERSION: u32 = 2;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

pub fn write_matrix<T: Element>(w: &mut impl Write, m: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + m.len() * (T::BITS as usize / 8));
    buf.extend_from_slice(&MATRIX_MAGIC);
    buf.extend_from_slice(&T::VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.data() {
        v.put(&mut buf);
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_matrix<T: Element>(r: &mut impl Read) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).context("matrix header")?;
    ensure!(magic == MATRIX_MAGIC, "not a matrix container");
    let version = read_u32(r)?;
    ensure!(
        version == T::VERSION,
        "matrix payload version {version}, expected {} ({}-bit)",
        T::VERSION,
        T::BITS
    );
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let width = T::BITS as usize / 8;
    let n = rows.checked_mul(cols).context("matrix size overflow")?;
    let mut bytes = vec![0u8; n * width];
    r.read_exact(&mut bytes).context("matrix payload truncated")?;
    let data = bytes.chunks_exact(width).map(T::take).collect();
    Ok(Tensor::from_vec(rows, cols, data)?)
}

pub fn save_matrix<T: Element>(path: &Path, m: &Tensor<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix<T: Element>(path: &Path) -> Result<Tensor<T>> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    read_matrix(&mut r).with_context(|| format!("reading {}", path.display()))
}

/// Row labels of a matrix file, one per line.
pub fn save_rows(path: &Path, labels: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, l) in labels.into_iter().enumerate() {
        writeln!(w, "{i}\t{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_rows(path: &Path) -> Result<Vec<String>> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let (idx, label) = line.split_once('\t').with_context(|| format!("{}:{}: no tab", path.display(), i + 1))?;
        ensure!(idx.parse::<usize>().ok() == Some(i), "{}:{}: row index {idx}", path.display(), i + 1);
        out.push(label.to_string());
    }
    Ok(out)
}

/// `token \t index \t count`, reserved rows included.
pub fn save_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (tok, idx, count) in vocab.entries() {
        writeln!(w, "{tok}\t{idx}\t{count}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_vocab(path: &Path) -> Result<Vocab> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut entries = Vec::new();
    let mut unk = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        ensure!(f.len() == 3, "{}:{}: expected 3 fields", path.display(), i + 1);
        let idx: usize = f[1].parse().with_context(|| format!("{}:{}: index", path.display(), i + 1))?;
        let count: u64 = f[2].parse().with_context(|| format!("{}:{}: count", path.display(), i + 1))?;
        ensure!(idx == i, "{}:{}: index {idx} out of order", path.display(), i + 1);
        match idx {
            0 => {}
            1 => unk = count,
            _ => entries.push((f[0].to_string(), count)),
        }
    }
    Ok(Vocab::from_entries(entries, unk)?)
}

/// `token \t idf` in index order.
pub fn save_idf(path: &Path, idf: &IdfTable, vocab: &Vocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (idx, v) in idf.iter() {
        writeln!(w, "{}\t{v}", vocab.token(idx))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an idf table written by [`save_idf`]. The file does not record the
/// document count, so the caller supplies it.
pub fn load_idf(path: &Path, kind: IdfKind, documents: usize, vocab: &Vocab) -> Result<IdfTable> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut values = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let (tok, v) = line.split_once('\t').with_context(|| format!("{}:{}: no tab", path.display(), i + 1))?;
        let Some(idx) = vocab.get(tok) else {
            bail!("{}:{}: token `{tok}` not in vocabulary", path.display(), i + 1);
        };
        values.insert(idx, v.parse::<f64>()?);
    }
    Ok(IdfTable::from_values(kind, documents, values))
}
