//! Model checkpoints: `DCCK` magic, `u32` version, `u64` header length,
//! JSON header, `u64` tensor count, then per tensor a `u64` name length, the
//! UTF-8 name and a matrix container.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use discourse_core::train::BucketModel;
use discourse_core::{Architecture, Model, ModelConfig, Tensor};
use serde::{Deserialize, Serialize};

use crate::formats::{read_matrix, write_matrix, Element};

pub const MAGIC: [u8; 4] = *b"DCCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub arch: String,
    pub vocab_size: usize,
    pub word_dim: usize,
    pub comment_dim: usize,
    pub word_hidden: usize,
    pub sentence_hidden: usize,
    pub comment_hidden: usize,
    pub filters: usize,
    pub mlp_hidden: [usize; 2],
    pub classes: usize,
    pub c_max: usize,
    pub bucket_len: usize,
    pub stage: usize,
    pub fold: usize,
    pub seed: u64,
    pub precision: String,
}

impl Header {
    pub fn new<T: Element>(m: &BucketModel<T>, fold: usize, seed: u64) -> Self {
        let c = &m.model.config;
        Header {
            version: VERSION,
            arch: c.arch.name().to_string(),
            vocab_size: c.vocab_size,
            word_dim: c.word_dim,
            comment_dim: c.comment_dim,
            word_hidden: c.word_hidden,
            sentence_hidden: c.sentence_hidden,
            comment_hidden: c.comment_hidden,
            filters: c.filters,
            mlp_hidden: c.mlp_hidden,
            classes: c.classes,
            c_max: c.c_max,
            bucket_len: m.len,
            stage: m.stage,
            fold,
            seed,
            precision: format!("f{}", T::BITS),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let arch: Architecture = self.arch.parse()?;
        Ok(ModelConfig {
            arch,
            vocab_size: self.vocab_size,
            word_dim: self.word_dim,
            comment_dim: self.comment_dim,
            word_hidden: self.word_hidden,
            sentence_hidden: self.sentence_hidden,
            comment_hidden: self.comment_hidden,
            filters: self.filters,
            mlp_hidden: self.mlp_hidden,
            classes: self.classes,
            c_max: self.c_max,
        })
    }
}

pub fn file_name(arch: Architecture, fold: usize, len: usize) -> String {
    format!("{}.fold{fold}.len{len}.ckpt", arch.name())
}

pub fn write_checkpoint<T: Element>(w: &mut impl Write, m: &BucketModel<T>, fold: usize, seed: u64) -> Result<()> {
    let header = serde_json::to_vec(&Header::new(m, fold, seed))?;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(m.model.store.len() as u64).to_le_bytes())?;
    for (name, t) in m.model.store.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_matrix(w, t)?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, n: u64) -> Result<Vec<u8>> {
    ensure!(n < 1 << 30, "field of {n} bytes");
    let mut b = vec![0u8; n as usize];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).context("checkpoint header")?;
    ensure!(magic == MAGIC, "not a checkpoint");
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    ensure!(version == VERSION, "checkpoint version {version}");
    let n = read_u64(r)?;
    let header: Header = serde_json::from_slice(&read_bytes(r, n)?)?;
    Ok(header)
}

pub fn read_checkpoint<T: Element>(r: &mut impl Read) -> Result<(Header, BucketModel<T>)> {
    let header = read_header(r)?;
    ensure!(
        header.precision == format!("f{}", T::BITS),
        "checkpoint holds {} values, expected f{}",
        header.precision,
        T::BITS
    );
    let count = read_u64(r)?;
    let mut tensors: Vec<(String, Tensor<T>)> = Vec::new();
    for _ in 0..count {
        let n = read_u64(r)?;
        let name = String::from_utf8(read_bytes(r, n)?)?;
        tensors.push((name, read_matrix(r)?));
    }
    let model = Model::from_tensors(header.model_config()?, tensors)?;
    let bm = BucketModel {
        len: header.bucket_len,
        c_max: header.c_max,
        model,
        stage: header.stage,
    };
    Ok((header, bm))
}

pub fn save<T: Element>(dir: &Path, m: &BucketModel<T>, fold: usize, seed: u64) -> Result<PathBuf> {
    let path = dir.join(file_name(m.model.arch(), fold, m.len));
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_checkpoint(&mut w, m, fold, seed)?;
    w.flush()?;
    Ok(path)
}

pub fn load<T: Element>(path: &Path) -> Result<(Header, BucketModel<T>)> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    read_checkpoint(&mut r).with_context(|| format!("reading {}", path.display()))
}

pub fn load_header(path: &Path) -> Result<Header> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    read_header(&mut r).with_context(|| format!("reading {}", path.display()))
}

/// Checkpoints in `dir` grouped by fold, each fold's models ascending by
/// bucket length.
pub fn load_dir<T: Element>(dir: &Path) -> Result<Vec<(usize, Vec<BucketModel<T>>)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    let mut folds: std::collections::BTreeMap<usize, Vec<BucketModel<T>>> = Default::default();
    for p in paths {
        let (h, m) = load::<T>(&p)?;
        folds.entry(h.fold).or_default().push(m);
    }
    ensure!(!folds.is_empty(), "no checkpoints in {}", dir.display());
    Ok(folds
        .into_iter()
        .map(|(f, mut ms)| {
            ms.sort_by_key(|m| m.len);
            (f, ms)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use discourse_core::rng::seeded;

    #[test]
    fn round_trip_is_bit_exact() {
        for arch in Architecture::ALL {
            let cfg = ModelConfig::toy(arch, 8, 3, 4);
            let m = BucketModel {
                len: 3,
                c_max: 4,
                model: Model::<f32>::new(cfg, &mut seeded(5, 0)).unwrap(),
                stage: 1,
            };
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &m, 2, 9).unwrap();
            let (h, back) = read_checkpoint::<f32>(&mut buf.as_slice()).unwrap();
            assert_eq!((h.fold, h.seed, h.bucket_len), (2, 9, 3));
            assert_eq!(back, m);
            assert!(read_checkpoint::<f64>(&mut buf.as_slice()).is_err());
        }
        assert_eq!(file_name(Architecture::HlstmAttn, 0, 3), "hlstm-attn.fold0.len3.ckpt");
    }
}
