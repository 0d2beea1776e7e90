//! Dense 64-bit float arrays, the named parameter store, and the binary
//! checkpoint format.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense array of f64 values with an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/value count mismatch"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill_uniform<R: Rng>(&mut self, rng: &mut R, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = rng.gen_range(lo..hi);
        }
    }
}

/// Named parameter store; the model's θ. Iteration order is the sorted
/// name order, which every seeded routine relies on for determinism.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    entries: BTreeMap<String, Tensor>,
}

/// A named gradient map aligned with [`Parameters`]. Parameters not
/// reached by a loss are simply absent (treated as zero).
pub type GradMap = BTreeMap<String, Tensor>;

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(
            !self.entries.contains_key(&name),
            "duplicate parameter '{name}'"
        );
        self.entries.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn n_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> GradMap {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(&v.shape)))
            .collect()
    }
}

// --- checkpoint format -----------------------------------------------------
//
// magic "FTCK" | version u32 | label-space hash u64 | meta len u32 | meta
// JSON (caller-defined echo: net config, vocab) | n params u32 | for each
// param: name len u32, name bytes, ndims u32, dims u64.., values f64..
// All integers and floats little-endian.

const MAGIC: &[u8; 4] = b"FTCK";
const VERSION: u32 = 1;

pub fn save_checkpoint<W: Write>(
    mut w: W,
    params: &Parameters,
    label_hash: u64,
    meta_json: &str,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&label_hash.to_le_bytes())?;
    let meta = meta_json.as_bytes();
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params.iter() {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
        for d in &tensor.shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct Checkpoint {
    pub params: Parameters,
    pub label_hash: u64,
    pub meta_json: String,
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut h = [0u8; 8];
    r.read_exact(&mut h)?;
    let label_hash = u64::from_le_bytes(h);
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta_json = String::from_utf8(meta)
        .map_err(|_| Error::Checkpoint("metadata is not valid UTF-8".into()))?;
    let n_params = read_u32(&mut r)? as usize;
    let mut params = Parameters::new();
    for _ in 0..n_params {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not valid UTF-8".into()))?;
        let ndims = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            let mut d = [0u8; 8];
            r.read_exact(&mut d)?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        params.insert(name, Tensor::from_vec(&shape, data));
    }
    Ok(Checkpoint {
        params,
        label_hash,
        meta_json,
    })
}

pub fn save_checkpoint_file(
    path: impl AsRef<Path>,
    params: &Parameters,
    label_hash: u64,
    meta_json: &str,
) -> Result<()> {
    let mut buf = Vec::new();
    save_checkpoint(&mut buf, params, label_hash, meta_json)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint_file(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    load_checkpoint(&bytes[..])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let mut params = Parameters::new();
        params.insert("b.bias", Tensor::vector(vec![0.0, -1.5]));
        params.insert(
            "a.weight",
            Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        );
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, 0xdeadbeef, "{\"v\":1}").unwrap();
        let ck = load_checkpoint(&buf[..]).unwrap();
        assert_eq!(ck.label_hash, 0xdeadbeef);
        assert_eq!(ck.meta_json, "{\"v\":1}");
        assert_eq!(ck.params, params);
    }

    #[test]
    fn bad_magic_rejected() {
        let err = load_checkpoint(&b"NOPE1234"[..]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn parameters_iterate_in_name_order() {
        let mut params = Parameters::new();
        params.insert("z", Tensor::scalar(1.0));
        params.insert("a", Tensor::scalar(2.0));
        params.insert("m", Tensor::scalar(3.0));
        let names: Vec<&String> = params.names().collect();
        assert_eq!(names, ["a", "m", "z"]);
    }
}
