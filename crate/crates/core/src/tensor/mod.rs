//! Minimal dense numeric core.
//!
//! Everything is 64-bit, row-major and two-dimensional (vectors are 1 x n).
//! [`tape`] provides reverse-mode differentiation over these tensors and
//! [`nn`] the layers the guidance model composes. Correctness of the
//! hand-derived backward passes is pinned by [`nn::grad_check`].

pub mod nn;
pub mod tape;

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{}x{} tensor needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Row vector 1 x n.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One learnable block: current value plus its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows, value.cols);
        Param { value, grad }
    }
}

/// Named map of parameter blocks, ordered by insertion so that traversal,
/// checkpoints and SGD updates are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    map: IndexMap<String, Param>,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"GPCKPT1\n";

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.map.insert(name.to_string(), Param::new(value));
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Input(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::Input(format!("unknown parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in self.map.values_mut() {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// theta <- theta - lr * (grad + weight_decay * theta), then zero grads.
    pub fn sgd_step(&mut self, lr: f64, weight_decay: f64) {
        for p in self.map.values_mut() {
            for (v, g) in p.value.data.iter_mut().zip(&p.grad.data) {
                *v -= lr * (g + weight_decay * *v);
            }
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Binary checkpoint: magic, block count, then per block the name,
    /// shape and raw little-endian f64 values. Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.map.len() as u64).to_le_bytes());
        for (name, p) in &self.map {
            let bytes = name.as_bytes();
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(bytes);
            out.extend_from_slice(&(p.value.rows as u64).to_le_bytes());
            out.extend_from_slice(&(p.value.cols as u64).to_le_bytes());
            for v in &p.value.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
            if *cursor + n > bytes.len() {
                return Err(Error::Checkpoint("truncated checkpoint".into()));
            }
            let s = &bytes[*cursor..*cursor + n];
            *cursor += n;
            Ok(s)
        };
        let magic = take(&mut cursor, 8)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic / unsupported version".into()));
        }
        let read_u64 = |cursor: &mut usize| -> Result<u64> {
            let b = take(cursor, 8)?;
            Ok(u64::from_le_bytes(b.try_into().unwrap()))
        };
        let count = read_u64(&mut cursor)? as usize;
        let mut set = ParamSet::new();
        for _ in 0..count {
            let name_len = read_u64(&mut cursor)? as usize;
            let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("non-utf8 parameter name".into()))?;
            let rows = read_u64(&mut cursor)? as usize;
            let cols = read_u64(&mut cursor)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let b = take(&mut cursor, 8)?;
                data.push(f64::from_le_bytes(b.try_into().unwrap()));
            }
            set.insert(&name, Tensor::from_vec(rows, cols, data)?);
        }
        Ok(set)
    }
}
