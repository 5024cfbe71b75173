//! Little-endian binary checkpoints. Round trips are bit-exact.
//!
//! Layout:
//!
//! ```text
//! magic        8 bytes  "BMFCKPT\0"
//! version      u32
//! architecture u8   0 = bmf, 1 = mf
//! input_mode   u8   0 = behavior, 1 = one_hot
//! activation   u8   0 = relu, 1 = sigmoid
//! mask_target  u8
//! num_drugs, num_diseases, latent_dim, neighbor_cap   u64 each
//! fusion_weight f64
//! tensor count u32, then per tensor: rows u64, cols u64, rows*cols f64
//! ```
//!
//! Tensor order is `W1, b1, V1, b2, W2, b3` for bmf and `P, Q` for mf;
//! vectors are stored as `1 x len`.

use std::fs;
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::mf::MfParams;
use crate::model::{Activation, Hyperparams, InputMode, ModelParams};
use crate::predictor::{Architecture, Model, Weights};

pub const MAGIC: &[u8; 8] = b"BMFCKPT\0";
pub const VERSION: u32 = 1;

fn put_matrix(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let hp = &model.hp;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match model.architecture() {
        Architecture::Bmf => 0,
        Architecture::Mf => 1,
    });
    out.push(match hp.input_mode {
        InputMode::Behavior => 0,
        InputMode::OneHot => 1,
    });
    out.push(match hp.activation {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
    });
    out.push(hp.mask_target as u8);
    for v in [model.num_drugs, model.num_diseases, hp.latent_dim, hp.neighbor_cap] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&hp.fusion_weight.to_le_bytes());
    match &model.weights {
        Weights::Bmf(p) => {
            out.extend_from_slice(&6u32.to_le_bytes());
            put_matrix(&mut out, p.w1.rows(), p.w1.cols(), p.w1.as_slice());
            put_matrix(&mut out, 1, p.b1.len(), &p.b1);
            put_matrix(&mut out, p.v1.rows(), p.v1.cols(), p.v1.as_slice());
            put_matrix(&mut out, 1, p.b2.len(), &p.b2);
            put_matrix(&mut out, 1, p.w2.len(), &p.w2);
            put_matrix(&mut out, 1, 1, &[p.b3]);
        }
        Weights::Mf(p) => {
            out.extend_from_slice(&2u32.to_le_bytes());
            for m in [&p.drug_factors, &p.disease_factors] {
                put_matrix(&mut out, m.rows(), m.cols(), m.as_slice());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("size {v} does not fit in memory")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let len = rows
            .checked_mul(cols)
            .filter(|l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {rows}x{cols} exceeds the file")))?;
        let bytes = self.take(len * 8)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(DenseMatrix::from_vec(rows, cols, data))
    }

    fn vector(&mut self, what: &str) -> Result<Vec<f64>> {
        let m = self.matrix()?;
        if m.rows() != 1 {
            return Err(Error::Checkpoint(format!("{what} must be stored as 1 x n, got {:?}", m.shape())));
        }
        Ok(m.into_vec())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let arch = match r.u8()? {
        0 => Architecture::Bmf,
        1 => Architecture::Mf,
        b => return Err(Error::Checkpoint(format!("unknown architecture tag {b}"))),
    };
    let input_mode = match r.u8()? {
        0 => InputMode::Behavior,
        1 => InputMode::OneHot,
        b => return Err(Error::Checkpoint(format!("unknown input mode tag {b}"))),
    };
    let activation = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Sigmoid,
        b => return Err(Error::Checkpoint(format!("unknown activation tag {b}"))),
    };
    let mask_target = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::Checkpoint(format!("bad mask flag {b}"))),
    };
    let num_drugs = r.u64()?;
    let num_diseases = r.u64()?;
    let latent_dim = r.u64()?;
    let neighbor_cap = r.u64()?;
    let fusion_weight = r.f64()?;
    let hp = Hyperparams { latent_dim, neighbor_cap, fusion_weight, activation, input_mode, mask_target };
    hp.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let count = r.u32()?;
    let weights = match (arch, count) {
        (Architecture::Bmf, 6) => {
            let w1 = r.matrix()?;
            let b1 = r.vector("b1")?;
            let v1 = r.matrix()?;
            let b2 = r.vector("b2")?;
            let w2 = r.vector("W2")?;
            let b3 = r.vector("b3")?;
            if b3.len() != 1 {
                return Err(Error::Checkpoint("b3 must be a scalar".into()));
            }
            let p = ModelParams { w1, b1, v1, b2, w2, b3: b3[0] };
            p.check_shapes(&hp, num_drugs, num_diseases).map_err(|e| Error::Checkpoint(e.to_string()))?;
            Weights::Bmf(p)
        }
        (Architecture::Mf, 2) => {
            let p = MfParams { drug_factors: r.matrix()?, disease_factors: r.matrix()? };
            if p.drug_factors.shape() != (num_drugs, latent_dim) || p.disease_factors.shape() != (num_diseases, latent_dim) {
                return Err(Error::Checkpoint("factor shapes do not match the header".into()));
            }
            Weights::Mf(p)
        }
        _ => return Err(Error::Checkpoint(format!("{arch} checkpoint with {count} tensors"))),
    };
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Model { hp, num_drugs, num_diseases, weights })
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
