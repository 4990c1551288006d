//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "APMCKPT1"
//! n_meta     u32
//!   key      u32 length + UTF-8 bytes
//!   value    u32 length + UTF-8 bytes
//! n_tensors  u32
//!   name     u32 length + UTF-8 bytes
//!   rows     u32
//!   cols     u32
//!   values   rows * cols f64, row-major, IEEE-754 bit patterns
//! ```
//!
//! Floats are stored by bit pattern so a round trip is exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::matrix::Matrix;
use super::params::Params;

const MAGIC: &[u8; 8] = b"APMCKPT1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn from_params<P: Params>(params: &P) -> Self {
        Self {
            meta: BTreeMap::new(),
            tensors: params
                .tensors()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Copies tensors into `params`, matching by name and shape.
    pub fn restore_into<P: Params>(&self, params: &mut P) -> Result<()> {
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        let lookup: BTreeMap<&str, &Matrix> =
            self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (name, dst) in names.iter().zip(params.tensors_mut()) {
            let src = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if src.shape() != dst.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(&mut w, self.meta.len())?;
        for (k, v) in &self.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        write_u32(&mut w, self.tensors.len())?;
        for (name, t) in &self.tensors {
            write_str(&mut w, name)?;
            write_u32(&mut w, t.rows())?;
            write_u32(&mut w, t.cols())?;
            for x in t.as_slice() {
                w.write_all(&x.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            meta.insert(k, v);
        }
        let n = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = read_str(&mut r)?;
            let rows = read_u32(&mut r)?;
            let cols = read_u32(&mut r)?;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_bits(u64::from_le_bytes(buf)));
            }
            tensors.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(Self { meta, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn write_u32<W: Write>(w: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint("length overflows u32".into()))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)?;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::TensorList;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in proptest::collection::vec(any::<f64>(), 1..40),
            cols in 1usize..5,
        ) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let data = values[..rows * cols].to_vec();
            let params = TensorList(vec![
                ("w".into(), Matrix::from_vec(rows, cols, data).unwrap()),
                ("b".into(), Matrix::column(vec![f64::MIN_POSITIVE, -0.0])),
            ]);
            let ck = Checkpoint::from_params(&params).with_meta("model", "test");
            let back = Checkpoint::read_from(ck.to_bytes().as_slice()).unwrap();
            prop_assert_eq!(back.meta.get("model").map(String::as_str), Some("test"));
            for ((_, a), (_, b)) in ck.tensors.iter().zip(&back.tensors) {
                let a: Vec<u64> = a.as_slice().iter().map(|x| x.to_bits()).collect();
                let b: Vec<u64> = b.as_slice().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn restore_checks_shapes() {
        let src = TensorList(vec![("w".into(), Matrix::zeros(2, 2))]);
        let mut dst = TensorList(vec![("w".into(), Matrix::zeros(2, 3))]);
        let ck = Checkpoint::from_params(&src);
        assert!(ck.restore_into(&mut dst).is_err());
        let mut ok = TensorList(vec![("w".into(), Matrix::identity(2))]);
        ck.restore_into(&mut ok).unwrap();
        assert_eq!(ok, src);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(Checkpoint::read_from(&b"NOTACKPT\0\0\0\0"[..]).is_err());
    }
}
