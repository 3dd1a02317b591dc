//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes   "ECML"
//! version    u32       1
//! count      u32       number of tensor records
//! record*    count times:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   rank     u32
//!   dims     rank × u64
//!   values   prod(dims) × f32 (IEEE-754 binary32)
//! ```

use super::Tensor;
use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"ECML";
pub const VERSION: u32 = 1;

/// A named tensor as stored in a checkpoint.
pub type NamedTensor = (String, Tensor);

pub fn encode_checkpoint(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint: bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        let mut n: u64 = 1;
        for _ in 0..rank {
            let d = c.u64("dimension")?;
            n = n
                .checked_mul(d)
                .ok_or_else(|| Error::Format(format!("tensor {name}: dimensions overflow")))?;
            shape.push(d as usize);
        }
        let nbytes = n
            .checked_mul(4)
            .filter(|&b| b <= (bytes.len() - c.pos) as u64)
            .ok_or_else(|| Error::Format(format!("tensor {name}: truncated values")))?;
        let data = c
            .take(nbytes as usize, "values")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&shape, data)
            .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = encode_checkpoint(tensors);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian_and_versioned() {
        let t = Tensor::new(&[2], vec![1.0, -2.5]).unwrap();
        let bytes = encode_checkpoint(&[("ab".into(), t)]);
        let mut expect = b"ECML".to_vec();
        expect.extend([1, 0, 0, 0]); // version
        expect.extend([1, 0, 0, 0]); // count
        expect.extend([2, 0, 0, 0]);
        expect.extend(b"ab");
        expect.extend([1, 0, 0, 0]); // rank
        expect.extend([2, 0, 0, 0, 0, 0, 0, 0]);
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn malformed_inputs_are_typed_errors() {
        let good = encode_checkpoint(&[("w".into(), Tensor::ones(&[3, 2]))]);
        for cut in 0..good.len() {
            assert!(matches!(decode_checkpoint(&good[..cut]), Err(Error::Format(_))));
        }
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode_checkpoint(&trailing), Err(Error::Format(_))));
        // absurd dimension must not allocate
        let mut huge = b"ECML".to_vec();
        huge.extend(1u32.to_le_bytes());
        huge.extend(1u32.to_le_bytes());
        huge.extend(1u32.to_le_bytes());
        huge.extend(b"w");
        huge.extend(1u32.to_le_bytes());
        huge.extend(u64::MAX.to_le_bytes());
        assert!(matches!(decode_checkpoint(&huge), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            tensors in proptest::collection::vec(
                ("[a-z._0-9]{1,12}", proptest::collection::vec(any::<f32>(), 1..40)),
                0..5,
            )
        ) {
            let named: Vec<NamedTensor> = tensors
                .into_iter()
                .map(|(n, d)| { let len = d.len(); (n, Tensor::new(&[len], d).unwrap()) })
                .collect();
            let back = decode_checkpoint(&encode_checkpoint(&named)).unwrap();
            prop_assert_eq!(back.len(), named.len());
            for ((n1, t1), (n2, t2)) in named.iter().zip(&back) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }
}
