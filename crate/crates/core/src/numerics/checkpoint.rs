//! Flat binary parameter container.
//!
//! Layout: the 8-byte magic `SGTCKPT1`, then for every named tensor
//! `name_len: u32`, UTF-8 name, `rank: u32`, `rank` extents as `u32`, and
//! the raw `f64` values. All integers and floats are little-endian.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::Tensor;

pub const MAGIC: &[u8; 8] = b"SGTCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error("invalid tensor extents {0:?}")]
    BadShape(Vec<usize>),
    #[error("value does not fit the format: {0}")]
    TooLarge(&'static str),
}

pub fn write_to<W: Write>(mut w: W, params: &[(String, Tensor)]) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    for (name, t) in params {
        let len = u32::try_from(name.len()).map_err(|_| CheckpointError::TooLarge("name"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank = u32::try_from(t.rank()).map_err(|_| CheckpointError::TooLarge("rank"))?;
        w.write_all(&rank.to_le_bytes())?;
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| CheckpointError::TooLarge("extent"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { buf: &bytes, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| CheckpointError::BadName)?
            .to_owned();
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(cur.u32("extent")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::BadShape(shape.clone()))?;
        let raw = cur.take(n.checked_mul(8).ok_or(CheckpointError::Truncated("values"))?, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape.clone(), data).map_err(|_| CheckpointError::BadShape(shape))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save(path: &Path, params: &[(String, Tensor)]) -> Result<(), CheckpointError> {
    let f = std::fs::File::create(path)?;
    write_to(io::BufWriter::new(f), params)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    read_from(io::BufReader::new(std::fs::File::open(path)?))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated(what))?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.5, -0.0]).unwrap();
        let mut buf = Vec::new();
        write_to(&mut buf, &[("w".into(), t)]).unwrap();
        let mut want = b"SGTCKPT1".to_vec();
        want.extend(1u32.to_le_bytes());
        want.push(b'w');
        want.extend(2u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(2u32.to_le_bytes());
        want.extend(1.5f64.to_le_bytes());
        want.extend((-0.0f64).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read_from(&b"NOTACKPT"[..]), Err(CheckpointError::BadMagic)));
        let mut buf = Vec::new();
        write_to(&mut buf, &[("a".into(), Tensor::ones(&[3]))]).unwrap();
        buf.pop();
        assert!(matches!(read_from(&buf[..]), Err(CheckpointError::Truncated(_))));
    }
}
