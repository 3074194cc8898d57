//! Binary weight archive: magic `WARC`, `u32` version 1, `u32` array count,
//! then per array `u16` name length, UTF-8 name, `u8` rank, `rank x u32`
//! extents and the row-major `f32` payload. All integers and reals are
//! little-endian.

use std::path::Path;

use super::ParamSet;
use crate::tensor::Real;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"WARC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightArchive {
    entries: Vec<ArchiveEntry>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Archive(format!("truncated archive while reading {what} at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

impl WeightArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn remove(&mut self, name: &str) -> Option<ArchiveEntry> {
        let i = self.entries.iter().position(|e| e.name == name)?;
        Some(self.entries.remove(i))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArchiveEntry> {
        self.entries.iter_mut().find(|e| e.name == name)
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Archive(format!(
                "array {name:?} has shape {shape:?} but {} values",
                data.len()
            )));
        }
        if name.len() > u16::MAX as usize || shape.len() > u8::MAX as usize {
            return Err(Error::Archive(format!("array {name:?} name or rank too large")));
        }
        if self.get(&name).is_some() {
            return Err(Error::Archive(format!("duplicate array {name:?}")));
        }
        self.entries.push(ArchiveEntry { name, shape, data });
        Ok(())
    }

    pub fn from_params<T: Real>(params: &ParamSet<T>) -> Self {
        let entries = params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| ArchiveEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.to_f32_vec(),
            })
            .collect();
        Self { entries }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.shape.len() as u8);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Archive("bad magic, expected \"WARC\"".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Archive(format!("unsupported version {version}")));
        }
        let count = r.u32("array count")?;
        let mut archive = Self::new();
        for i in 0..count {
            let len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Archive(format!("array {i} name is not UTF-8")))?
                .to_string();
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("extent")? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Archive(format!("array {name:?} is too large")))?;
            let data = r
                .take(numel, &format!("payload of {name:?}"))?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            archive.insert(name, shape, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Archive(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(archive)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightArchive {
        let mut a = WeightArchive::new();
        a.insert("stage1.conv1.weight", vec![2, 1, 1, 1], vec![1.5, -2.0]).unwrap();
        a.insert("stage1.conv1.bias", vec![2], vec![0.0, 0.25]).unwrap();
        a.insert("scalar", vec![], vec![7.0]).unwrap();
        a
    }

    #[test]
    fn byte_layout() {
        let mut a = WeightArchive::new();
        a.insert("ab", vec![2], vec![1.0, -1.0]).unwrap();
        let mut expected = b"WARC".to_vec();
        expected.extend([1, 0, 0, 0, 1, 0, 0, 0, 2, 0, b'a', b'b', 1, 2, 0, 0, 0]);
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-1.0f32).to_le_bytes());
        assert_eq!(a.to_bytes(), expected);
    }

    #[test]
    fn round_trip() {
        let a = sample();
        assert_eq!(WeightArchive::from_bytes(&a.to_bytes()).unwrap(), a);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(WeightArchive::from_bytes(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 2;
        assert!(WeightArchive::from_bytes(&bad_version).is_err());
        assert!(WeightArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(WeightArchive::from_bytes(&trailing).is_err());
    }

    #[test]
    fn insert_checks() {
        let mut a = sample();
        assert!(a.insert("x", vec![3], vec![1.0]).is_err());
        assert!(a.insert("scalar", vec![], vec![1.0]).is_err());
    }
}
