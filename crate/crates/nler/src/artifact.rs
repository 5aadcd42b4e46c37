//! The `NLERFS01` binary container and its textual sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   [u8; 8]  "NLERFS01"
//! kind    u32      record kind (see `Kind`)
//! version u32
//! count   u32      number of arrays
//! count × {
//!     name_len u16, name [u8; name_len]  (UTF-8)
//!     dtype    u8                        1 = f64, 2 = i32
//!     ndims    u32, dims [u64; ndims]
//!     payload  product(dims) elements
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"NLERFS01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dataset = 1,
    Checkpoint = 2,
    Metrics = 3,
}

impl Kind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Kind::Dataset),
            2 => Some(Kind::Checkpoint),
            3 => Some(Kind::Metrics),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    F64(Vec<f64>),
    I32(Vec<i32>),
}

impl Data {
    fn len(&self) -> usize {
        match self {
            Data::F64(v) => v.len(),
            Data::I32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Data,
}

impl Array {
    pub fn f64(name: &str, dims: Vec<usize>, data: Vec<f64>) -> Self {
        Self { name: name.into(), dims, data: Data::F64(data) }
    }

    pub fn i32(name: &str, dims: Vec<usize>, data: Vec<i32>) -> Self {
        Self { name: name.into(), dims, data: Data::I32(data) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: Kind,
    pub arrays: Vec<Array>,
}

impl Artifact {
    pub fn new(kind: Kind) -> Self {
        Self { kind, arrays: Vec::new() }
    }

    pub fn push(&mut self, array: Array) {
        self.arrays.push(array);
    }

    pub fn get(&self, name: &str) -> CliResult<&Array> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| CliError::Data(format!("artifact has no array {name:?}")))
    }

    pub fn f64s(&self, name: &str) -> CliResult<(&[usize], &[f64])> {
        match self.get(name)? {
            Array { dims, data: Data::F64(v), .. } => Ok((dims, v)),
            _ => Err(CliError::Data(format!("array {name:?} is not f64"))),
        }
    }

    pub fn i32s(&self, name: &str) -> CliResult<(&[usize], &[i32])> {
        match self.get(name)? {
            Array { dims, data: Data::I32(v), .. } => Ok((dims, v)),
            _ => Err(CliError::Data(format!("array {name:?} is not i32"))),
        }
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            if a.dims.iter().product::<usize>() != a.data.len() {
                return Err(CliError::Data(format!("array {:?}: dims {:?} do not match payload", a.name, a.dims)));
            }
            let name = a.name.as_bytes();
            let name_len = u16::try_from(name.len()).map_err(|_| CliError::Data("array name too long".into()))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(match a.data {
                Data::F64(_) => 1,
                Data::I32(_) => 2,
            });
            out.extend_from_slice(&(a.dims.len() as u32).to_le_bytes());
            for &d in &a.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &a.data {
                Data::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Data::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CliError::Data("not an NLERFS01 file".into()));
        }
        let kind = Kind::from_u32(r.u32()?).ok_or_else(|| CliError::Data("unknown record kind".into()))?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Data(format!("unsupported container version {version}")));
        }
        let count = r.u32()?;
        let mut arrays = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CliError::Data("array name is not UTF-8".into()))?;
            let dtype = r.take(1)?[0];
            let ndims = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                dims.push(usize::try_from(r.u64()?).map_err(|_| CliError::Data("dimension overflow".into()))?);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CliError::Data("dimension overflow".into()))?;
            let data = match dtype {
                1 => Data::F64(
                    r.take(n.checked_mul(8).ok_or_else(overflow)?)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                2 => Data::I32(
                    r.take(n.checked_mul(4).ok_or_else(overflow)?)?
                        .chunks_exact(4)
                        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                t => return Err(CliError::Data(format!("unknown dtype {t}"))),
            };
            arrays.push(Array { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(CliError::Data("trailing bytes after the last array".into()));
        }
        Ok(Self { kind, arrays })
    }

    pub fn read(path: &Path, expect: Kind) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let a = Self::from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if a.kind != expect {
            return Err(CliError::Data(format!("{}: expected a {expect:?} file, found {:?}", path.display(), a.kind)));
        }
        Ok(a)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

fn overflow() -> CliError {
    CliError::Data("payload size overflow".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Data("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// `key = value` lines stored next to an artifact as `<file>.meta`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Meta(pub BTreeMap<String, String>);

impl Meta {
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut p = artifact.as_os_str().to_owned();
        p.push(".meta");
        PathBuf::from(p)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut m = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(" = ").ok_or_else(|| CliError::Data(format!("bad metadata line {line:?}")))?;
            m.insert(k.to_string(), v.to_string());
        }
        Ok(Self(m))
    }

    pub fn write(&self, artifact: &Path) -> CliResult<()> {
        write_atomic(&Self::path_for(artifact), self.render().as_bytes())
    }

    pub fn read(artifact: &Path) -> CliResult<Self> {
        let p = Self::path_for(artifact);
        Self::parse(&fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Artifact {
        let mut a = Artifact::new(Kind::Dataset);
        a.push(Array::f64("x", vec![2, 3], vec![0.1, -0.0, f64::NAN, f64::INFINITY, 1e-308, 5.0]));
        a.push(Array::i32("s", vec![4], vec![0, -1, i32::MAX, 7]));
        a.push(Array::f64("empty", vec![0, 5], vec![]));
        a
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = sample().to_bytes().unwrap();
        let back = Artifact::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let (dims, x) = back.f64s("x").unwrap();
        assert_eq!(dims, &[2, 3]);
        assert!(x[2].is_nan() && x[1].is_sign_negative());
        assert_eq!(back.i32s("s").unwrap().1, &[0, -1, i32::MAX, 7]);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[..8], b"NLERFS01");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Artifact::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Artifact::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Artifact::from_bytes(&magic).is_err());
        let mut bad = Artifact::new(Kind::Metrics);
        bad.push(Array::f64("v", vec![3], vec![1.0]));
        assert!(bad.to_bytes().is_err());
    }

    #[test]
    fn meta_round_trip() {
        let mut m = Meta::default();
        m.set("seed", 3);
        m.set("config_hash", "abc");
        assert_eq!(Meta::parse(&m.render()).unwrap(), m);
    }
}
