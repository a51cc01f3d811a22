//! Small self-describing numeric container used for every trained artifact.
//!
//! ```text
//! ROTCTL-BLOB 1
//! kind <kind>
//! dtype f32|f64
//! meta <n>
//! <key>=<value>        (n lines)
//! count <values>
//! data
//! <little-endian payload>
//! fnv64 <16 hex digits>   (trailer, 8 raw bytes)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BLOB_MAGIC: &str = "ROTCTL-BLOB 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub kind: String,
    pub dtype: String,
    pub meta: Vec<(String, String)>,
    pub data: Vec<f64>,
}

impl Blob {
    pub fn new<T: Scalar>(kind: &str, data: &[T]) -> Self {
        Blob {
            kind: kind.to_string(),
            dtype: T::dtype().to_string(),
            meta: Vec::new(),
            data: data.iter().map(|v| v.f64()).collect(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::schema(path, format!("missing or bad meta `{key}`")))
    }

    pub fn values<T: Scalar>(&self) -> Vec<T> {
        self.data.iter().map(|&v| T::of(v)).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut head = format!("{BLOB_MAGIC}\nkind {}\ndtype {}\nmeta {}\n", self.kind, self.dtype, self.meta.len());
        for (k, v) in &self.meta {
            head.push_str(&format!("{k}={v}\n"));
        }
        head.push_str(&format!("count {}\ndata\n", self.data.len()));
        let mut bytes = head.into_bytes();
        for &v in &self.data {
            if self.dtype == "f32" {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            } else {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a64(&bytes);
        bytes.extend_from_slice(&sum.to_le_bytes());
        bytes
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Blob> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: 8,
                found: bytes.len(),
            });
        }
        let (lines, offset) = super::store::split_header(bytes, path, "data")?;
        let mut it = lines.into_iter();
        if it.next() != Some(BLOB_MAGIC) {
            return Err(Error::schema(path, "not a blob or unsupported schema version"));
        }
        let mut next = |key: &str| -> Result<String> {
            it.next()
                .and_then(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
                .map(str::to_string)
                .ok_or_else(|| Error::schema(path, format!("missing `{key}`")))
        };
        let kind = next("kind")?;
        let dtype = next("dtype")?;
        let width = match dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(Error::schema(path, format!("unknown dtype `{other}`"))),
        };
        let n_meta: usize = next("meta")?
            .parse()
            .map_err(|_| Error::schema(path, "bad meta count"))?;
        let mut meta = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            let line = next_raw(&mut it, path)?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::schema(path, format!("bad meta line `{line}`")))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let count: usize = it
            .next()
            .and_then(|l| l.strip_prefix("count "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::schema(path, "missing `count`"))?;
        if it.next().is_some() {
            return Err(Error::schema(path, "unexpected header line"));
        }
        let want = count * width + 8;
        let found = bytes.len() - offset;
        if found != want {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: want,
                found,
            });
        }
        let body_end = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if stored != fnv1a64(&bytes[..body_end]) {
            return Err(Error::Checksum { path: path.to_path_buf() });
        }
        let data = bytes[offset..body_end]
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    f32::from_le_bytes(c.try_into().unwrap()) as f64
                } else {
                    f64::from_le_bytes(c.try_into().unwrap())
                }
            })
            .collect();
        Ok(Blob { kind, dtype, meta, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Blob> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Blob::decode(&bytes, path)
    }

    /// Reads a blob and checks its kind.
    pub fn read_kind(path: &Path, kind: &str) -> Result<Blob> {
        let b = Blob::read(path)?;
        if b.kind != kind {
            return Err(Error::schema(path, format!("expected kind `{kind}`, found `{}`", b.kind)));
        }
        Ok(b)
    }
}

fn next_raw<'a>(it: &mut impl Iterator<Item = &'a str>, path: &Path) -> Result<&'a str> {
    it.next().ok_or_else(|| Error::schema(path, "header cut short"))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn round_trip_both_dtypes() {
        let b = Blob::new("test", &[1.5f32, -2.0, 3.25]).with("rows", 3).with("name", "a b=c");
        let back = Blob::decode(&b.encode(), Path::new("m")).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.get("name"), Some("a b=c"));
        let b = Blob::new("x", &[0.1f64, 1e-300]);
        assert_eq!(Blob::decode(&b.encode(), Path::new("m")).unwrap().data, vec![0.1, 1e-300]);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = Blob::new("k", &[1.0f64, 2.0]).encode();
        let n = bytes.len();
        bytes[n - 12] ^= 1;
        assert!(matches!(Blob::decode(&bytes, Path::new("m")), Err(Error::Checksum { .. })));
        let bytes = Blob::new("k", &[1.0f64, 2.0]).encode();
        assert!(matches!(
            Blob::decode(&bytes[..n - 3], Path::new("m")),
            Err(Error::Truncated { .. })
        ));
    }
}
