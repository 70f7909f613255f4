//! Versioned binary container for named tensors.
//!
//! Layout (all integers little-endian):
//! `"HGRN"`, `u32` version, `u32` metadata length, metadata as UTF-8 `key=value`
//! lines, `u32` record count, then per record: `u32` name length, name, `u8`
//! dtype tag, `u8` rank, `rank × u64` dims, raw values.

use std::path::Path;

use crate::autograd::{ParamStore, Variable};
use crate::error::{Error, Result};
use crate::tensor::{DType, Real, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"HGRN";
pub const FORMAT_VERSION: u32 = 1;

/// Ordered key-value pairs; order is preserved so encoding is reproducible.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Metadata(Vec::new())
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.0.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("metadata key `{key}` missing")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<u64>,
    /// Held widened; f32 records round-trip exactly.
    pub values: Vec<f64>,
}

impl Record {
    pub fn from_tensor<T: Real>(name: &str, t: &Tensor<T>) -> Self {
        let s = t.shape();
        Record {
            name: name.to_string(),
            dtype: T::DTYPE,
            dims: [s.n, s.h, s.w, s.c].iter().map(|&d| d as u64).collect(),
            values: t.data().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn scalar<T: Real>(name: &str, value: T) -> Self {
        Record {
            name: name.to_string(),
            dtype: T::DTYPE,
            dims: Vec::new(),
            values: vec![value.as_f64()],
        }
    }

    pub fn shape(&self) -> Result<Shape> {
        match self.dims.as_slice() {
            [] => Ok(Shape::scalar()),
            &[n, h, w, c] => Ok(Shape::new(n as usize, h as usize, w as usize, c as usize)),
            other => Err(Error::Checkpoint(format!(
                "record `{}` has unsupported rank {}",
                self.name,
                other.len()
            ))),
        }
    }

    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        Tensor::from_vec(self.shape()?, self.values.iter().map(|&v| T::lit(v)).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Metadata,
    pub records: Vec<Record>,
}

impl Checkpoint {
    /// Every variable of `store` accepted by `keep`, in store order.
    pub fn from_store<T: Real>(
        meta: Metadata,
        store: &ParamStore<T>,
        keep: impl Fn(&Variable<T>) -> bool,
    ) -> Self {
        Checkpoint {
            meta,
            records: store
                .iter()
                .filter(|(_, v)| keep(v))
                .map(|(_, v)| Record::from_tensor(&v.name, &v.value))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Copies records into every variable of `store` whose name starts with
    /// `prefix`. Each such variable must have a record of identical shape.
    /// Records without a matching variable are ignored. Returns the count copied.
    pub fn apply<T: Real>(&self, store: &mut ParamStore<T>, prefix: &str) -> Result<usize> {
        let targets: Vec<_> = store
            .iter()
            .filter(|(_, v)| v.name.starts_with(prefix))
            .map(|(id, v)| (id, v.name.clone(), v.value.shape()))
            .collect();
        for (id, name, shape) in &targets {
            let record = self.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("checkpoint has no tensor `{name}`"))
            })?;
            let found = record.shape()?;
            if found != *shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}`: checkpoint shape {found} does not match model shape {shape}"
                )));
            }
            store.get_mut(*id).value = record.to_tensor()?;
        }
        Ok(targets.len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta: String = self
            .meta
            .0
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.push(r.dtype.tag());
            out.push(r.dims.len() as u8);
            for d in &r.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match r.dtype {
                DType::F32 => r.values.iter().for_each(|&v| (v as f32).write_le(&mut out)),
                DType::F64 => r.values.iter().for_each(|&v| v.write_le(&mut out)),
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not an HGRN container (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported container version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let mut meta = Metadata::new();
        for line in meta_text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad metadata line `{line}`")))?;
            meta.set(k, v);
        }
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?;
            let tag = r.u8()?;
            let dtype = DType::from_tag(tag).ok_or_else(|| {
                Error::Checkpoint(format!("record `{name}` has unknown dtype tag {tag}"))
            })?;
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1u64, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= (bytes.len() as u64))
                .ok_or_else(|| Error::Checkpoint(format!("record `{name}` is truncated")))?
                as usize;
            let raw = r.take(numel * dtype.size_of()).map_err(|_| {
                Error::Checkpoint(format!("record `{name}` is truncated"))
            })?;
            let values = match dtype {
                DType::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
                DType::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
            };
            records.push(Record {
                name,
                dtype,
                dims,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last record",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { meta, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Role;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("a.w", Tensor::from_fn(Shape::new(1, 2, 3, 4), |i| i as f32 * 0.5 - 3.0), Role::Weight)
            .unwrap();
        s.add("b.bias", Tensor::from_vec(Shape::vector(1, 2), vec![1e-30, -7.25]).unwrap(), Role::Bias)
            .unwrap();
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = store();
        let ck = Checkpoint::from_store(Metadata::new().with("kind", "stage1").with("classes", 4), &s, |_| true);
        let bytes = ck.encode();
        assert_eq!(&bytes[..4], b"HGRN");
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta.get("classes"), Some("4"));
        let mut target = store();
        target.iter_mut().for_each(|v| v.value.fill(0.0));
        assert_eq!(back.apply(&mut target, "").unwrap(), 2);
        assert_eq!(target.by_name("b.bias").unwrap().value.data(), &[1e-30, -7.25]);
    }

    #[test]
    fn shape_mismatch_names_the_tensor() {
        let ck = Checkpoint::from_store(Metadata::new(), &store(), |_| true);
        let mut other = ParamStore::<f32>::new();
        other.add("a.w", Tensor::zeros(Shape::new(1, 2, 3, 5)), Role::Weight).unwrap();
        let err = ck.apply(&mut other, "").unwrap_err().to_string();
        assert!(err.contains("a.w"), "{err}");
    }

    #[test]
    fn missing_tensor_is_an_error_but_prefix_limits_scope() {
        let ck = Checkpoint::from_store(Metadata::new(), &store(), |v| v.name.starts_with("a."));
        let mut target = store();
        assert!(ck.apply(&mut target, "").is_err());
        assert_eq!(ck.apply(&mut target, "a.").unwrap(), 1);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = Checkpoint::from_store(Metadata::new(), &store(), |_| true).encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::decode(&longer).is_err());
    }

    #[test]
    fn scalar_records_round_trip() {
        let ck = Checkpoint {
            meta: Metadata::new(),
            records: vec![Record::scalar("t", 17.0f64)],
        };
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back.records[0].dims.len(), 0);
        assert_eq!(back.records[0].to_tensor::<f64>().unwrap().data(), &[17.0]);
    }
}
