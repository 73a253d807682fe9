//! Binary index file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "CSPINDEX" | version u32
//! extractor: kind u8 | dimension u32 | version str
//! k u32 | seed u64 | limit u64 (u64::MAX = none)
//! categories u32, then per category:
//!     label str | members u32
//!     per member: source_id str | slot u32 | vector f64 × D
//!     centroids f64 × k × D | wcss f64 × k | representatives u32 × k
//!     history u32 + f64 × len
//! matrix: n u32 | values f64 × n × n (masked entries are NaN)
//! crc32 u32 over every preceding byte
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use super::{CategoryClusters, ClusterIndex, ClusterModel, DistanceMatrix, Member};
use crate::error::{Error, Result};
use crate::features::{ExtractorKind, ExtractorSpec};
use crate::sketch::Label;

pub const MAGIC: &[u8; 8] = b"CSPINDEX";
pub const FORMAT_VERSION: u32 = 1;
const NO_LIMIT: u64 = u64::MAX;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("index section exceeds u32 length"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptIndex("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
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
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptIndex(msg.to_string())
}

pub fn encode_index(index: &ClusterIndex) -> Vec<u8> {
    let model = &index.model;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);

    w.u8(match index.extractor.kind {
        ExtractorKind::Builtin => 0,
        ExtractorKind::Imported => 1,
    });
    w.len(index.extractor.dimension);
    w.str(&index.extractor.version);

    w.len(model.k);
    w.u64(index.seed);
    w.u64(index.limit_per_category.unwrap_or(NO_LIMIT));

    w.len(model.categories.len());
    for cat in &model.categories {
        w.str(cat.label.as_str());
        w.len(cat.members.len());
        for m in &cat.members {
            w.str(&m.source_id);
            w.len(m.slot);
            w.f64s(&m.vector);
        }
        for c in &cat.centroids {
            w.f64s(c);
        }
        w.f64s(&cat.wcss);
        for &r in &cat.representatives {
            w.len(r);
        }
        w.len(cat.history.len());
        w.f64s(&cat.history);
    }

    w.len(index.matrix.len());
    w.f64s(index.matrix.raw_values());

    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn decode_index(bytes: &[u8]) -> Result<ClusterIndex> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("not an index file"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }

    let kind = match r.u8()? {
        0 => ExtractorKind::Builtin,
        1 => ExtractorKind::Imported,
        other => {
            return Err(Error::CorruptIndex(format!(
                "unknown extractor kind {other}"
            )))
        }
    };
    let dimension = r.len()?;
    let extractor = ExtractorSpec {
        kind,
        dimension,
        version: r.str()?,
    };
    if dimension == 0 {
        return Err(corrupt("zero dimension"));
    }

    let k = r.len()?;
    let seed = r.u64()?;
    let limit = r.u64()?;
    if k == 0 {
        return Err(corrupt("zero k"));
    }

    let n_categories = r.len()?;
    let mut categories = Vec::with_capacity(n_categories.min(1 << 16));
    for _ in 0..n_categories {
        let label = Label::new(&r.str()?).map_err(|_| corrupt("invalid label"))?;
        let n_members = r.len()?;
        let mut members = Vec::with_capacity(n_members.min(1 << 20));
        for _ in 0..n_members {
            let source_id = r.str()?;
            let slot = r.len()?;
            if slot >= k {
                return Err(corrupt("member slot out of range"));
            }
            members.push(Member {
                source_id,
                slot,
                vector: r.f64s(dimension)?,
            });
        }
        let centroids = (0..k)
            .map(|_| r.f64s(dimension))
            .collect::<Result<Vec<_>>>()?;
        let wcss = r.f64s(k)?;
        let representatives = (0..k).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        if representatives.iter().any(|&i| i >= members.len()) {
            return Err(corrupt("representative out of range"));
        }
        let history_len = r.len()?;
        let history = r.f64s(history_len)?;
        categories.push(CategoryClusters {
            label,
            centroids,
            wcss,
            members,
            representatives,
            history,
        });
    }
    if categories.windows(2).any(|w| w[0].label >= w[1].label) {
        return Err(corrupt("categories not in label order"));
    }

    let model = ClusterModel {
        k,
        dimension,
        categories,
    };
    let n = r.len()?;
    let labels = model.cluster_ids();
    if n != labels.len() {
        return Err(corrupt("matrix size does not match clusters"));
    }
    let values = r.f64s(
        n.checked_mul(n)
            .ok_or_else(|| corrupt("matrix too large"))?,
    )?;
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(ClusterIndex {
        extractor,
        seed,
        limit_per_category: (limit != NO_LIMIT).then_some(limit),
        model,
        matrix: DistanceMatrix::from_parts(labels, values),
    })
}

pub fn save_index(index: &ClusterIndex, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<ClusterIndex> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_index(&bytes)
}
