//! Binary weight bundles.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `ODXWBNDL` |
//! | 4     | schema_version (u32, currently 1) |
//! | 4     | kind (u32: 1 fusion weights, 2 hierarchy heads) |
//! | 4     | map count (u32) |
//! | per map | name length (u16), UTF-8 name, in_dim (u32), out_dim (u32) |
//! | payload | per map in header order: `out_dim*in_dim` f64 weights row-major, then `out_dim` f64 biases |
//! | 32    | SHA-256 of every preceding byte |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AffineMap, FusionError, FusionWeights, FUSION_LAYOUT};

pub const MAGIC: &[u8; 8] = b"ODXWBNDL";
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;
const MAX_MAPS: usize = 64;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a weight bundle (bad magic)")]
    Magic,
    #[error("unsupported bundle schema_version {0}")]
    Version(u32),
    #[error("bundle kind {found}, expected {expected}")]
    Kind { expected: u32, found: u32 },
    #[error("bundle declares {0} maps")]
    MapCount(usize),
    #[error("map header {index}: invalid name")]
    Name { index: usize },
    #[error("map `{name}` declared {in_dim}->{out_dim}, expected {expected_in}->{expected_out}")]
    Dimension {
        name: String,
        in_dim: usize,
        out_dim: usize,
        expected_in: usize,
        expected_out: usize,
    },
    #[error("map {index} is `{found}`, expected `{expected}`")]
    MapName {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("truncated bundle: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after checksum")]
    Trailing(usize),
    #[error("checksum mismatch")]
    Checksum,
    #[error("invalid map: {0}")]
    Map(#[from] FusionError),
    #[error("invalid bundle contents: {0}")]
    Invalid(String),
}

/// Decoded bundle: kind plus named maps in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub kind: u32,
    pub maps: Vec<(String, AffineMap)>,
}

/// A parameter set that can be written as a bundle.
pub trait Bundled: Sized {
    const KIND: u32;
    /// Names and `(in_dim, out_dim)` every bundle of this kind must carry.
    fn layout() -> Vec<(String, usize, usize)>;
    fn to_maps(&self) -> Vec<(String, &AffineMap)>;
    fn from_maps(maps: Vec<AffineMap>) -> Result<Self, BundleError>;

    fn to_bytes(&self) -> Vec<u8> {
        encode(Self::KIND, &self.to_maps())
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let bundle = decode_with(bytes, Some((Self::KIND, &Self::layout())))?;
        Self::from_maps(bundle.maps.into_iter().map(|(_, m)| m).collect())
    }
}

impl Bundled for FusionWeights {
    const KIND: u32 = 1;

    fn layout() -> Vec<(String, usize, usize)> {
        FUSION_LAYOUT
            .iter()
            .map(|(n, i, o)| (n.to_string(), *i, *o))
            .collect()
    }

    fn to_maps(&self) -> Vec<(String, &AffineMap)> {
        FUSION_LAYOUT
            .iter()
            .zip(self.maps())
            .map(|((n, _, _), m)| (n.to_string(), m))
            .collect()
    }

    fn from_maps(maps: Vec<AffineMap>) -> Result<Self, BundleError> {
        let [a, b, c, d, e]: [AffineMap; 5] = maps
            .try_into()
            .map_err(|v: Vec<AffineMap>| BundleError::MapCount(v.len()))?;
        Ok(FusionWeights::new(a, b, c, d, e)?)
    }
}

pub fn encode(kind: u32, maps: &[(String, &AffineMap)]) -> Vec<u8> {
    let payload: usize = maps.iter().map(|(_, m)| m.param_count() * 8).sum();
    let mut out = Vec::with_capacity(64 + payload + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BUNDLE_SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(maps.len() as u32).to_le_bytes());
    for (name, m) in maps {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(m.out_dim() as u32).to_le_bytes());
    }
    for (_, m) in maps {
        for v in m.weights().iter().chain(m.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).ok_or(BundleError::Truncated {
            needed: usize::MAX,
            have: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(BundleError::Truncated {
                needed: end,
                have: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, BundleError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Name, in_dim and out_dim of one map.
type MapLayout = (String, usize, usize);

/// Decodes any well-formed bundle.
pub fn decode(bytes: &[u8]) -> Result<WeightBundle, BundleError> {
    decode_with(bytes, None)
}

/// Header checks run before the payload is touched, so a wrong declared
/// shape is reported as such even when the checksum would also fail.
fn decode_with(
    bytes: &[u8],
    expected: Option<(u32, &[MapLayout])>,
) -> Result<WeightBundle, BundleError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(BundleError::Magic);
    }
    let version = r.u32()?;
    if version != BUNDLE_SCHEMA_VERSION {
        return Err(BundleError::Version(version));
    }
    let kind = r.u32()?;
    if let Some((k, _)) = expected {
        if kind != k {
            return Err(BundleError::Kind {
                expected: k,
                found: kind,
            });
        }
    }
    let count = r.u32()? as usize;
    if count == 0 || count > MAX_MAPS {
        return Err(BundleError::MapCount(count));
    }
    if let Some((_, layout)) = expected {
        if count != layout.len() {
            return Err(BundleError::MapCount(count));
        }
    }

    let mut headers = Vec::with_capacity(count);
    for index in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| BundleError::Name { index })?
            .to_string();
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        if let Some((_, layout)) = expected {
            let (ename, ei, eo) = &layout[index];
            if &name != ename {
                return Err(BundleError::MapName {
                    index,
                    expected: ename.clone(),
                    found: name,
                });
            }
            if in_dim != *ei || out_dim != *eo {
                return Err(BundleError::Dimension {
                    name,
                    in_dim,
                    out_dim,
                    expected_in: *ei,
                    expected_out: *eo,
                });
            }
        }
        if in_dim == 0 || out_dim == 0 {
            return Err(BundleError::Map(FusionError::ZeroDim));
        }
        headers.push((name, in_dim, out_dim));
    }

    let mut payload: usize = 0;
    for (_, i, o) in &headers {
        let n = i
            .checked_mul(*o)
            .and_then(|w| w.checked_add(*o))
            .and_then(|p| p.checked_mul(8))
            .ok_or(BundleError::Truncated {
                needed: usize::MAX,
                have: bytes.len(),
            })?;
        payload = payload.checked_add(n).ok_or(BundleError::Truncated {
            needed: usize::MAX,
            have: bytes.len(),
        })?;
    }
    let body_end = r.pos.checked_add(payload).ok_or(BundleError::Truncated {
        needed: usize::MAX,
        have: bytes.len(),
    })?;
    let needed = body_end + CHECKSUM_LEN;
    if bytes.len() < needed {
        return Err(BundleError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(BundleError::Trailing(bytes.len() - needed));
    }
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest.as_slice() != &bytes[body_end..] {
        return Err(BundleError::Checksum);
    }

    let mut maps = Vec::with_capacity(count);
    for (name, in_dim, out_dim) in headers {
        let read = |r: &mut Reader, n: usize| -> Result<Vec<f64>, BundleError> {
            Ok(r.take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let weights = read(&mut r, in_dim * out_dim)?;
        let bias = read(&mut r, out_dim)?;
        maps.push((name, AffineMap::new(in_dim, out_dim, weights, bias)?));
    }
    Ok(WeightBundle { kind, maps })
}

pub fn save_bundle<T: Bundled>(w: &T, path: impl AsRef<Path>) -> Result<(), BundleError> {
    let path = path.as_ref();
    let io = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    out.write_all(&w.to_bytes()).map_err(io)?;
    out.flush().map_err(io)
}

pub fn load_bundle<T: Bundled>(path: impl AsRef<Path>) -> Result<T, BundleError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    T::from_bytes(&bytes)
}
