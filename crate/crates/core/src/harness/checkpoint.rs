//! Binary checkpoint: `b"MKCP"`, u32 version, u64 payload length, payload,
//! then the first 8 bytes of the payload's SHA-256. All integers and floats
//! are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::margin::LinearHead;
use crate::model::{Activation, AffineLayer, Mlp, MlpGradients};
use crate::numkernel::DMat;

use super::config::TrainConfig;

pub const MAGIC: &[u8; 4] = b"MKCP";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 8;
const HEADER_LEN: usize = 4 + 4 + 8;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// The run's config as TOML; kept verbatim so re-saving is byte-stable.
    pub config_toml: String,
    pub step: u64,
    pub finished: bool,
    pub rng_state: u64,
    pub model: Mlp,
    pub velocity: Option<MlpGradients>,
    pub input_map: Option<Standardizer>,
}

impl Checkpoint {
    pub fn config(&self) -> Result<TrainConfig> {
        TrainConfig::from_toml(&self.config_toml)
            .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Writer::default();
        p.bytes(self.config_toml.as_bytes());
        p.u64(self.step);
        p.u8(u8::from(self.finished));
        p.u64(self.rng_state);
        write_model(&mut p, &self.model);
        match &self.velocity {
            None => p.u8(0),
            Some(v) => {
                p.u8(1);
                for s in v.slices() {
                    p.f64s(s);
                }
            }
        }
        match &self.input_map {
            None => p.u8(0),
            Some(m) => {
                p.u8(1);
                p.u32(m.mean.len() as u32);
                p.f64s(&m.mean);
                p.f64s(&m.scale);
            }
        }
        let payload = p.0;

        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload)[..CHECKSUM_LEN]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(m.to_owned());
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(corrupt("file too short"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let expected = (HEADER_LEN + CHECKSUM_LEN) as u64;
        if bytes.len() as u64 != expected.saturating_add(len) {
            return Err(Error::Checkpoint(format!(
                "payload length {len} does not match file size {}",
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..bytes.len() - CHECKSUM_LEN];
        if Sha256::digest(payload)[..CHECKSUM_LEN] != bytes[bytes.len() - CHECKSUM_LEN..] {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: payload, pos: 0 };
        let config_toml = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| corrupt("embedded config is not UTF-8"))?;
        let step = r.u64()?;
        let finished = r.flag()?;
        let rng_state = r.u64()?;
        let model = read_model(&mut r)?;
        let velocity = if r.flag()? {
            let mut v = MlpGradients::zeros_like(&model);
            for s in v.slices_mut() {
                let vals = r.f64s(s.len())?;
                s.copy_from_slice(&vals);
            }
            Some(v)
        } else {
            None
        };
        let input_map = if r.flag()? {
            let d = r.u32()? as usize;
            Some(Standardizer {
                mean: r.f64s(d)?,
                scale: r.f64s(d)?,
            })
        } else {
            None
        };
        if r.pos != payload.len() {
            return Err(corrupt("trailing bytes in payload"));
        }
        Ok(Checkpoint {
            config_toml,
            step,
            finished,
            rng_state,
            model,
            velocity,
            input_map,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn write_model(p: &mut Writer, model: &Mlp) {
    p.u32(model.body().len() as u32);
    for layer in model.body() {
        p.u8(layer.activation.code());
        p.u32(layer.out_dim() as u32);
        p.u32(layer.in_dim() as u32);
        p.f64s(layer.weights.as_slice());
        p.f64s(&layer.bias);
    }
    let head = model.head();
    p.u32(head.num_classes() as u32);
    p.u32(head.feature_dim() as u32);
    p.f64s(head.weights().as_slice());
    p.f64s(head.bias());
}

fn read_matrix(r: &mut Reader, rows: usize, cols: usize) -> Result<DMat> {
    let data = r.f64s(rows * cols)?;
    DMat::from_vec(rows, cols, data).map_err(|e| Error::Checkpoint(format!("bad matrix: {e}")))
}

fn read_model(r: &mut Reader) -> Result<Mlp> {
    let bad = |e: Error| Error::Checkpoint(format!("bad model: {e}"));
    let layers = r.u32()?;
    let mut body = Vec::new();
    for _ in 0..layers {
        let code = r.u8()?;
        let act = Activation::from_code(code)
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {code}")))?;
        let out_dim = r.u32()? as usize;
        let in_dim = r.u32()? as usize;
        let w = read_matrix(r, out_dim, in_dim)?;
        let b = r.f64s(out_dim)?;
        body.push(AffineLayer::new(w, b, act).map_err(bad)?);
    }
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let w = read_matrix(r, k, d)?;
    let b = r.f64s(k)?;
    let head = LinearHead::new(w, b).map_err(bad)?;
    Mlp::from_parts(body, head).map_err(bad)
}

#[derive(Default)]
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
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
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
            .ok_or_else(|| Error::Checkpoint("truncated payload".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Checkpoint(format!("bad flag byte {v}"))),
        }
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Checkpoint("length overflow".into())
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = usize::try_from(self.u64()?)
            .map_err(|_| Error::Checkpoint("length overflow".into()))?;
        self.take(n)
    }
}
