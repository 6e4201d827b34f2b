//! Model container.
//!
//! ```text
//! magic        5 bytes  "CRCNN"
//! version      u16 LE
//! flags        u16 LE   bit 0: optimizer state present
//! init seed    u64 LE
//! spec length  u32 LE, followed by the network spec as TOML (UTF-8)
//! parameters   f32 LE, per parameterized layer in declaration order:
//!              weights then biases
//! optimizer    (if flagged) step u64 LE, then first moments and second
//!              moments laid out like the parameters
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{AdamState, Network, NetworkSpec, NetworkState, Params};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"CRCNN";
pub const FORMAT_VERSION: u16 = 1;
const FLAG_ADAM: u16 = 1;

pub fn write_model(state: &NetworkState, out: &mut impl Write) -> std::io::Result<()> {
    let spec = state.network.spec().to_toml();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&FLAG_ADAM.to_le_bytes());
    buf.extend_from_slice(&state.init_seed.to_le_bytes());
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(spec.as_bytes());
    put_params(&mut buf, state.network.params());
    buf.extend_from_slice(&state.adam.step.to_le_bytes());
    put_params(&mut buf, &state.adam.m);
    put_params(&mut buf, &state.adam.v);
    out.write_all(&buf)
}

fn put_params(buf: &mut Vec<u8>, params: &[Option<Params<f32>>]) {
    for p in params.iter().flatten() {
        for v in p.weights.iter().chain(&p.bias) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn read_model(input: &mut impl Read) -> Result<NetworkState> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::ModelFormat(format!("read failed: {e}")))?;
    parse(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::ModelFormat(format!(
                "truncated file: {what} needs {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn params(
        &mut self,
        layout: &[Option<Params<f32>>],
        what: &str,
    ) -> Result<Vec<Option<Params<f32>>>> {
        layout
            .iter()
            .map(|p| {
                p.as_ref()
                    .map(|p| {
                        Ok(Params {
                            weights: self.f32s(p.weights.len(), what)?,
                            bias: self.f32s(p.bias.len(), what)?,
                        })
                    })
                    .transpose()
            })
            .collect()
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

fn parse(bytes: &[u8]) -> Result<NetworkState> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::ModelFormat(
            "bad magic, not a CRCNN model file".into(),
        ));
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let flags = c.u16("flags")?;
    if flags & !FLAG_ADAM != 0 {
        return Err(Error::ModelFormat(format!("unknown flags {flags:#06x}")));
    }
    let init_seed = c.u64("init seed")?;
    let spec_len = c.u32("spec length")? as usize;
    let spec_text = std::str::from_utf8(c.take(spec_len, "network spec")?)
        .map_err(|_| Error::ModelFormat("network spec is not UTF-8".into()))?;
    let spec = NetworkSpec::from_toml(spec_text)?;
    // Zero-initialized template fixes the expected parameter layout.
    let mut template = Network::<f32>::init(spec.clone(), 0)?;
    template.zero_params();
    let params = c.params(template.params(), "parameters")?;
    let network = Network::from_params(spec, params)?;
    let adam = if flags & FLAG_ADAM != 0 {
        let step = c.u64("optimizer step")?;
        let m = c.params(template.params(), "first moments")?;
        let v = c.params(template.params(), "second moments")?;
        AdamState { step, m, v }
    } else {
        AdamState::for_network(&network)
    };
    if c.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after model data",
            bytes.len() - c.pos
        )));
    }
    Ok(NetworkState {
        network,
        adam,
        init_seed,
    })
}

/// Writes the model to `path` via a temporary sibling file and rename, so a
/// failed write never leaves a partial model behind.
pub fn save_model(state: &NetworkState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let mut buf = Vec::new();
    write_model(state, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes).map_err(|e| match e {
        Error::ModelFormat(m) => Error::format(path, m),
        other => other,
    })
}
