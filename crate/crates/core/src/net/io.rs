//! Versioned binary persistence for network parameters.
//!
//! Layout (all little-endian): magic `b"SUBN"`, u32 version, u32 layer count,
//! u32 layer sizes, one activation byte per hidden layer, then per layer the
//! row-major weight matrix and the bias vector as 64-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::num::Real;

const MAGIC: [u8; 4] = *b"SUBN";
const VERSION: u32 = 1;

pub fn save_network<T: Real>(net: &Network<T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let sizes = net.spec().layer_sizes();
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for act in net.spec().hidden_activations() {
        let code: u8 = match act {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        };
        w.write_all(&[code])?;
    }
    for layer in net.layers() {
        for &v in &layer.weights {
            w.write_all(&v.f64().to_le_bytes())?;
        }
        for &v in &layer.biases {
            w.write_all(&v.f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            message: message.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: at,
            message: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

pub fn load_network<T: Real>(path: &Path) -> Result<Network<T>> {
    let mut r = Cursor {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let n_sizes = r.u32("layer count")? as usize;
    if !(2..=256).contains(&n_sizes) {
        return Err(r.fail(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u32("layer size")? as usize);
    }
    let mut acts = Vec::with_capacity(n_sizes - 2);
    for _ in 0..n_sizes.saturating_sub(2) {
        let mut b = [0u8; 1];
        r.read_exact(&mut b, "activation code")?;
        acts.push(match b[0] {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            other => return Err(r.fail(format!("unknown activation code {other}"))),
        });
    }
    let spec = NetworkSpec::with_activations(sizes.clone(), acts)
        .map_err(|e| r.fail(format!("invalid architecture: {e}")))?;
    let mut parts = Vec::with_capacity(n_sizes - 1);
    for l in 0..n_sizes - 1 {
        let (in_dim, out_dim) = (sizes[l], sizes[l + 1]);
        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            let at = r.offset;
            let v = r.f64("weight")?;
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: at,
                    message: format!("non-finite weight in layer {l}"),
                });
            }
            weights.push(T::of(v));
        }
        let mut biases = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            let at = r.offset;
            let v = r.f64("bias")?;
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: at,
                    message: format!("non-finite bias in layer {l}"),
                });
            }
            biases.push(T::of(v));
        }
        parts.push((weights, biases));
    }
    let mut tail = [0u8; 1];
    if r.inner.read(&mut tail)? != 0 {
        return Err(r.fail("trailing bytes after parameters"));
    }
    Network::from_parts(spec, parts)
}
