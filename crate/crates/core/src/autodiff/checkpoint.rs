//! Versioned little-endian checkpoint container.
//!
//! Layout: magic `FLATCKPT`, `u32` version, a length-prefixed UTF-8 metadata
//! document, the named networks (widths then `w, b` per layer as raw `f64`),
//! and optionally the Adam state. Floats are stored as their bit patterns, so
//! a round trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::adam::{AdamConfig, AdamState};
use super::matrix::Matrix;
use super::mlp::{Layer, NetSpec, ParamStore};

pub const MAGIC: &[u8; 8] = b"FLATCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedNet {
    pub name: String,
    pub spec: NetSpec,
    pub params: ParamStore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata, typically a JSON training configuration.
    pub meta: String,
    pub nets: Vec<NamedNet>,
    pub adam: Option<AdamState>,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_bits().to_le_bytes())?)
    }
    fn bytes(&mut self, v: &[u8]) -> Result<()> {
        self.u64(v.len() as u64)?;
        Ok(self.0.write_all(v)?)
    }
    fn matrix(&mut self, m: &Matrix) -> Result<()> {
        self.u32(m.rows() as u32)?;
        self.u32(m.cols() as u32)?;
        m.data().iter().try_for_each(|&v| self.f64(v))
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u64()? as usize;
        if n > 1 << 30 {
            return Err(Error::Checkpoint("implausible length".into()));
        }
        let mut v = vec![0; n];
        self.0.read_exact(&mut v).map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
        Ok(v)
    }
    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let data = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }
}

impl Checkpoint {
    pub fn write_to(&self, out: impl Write) -> Result<()> {
        let mut w = Writer(out);
        w.0.write_all(MAGIC)?;
        w.u32(VERSION)?;
        w.bytes(self.meta.as_bytes())?;
        w.u32(self.nets.len() as u32)?;
        for net in &self.nets {
            w.bytes(net.name.as_bytes())?;
            w.u32(net.spec.widths().len() as u32)?;
            for &width in net.spec.widths() {
                w.u32(width as u32)?;
            }
            for block in net.params.blocks() {
                w.matrix(block)?;
            }
        }
        match &self.adam {
            None => w.u8(0)?,
            Some(state) => {
                w.u8(1)?;
                let c = state.config;
                for v in [c.lr, c.beta1, c.beta2, c.eps] {
                    w.f64(v)?;
                }
                w.u64(state.step_count())?;
                let (first, second) = state.moments();
                w.u32(first.len() as u32)?;
                for (m, v) in first.iter().zip(second) {
                    w.matrix(m)?;
                    w.matrix(v)?;
                }
            }
        }
        w.0.flush()?;
        Ok(())
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut r = Reader(input);
        if &r.array::<8>()? != MAGIC {
            return Err(Error::Checkpoint("missing magic header".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta = r.string()?;
        let count = r.u32()? as usize;
        let mut nets = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let nw = r.u32()? as usize;
            let widths = (0..nw).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let spec = NetSpec::new(widths).map_err(|e| Error::Checkpoint(e.to_string()))?;
            let layers = (0..spec.num_layers())
                .map(|_| Ok(Layer { weight: r.matrix()?, bias: r.matrix()? }))
                .collect::<Result<Vec<_>>>()?;
            let params = ParamStore::from_layers(&spec, layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
            nets.push(NamedNet { name, spec, params });
        }
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
                let step = r.u64()?;
                let n = r.u32()? as usize;
                let mut first = Vec::with_capacity(n);
                let mut second = Vec::with_capacity(n);
                for _ in 0..n {
                    first.push(r.matrix()?);
                    second.push(r.matrix()?);
                }
                Some(AdamState::from_parts(config, step, first, second)?)
            }
            other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        Ok(Self { meta, nets, adam })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = NetSpec::new(vec![2, 5, 3]).unwrap();
        let params = ParamStore::init(&spec, 3, false);
        let mut adam = AdamState::new(AdamConfig::default(), params.blocks());
        let mut p = params.clone();
        let grads: Vec<Matrix> = p.blocks().map(|b| b.map(|v| v * 0.3 + 0.1)).collect();
        let mut blocks: Vec<&mut Matrix> = p.blocks_mut().collect();
        adam.step(&mut blocks, &grads, &[]).unwrap();
        Checkpoint {
            meta: "{\"seed\":1}".into(),
            nets: vec![NamedNet { name: "unwrap".into(), spec, params: p }],
            adam: Some(adam),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(bad.as_slice()).is_err());
        assert!(Checkpoint::read_from(&buf[..buf.len() - 5]).is_err());
    }
}
