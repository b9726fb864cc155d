//! Binary checkpoints (little-endian):
//!
//! ```text
//! "MFLC" | version u16 | arch id (u16 len + utf8) | num_classes u32
//! layer count u32, then per layer: kind u8 | ndims u8 | dims u64.. | nblobs u32 | (len u64 + f64..)..
//! adam: t u64 | lr, beta1, beta2, eps f64 | ntensors u32 | m blobs | v blobs
//! scheduler: lr, factor, min_lr, threshold f64 | patience u64 | best f64 | bad_steps u64
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! progress: len u64 + opaque bytes
//! ```

use std::path::Path;

use super::layer::LayerState;
use super::network::RngState;
use super::optim::{Adam, PlateauScheduler};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MFLC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub num_classes: u32,
    pub layers: Vec<LayerState>,
    pub adam: Adam,
    pub scheduler: PlateauScheduler,
    pub rng: RngState,
    /// Caller-defined trailer, e.g. epoch counter and history as JSON.
    pub progress: Vec<u8>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn blob(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.buf.len() {
            return Err(Error::format("checkpoint", format!("implausible length {n}")));
        }
        Ok(n)
    }
    fn blob(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::format("checkpoint", "blob overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.u16(self.arch.len() as u16);
        w.bytes(self.arch.as_bytes());
        w.u32(self.num_classes);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.u8(l.kind);
            w.u8(l.dims.len() as u8);
            l.dims.iter().for_each(|&d| w.u64(d));
            w.u32(l.blobs.len() as u32);
            l.blobs.iter().for_each(|b| w.blob(b));
        }
        let a = &self.adam;
        w.u64(a.t);
        [a.lr, a.beta1, a.beta2, a.eps].iter().for_each(|&v| w.f64(v));
        w.u32(a.m.len() as u32);
        a.m.iter().chain(&a.v).for_each(|b| w.blob(b));
        let s = &self.scheduler;
        [s.lr, s.factor, s.min_lr, s.threshold].iter().for_each(|&v| w.f64(v));
        w.u64(s.patience);
        w.f64(s.best);
        w.u64(s.bad_steps);
        w.bytes(&self.rng.seed);
        w.u64(self.rng.stream);
        w.bytes(&self.rng.word_pos.to_le_bytes());
        w.u64(self.progress.len() as u64);
        w.bytes(&self.progress);
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let n = r.u16()? as usize;
        let arch = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "architecture id is not utf-8"))?;
        let num_classes = r.u32()?;
        let layer_count = r.u32()?;
        let mut layers = Vec::new();
        for _ in 0..layer_count {
            let kind = r.u8()?;
            let nd = r.u8()?;
            let dims = (0..nd).map(|_| r.u64()).collect::<Result<_>>()?;
            let nb = r.u32()?;
            let blobs = (0..nb).map(|_| r.blob()).collect::<Result<_>>()?;
            layers.push(LayerState { kind, dims, blobs });
        }
        let t = r.u64()?;
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let nt = r.u32()?;
        let m = (0..nt).map(|_| r.blob()).collect::<Result<_>>()?;
        let v = (0..nt).map(|_| r.blob()).collect::<Result<_>>()?;
        let adam = Adam {
            lr,
            beta1,
            beta2,
            eps,
            t,
            m,
            v,
        };
        let scheduler = PlateauScheduler {
            lr: r.f64()?,
            factor: r.f64()?,
            min_lr: r.f64()?,
            threshold: r.f64()?,
            patience: r.u64()?,
            best: r.f64()?,
            bad_steps: r.u64()?,
        };
        let rng = RngState {
            seed: r.array()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let plen = r.len()?;
        let progress = r.take(plen)?.to_vec();
        if r.pos != buf.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self {
            arch,
            num_classes,
            layers,
            adam,
            scheduler,
            rng,
            progress,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
