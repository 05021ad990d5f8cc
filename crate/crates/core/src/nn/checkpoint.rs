//! Model checkpoint layout (little-endian):
//!
//! ```text
//! magic "INFCK1" | version u8 | arch id u8 (0 PG, 1 CIR)
//! echo length u32 | architecture echo (UTF-8 key=value lines) | init seed u64
//! normalizer: fitted u8; if 1: label scale f32 x2, kind u8
//!   kind 0: n u32, mean f32 x n, std f32 x n
//!   kind 1: scale f32
//! tensor count u32; per tensor: value count u32, values f32
//! ```
//!
//! Tensors are all trainable parameters followed by all batch-norm running
//! statistics, each in layer order (weight before bias, gamma before beta,
//! running mean before running variance).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::layers::Layer;
use super::model::{Arch, InputScaling, Model, Normalizer};

pub const MAGIC: &[u8; 6] = b"INFCK1";
pub const VERSION: u8 = 1;

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.arch().id());
        let echo = self.arch().echo();
        out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        out.extend_from_slice(echo.as_bytes());
        out.extend_from_slice(&self.seed().to_le_bytes());
        match self.normalizer() {
            None => out.push(0),
            Some(n) => {
                out.push(1);
                put_f32s(&mut out, &n.label_scale);
                match &n.input {
                    InputScaling::Standardize { mean, std } => {
                        out.push(0);
                        out.extend_from_slice(&(mean.len() as u32).to_le_bytes());
                        put_f32s(&mut out, mean);
                        put_f32s(&mut out, std);
                    }
                    InputScaling::Global { scale } => {
                        out.push(1);
                        put_f32s(&mut out, &[*scale]);
                    }
                }
            }
        }
        let params = self.net().params();
        let buffers = self.net().buffers();
        let tensors: Vec<&[f32]> =
            params.iter().map(|p| p.value.data()).chain(buffers.iter().map(|b| b.data())).collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            put_f32s(&mut out, t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(6)? != MAGIC {
            return Err(Error::format("bad checkpoint magic"));
        }
        let version = cur.u8()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let id = cur.u8()?;
        let echo_len = cur.u32()? as usize;
        let echo = std::str::from_utf8(cur.take(echo_len)?)
            .map_err(|_| Error::format("architecture echo is not UTF-8"))?;
        let arch = Arch::from_echo(id, echo)?;
        let seed = cur.u64()?;
        let normalizer = match cur.u8()? {
            0 => None,
            1 => {
                let label_scale = [cur.f32()?, cur.f32()?];
                let input = match cur.u8()? {
                    0 => {
                        let n = cur.u32()? as usize;
                        if n != arch.input_len() {
                            return Err(Error::format("normalizer width does not match the architecture"));
                        }
                        InputScaling::Standardize { mean: cur.f32s(n)?, std: cur.f32s(n)? }
                    }
                    1 => InputScaling::Global { scale: cur.f32()? },
                    k => return Err(Error::format(format!("unknown normalizer kind {k}"))),
                };
                Some(Normalizer { input, label_scale })
            }
            f => return Err(Error::format(format!("bad normalizer flag {f}"))),
        };

        let mut net = arch.build::<f32>(seed)?;
        let n_tensors = cur.u32()? as usize;
        let expected = net.params().len() + net.buffers().len();
        if n_tensors != expected {
            return Err(Error::format(format!("checkpoint holds {n_tensors} tensors, architecture needs {expected}")));
        }
        for p in net.params_mut() {
            cur.fill(p.value.data_mut())?;
        }
        for b in net.buffers_mut() {
            cur.fill(b.data_mut())?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        Ok(Model::from_parts(arch, net, normalizer, seed))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| Error::format("truncated checkpoint"))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn fill(&mut self, t: &mut [f32]) -> Result<()> {
        let n = self.u32()? as usize;
        if n != t.len() {
            return Err(Error::format(format!("tensor of {n} values where {} expected", t.len())));
        }
        for v in t.iter_mut() {
            *v = self.f32()?;
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| self.f32()).collect()
    }
}
