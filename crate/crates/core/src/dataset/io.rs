//! Dataset file layout (all little-endian):
//!
//! ```text
//! magic "INFDS1" | version u8 | signal u8 (0 PG, 1 CIR) | n_samples u32
//! n_bs u16 | n_taps u16 | clutter r,h,d f32 x3 | factory seed u64 | bs_mask u32
//! per sample: payload f32 x feature_len, label x f32, label y f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fading::SignalType;

use super::{Dataset, DatasetHeader};

pub const MAGIC: &[u8; 6] = b"INFDS1";
pub const VERSION: u8 = 1;

const HEADER_LEN: usize = 6 + 1 + 1 + 4 + 2 + 2 + 12 + 8 + 4;

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.features.len() + 2 * self.labels.len()));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(h.signal.code());
        out.extend_from_slice(&(h.n_samples as u32).to_le_bytes());
        out.extend_from_slice(&(h.n_bs as u16).to_le_bytes());
        out.extend_from_slice(&(h.n_taps as u16).to_le_bytes());
        for c in h.clutter {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&h.factory_seed.to_le_bytes());
        out.extend_from_slice(&h.bs_mask.to_le_bytes());
        let n = h.feature_len();
        for (i, label) in self.labels.iter().enumerate() {
            for v in &self.features[i * n..(i + 1) * n] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&label[0].to_le_bytes());
            out.extend_from_slice(&label[1].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("dataset file shorter than its header"));
        }
        if &bytes[..6] != MAGIC {
            return Err(Error::format("bad dataset magic"));
        }
        if bytes[6] != VERSION {
            return Err(Error::format(format!("unsupported dataset version {}", bytes[6])));
        }
        let mut cur = Cursor { bytes, pos: 8 };
        let signal = SignalType::from_code(bytes[7])?;
        let n_samples = cur.u32()? as usize;
        let n_bs = cur.u16()? as usize;
        let n_taps = cur.u16()? as usize;
        let clutter = [cur.f32()?, cur.f32()?, cur.f32()?];
        let factory_seed = cur.u64()?;
        let bs_mask = cur.u32()?;
        let header = DatasetHeader { signal, n_samples, n_bs, n_taps, clutter, factory_seed, bs_mask };

        let n = header.feature_len();
        let expected = HEADER_LEN + n_samples * (n + 2) * 4;
        if bytes.len() != expected {
            return Err(Error::format(format!("dataset payload is {} bytes, expected {expected}", bytes.len())));
        }
        let mut features = Vec::with_capacity(n_samples * n);
        let mut labels = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            for _ in 0..n {
                features.push(cur.f32()?);
            }
            labels.push([cur.f32()?, cur.f32()?]);
        }
        Dataset::new(header, features, labels)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::format("truncated dataset"))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.take().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32> {
        self.take().map(f32::from_le_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(signal: SignalType, n_samples: usize, n_bs: usize, n_taps: usize) -> DatasetHeader {
        DatasetHeader {
            signal,
            n_samples,
            n_bs,
            n_taps,
            clutter: [0.6, 6.0, 2.0],
            factory_seed: 0xDEAD_BEEF,
            bs_mask: (1 << n_bs) - 1,
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let d = Dataset::new(header(SignalType::Pg, 1, 2, 1), vec![-70.0, -80.5], vec![[1.5, 2.5]]).unwrap();
        let b = d.to_bytes();
        assert_eq!(&b[..6], b"INFDS1");
        assert_eq!(b[6], 1);
        assert_eq!(b[7], 0);
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..14], &2u16.to_le_bytes());
        assert_eq!(&b[14..16], &1u16.to_le_bytes());
        assert_eq!(&b[16..20], &0.6f32.to_le_bytes());
        assert_eq!(&b[28..36], &0xDEAD_BEEFu64.to_le_bytes());
        assert_eq!(&b[36..40], &3u32.to_le_bytes());
        assert_eq!(&b[40..44], &(-70.0f32).to_le_bytes());
        assert_eq!(&b[48..52], &1.5f32.to_le_bytes());
        assert_eq!(b.len(), HEADER_LEN + 16);
    }

    #[test]
    fn rejects_corrupt_files() {
        let d = Dataset::new(header(SignalType::Pg, 1, 2, 1), vec![-70.0, -80.5], vec![[1.5, 2.5]]).unwrap();
        let mut b = d.to_bytes();
        assert!(Dataset::from_bytes(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(Dataset::from_bytes(&b).is_err());
        let mut b = d.to_bytes();
        b[36] = 0x07; // mask selects 3 BS, header says 2
        assert!(Dataset::from_bytes(&b).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_identical(
            cir in any::<bool>(),
            n_samples in 1usize..6,
            n_bs in 1usize..5,
            n_taps in 1usize..7,
            seed in any::<u64>(),
            vals in proptest::collection::vec(-200.0f32..200.0, 400),
        ) {
            let signal = if cir { SignalType::Cir } else { SignalType::Pg };
            let n_taps = if cir { n_taps } else { 1 };
            let mut h = header(signal, n_samples, n_bs, n_taps);
            h.factory_seed = seed;
            let n = h.feature_len();
            let features: Vec<f32> = vals.iter().cycle().take(n_samples * n).cloned().collect();
            let labels: Vec<[f32; 2]> = (0..n_samples).map(|i| [vals[i].abs() % 120.0, vals[i + 1].abs() % 60.0]).collect();
            let d = Dataset::new(h, features, labels).unwrap();
            let bytes = d.to_bytes();
            let back = Dataset::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
