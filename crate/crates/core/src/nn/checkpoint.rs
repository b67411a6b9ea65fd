//! Binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    b"CCRLNET1"
//! u32      input
//! u32      hidden layer count, then one u32 per hidden layer
//! u32      recurrent units, 0 for feed-forward nets
//! u32      output
//! u64      parameter count
//! f64 * n  parameters in the network's internal order
//! ```

use std::fs;
use std::path::Path;

use super::{NetShape, Network};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CCRLNET1";

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.bytes.len() < N {
            return Err(Error::InvalidCheckpoint("truncated file".into()));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("split at N"))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
}

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.shape();
        let mut out = Vec::with_capacity(64 + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        let mut put = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put(shape.input);
        put(shape.hidden.len());
        for &h in &shape.hidden {
            put(h);
        }
        put(shape.recurrent.unwrap_or(0));
        put(shape.output);
        out.extend_from_slice(&(self.param_count() as u64).to_le_bytes());
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        if &r.take::<8>()? != MAGIC {
            return Err(Error::InvalidCheckpoint("bad magic".into()));
        }
        let input = r.u32()?;
        let layers = r.u32()?;
        if layers > 64 {
            return Err(Error::InvalidCheckpoint(format!("{layers} hidden layers")));
        }
        let hidden = (0..layers).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let recurrent = match r.u32()? {
            0 => None,
            units => Some(units),
        };
        let output = r.u32()?;
        let shape = NetShape {
            input,
            hidden,
            recurrent,
            output,
        };
        let count = u64::from_le_bytes(r.take()?) as usize;
        if count != shape.param_count() {
            return Err(Error::InvalidCheckpoint(format!(
                "{count} parameters for a shape holding {}",
                shape.param_count()
            )));
        }
        if r.bytes.len() != 8 * count {
            return Err(Error::InvalidCheckpoint(format!(
                "{} parameter bytes, expected {}",
                r.bytes.len(),
                8 * count
            )));
        }
        let params = r
            .bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Network::from_params(shape, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for shape in [
            NetShape::mlp(10, &[7, 5], 3),
            NetShape::recurrent(10, &[7], 4, 3),
            NetShape::mlp(3, &[], 3),
        ] {
            let net = Network::new(shape, &mut rng);
            let back = Network::from_bytes(&net.to_bytes()).unwrap();
            assert_eq!(back.shape(), net.shape());
            assert!(back
                .params()
                .iter()
                .zip(net.params())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = Network::zeros(NetShape::mlp(4, &[3], 2));
        let bytes = net.to_bytes();
        assert!(Network::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Network::from_bytes(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Network::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.extend_from_slice(&[0; 8]);
        assert!(Network::from_bytes(&extra).is_err());
    }
}
