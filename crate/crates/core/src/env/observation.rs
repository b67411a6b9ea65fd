use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fixed-length binary observation vector.
///
/// Bits are packed most-significant-first into bytes, so the hex form reads
/// left to right in bit order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "SerdeObservation", try_from = "SerdeObservation")]
pub struct Observation {
    len: usize,
    bytes: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct SerdeObservation {
    len: usize,
    hex: String,
}

impl From<Observation> for SerdeObservation {
    fn from(obs: Observation) -> Self {
        Self {
            len: obs.len,
            hex: obs.to_hex(),
        }
    }
}

impl TryFrom<SerdeObservation> for Observation {
    type Error = Error;

    fn try_from(raw: SerdeObservation) -> Result<Self> {
        Observation::from_hex(raw.len, &raw.hex)
    }
}

impl Observation {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut obs = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                obs.set(i);
            }
        }
        obs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len, "bit {index} out of range {}", self.len);
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn set(&mut self, index: usize) {
        assert!(index < self.len, "bit {index} out of range {}", self.len);
        self.bytes[index / 8] |= 0x80 >> (index % 8);
    }

    pub fn clear(&mut self, index: usize) {
        assert!(index < self.len, "bit {index} out of range {}", self.len);
        self.bytes[index / 8] &= !(0x80 >> (index % 8));
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    /// Indices where `self` and `other` differ.
    pub fn diff(&self, other: &Observation) -> Vec<usize> {
        assert_eq!(self.len, other.len);
        (0..self.len).filter(|&i| self.get(i) != other.get(i)).collect()
    }

    /// Dense 0/1 vector used as network input.
    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.write_f64(&mut out);
        out
    }

    pub fn write_f64(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.len);
        for (i, x) in out.iter_mut().enumerate() {
            *x = if self.get(i) { 1.0 } else { 0.0 };
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn from_hex(len: usize, text: &str) -> Result<Self> {
        let bytes = hex::decode(text)
            .map_err(|e| Error::InvalidInput(format!("observation hex `{text}`: {e}")))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::InvalidInput(format!(
                "observation hex `{text}` does not hold {len} bits"
            )));
        }
        let obs = Self { len, bytes };
        // padding bits past `len` must be zero for equality to be meaningful
        let padding = obs.bytes.len() * 8 - len;
        if padding > 0 && obs.bytes.last().copied().unwrap_or(0) & ((1u8 << padding) - 1) != 0 {
            return Err(Error::InvalidInput(format!(
                "observation hex `{text}` has bits set past length {len}"
            )));
        }
        Ok(obs)
    }
}

impl fmt::Debug for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observation({}:{})", self.len, self.to_hex())
    }
}

/// Appends one-hot blocks and raw bits to an observation of known length.
pub struct ObservationBuilder {
    obs: Observation,
    cursor: usize,
}

impl ObservationBuilder {
    pub fn new(len: usize) -> Self {
        Self {
            obs: Observation::zeros(len),
            cursor: 0,
        }
    }

    /// Block of `size` bits with bit `index` set.
    pub fn one_hot(&mut self, size: usize, index: usize) -> &mut Self {
        assert!(index < size, "one-hot index {index} outside block of {size}");
        self.obs.set(self.cursor + index);
        self.cursor += size;
        self
    }

    /// Block of `size` bits with nothing set.
    pub fn zeros(&mut self, size: usize) -> &mut Self {
        self.cursor += size;
        self
    }

    pub fn bit(&mut self, value: bool) -> &mut Self {
        if value {
            self.obs.set(self.cursor);
        }
        self.cursor += 1;
        self
    }

    pub fn finish(&mut self) -> Observation {
        assert_eq!(self.cursor, self.obs.len, "observation layout length mismatch");
        std::mem::replace(&mut self.obs, Observation::zeros(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builder_lays_out_blocks_in_order() {
        let obs = ObservationBuilder::new(8)
            .one_hot(3, 2)
            .bit(true)
            .zeros(2)
            .one_hot(2, 0)
            .finish();
        assert_eq!(obs.ones().collect::<Vec<_>>(), vec![2, 3, 6]);
        assert_eq!(obs.to_hex(), "32");
    }

    #[test]
    fn from_hex_rejects_bad_lengths_and_padding() {
        assert!(Observation::from_hex(8, "ff").is_ok());
        assert!(Observation::from_hex(9, "ff").is_err());
        assert!(Observation::from_hex(4, "f1").is_err());
        assert!(Observation::from_hex(4, "zz").is_err());
    }

    proptest! {
        #[test]
        fn hex_round_trip(bits in prop::collection::vec(any::<bool>(), 0..200)) {
            let obs = Observation::from_bits(&bits);
            let back = Observation::from_hex(bits.len(), &obs.to_hex()).unwrap();
            prop_assert_eq!(&back, &obs);
            prop_assert_eq!(obs.count_ones(), bits.iter().filter(|b| **b).count());
            let dense = obs.to_f64();
            for (i, b) in bits.iter().enumerate() {
                prop_assert_eq!(dense[i] == 1.0, *b);
            }
        }
    }
}
