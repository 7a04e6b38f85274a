//! Fixed-width bit vectors and design signal descriptors.
//!
//! [`BitVec`] is the single value type flowing through the simulator:
//! registers, wires and port values are all bit vectors of 1..=128 bits.
//! [`SignalRef`] names one observable signal of a design, along with the
//! structural role ([`SignalKind`]) and whether it carries control or data
//! ([`SignalClass`]) — the two attributes monitors select on.

use std::fmt;

use crate::error::{Error, Result};

/// A value of `width` bits, 1..=128. Stored little-endian in a `u128`;
/// bit 0 is the least significant bit. The width is immutable and all
/// stored values are masked to it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    width: u16,
    bits: u128,
}

impl BitVec {
    /// Widest representable vector.
    pub const MAX_WIDTH: u16 = 128;

    /// Creates a vector of `width` bits holding `value` masked to the width.
    pub fn new(width: u16, value: u128) -> Result<Self> {
        if width == 0 || width > Self::MAX_WIDTH {
            return Err(Error::Config(format!(
                "bit vector width must be 1..={}, got {width}",
                Self::MAX_WIDTH
            )));
        }
        Ok(BitVec {
            width,
            bits: value & Self::mask(width),
        })
    }

    /// All-zero vector of `width` bits. Panics on invalid width; use for
    /// widths already validated.
    pub fn zero(width: u16) -> Self {
        Self::new(width, 0).expect("valid width")
    }

    /// Mask with the low `width` bits set.
    pub fn mask(width: u16) -> u128 {
        if width >= 128 {
            u128::MAX
        } else {
            (1u128 << width) - 1
        }
    }

    /// Number of bits.
    pub fn width(&self) -> u16 {
        self.width
    }

    /// Value as an unsigned integer.
    pub fn value(&self) -> u128 {
        self.bits
    }

    /// Bit `i` (0 = LSB).
    pub fn bit(&self, i: u16) -> Result<bool> {
        self.check_bit(i)?;
        Ok(self.bits >> i & 1 == 1)
    }

    /// Copy of `self` with bit `i` inverted.
    pub fn with_bit_flipped(&self, i: u16) -> Result<Self> {
        self.check_bit(i)?;
        Ok(BitVec {
            width: self.width,
            bits: self.bits ^ (1u128 << i),
        })
    }

    /// Replaces the value, masking to the existing width.
    pub fn set(&mut self, value: u128) {
        self.bits = value & Self::mask(self.width);
    }

    fn check_bit(&self, i: u16) -> Result<()> {
        if i >= self.width {
            return Err(Error::Config(format!(
                "bit index {i} out of range for width {}",
                self.width
            )));
        }
        Ok(())
    }

    /// Parses a lowercase/uppercase hex string into a vector of `width` bits.
    /// The value must fit the width exactly (no silent truncation).
    pub fn parse_hex(width: u16, text: &str) -> Result<Self> {
        let raw = u128::from_str_radix(text, 16)
            .map_err(|e| Error::Config(format!("invalid hex value {text:?}: {e}")))?;
        if raw & !Self::mask(width) != 0 {
            return Err(Error::Config(format!(
                "hex value {text:?} does not fit in {width} bits"
            )));
        }
        Self::new(width, raw)
    }

    /// Canonical lowercase hex form, zero-padded to `ceil(width / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = (self.width as usize).div_ceil(4);
        format!("{:0digits$x}", self.bits)
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'h{}", self.width, self.to_hex())
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Structural role of a signal within a design hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalKind {
    /// Top-level input port.
    PrimaryInput,
    /// Top-level output port.
    PrimaryOutput,
    /// Output of an internal submodule, visible for monitoring.
    SubmoduleOutput,
    /// Storage element updated once per clock.
    Register,
    /// Combinational internal signal.
    Wire,
}

/// Whether a signal steers control flow or carries payload data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalClass {
    /// Participates in sequencing decisions; the target of fault injection
    /// and monitoring.
    Control,
    /// Pure payload; never selected by monitors.
    Data,
}

/// Descriptor of one observable signal. `path` is unique within a design
/// and uses `/` as the hierarchy separator (for example `ctl/state`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignalRef {
    /// Hierarchical name, unique within the owning design.
    pub path: String,
    /// Bit width, 1..=128.
    pub width: u16,
    /// Structural role.
    pub kind: SignalKind,
    /// Control/data classification.
    pub class: SignalClass,
}

impl SignalRef {
    /// Convenience constructor.
    pub fn new(path: impl Into<String>, width: u16, kind: SignalKind, class: SignalClass) -> Self {
        SignalRef {
            path: path.into(),
            width,
            kind,
            class,
        }
    }
}

impl fmt::Display for SignalRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.path, self.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_masks_value_to_width() {
        let v = BitVec::new(4, 0xff).unwrap();
        assert_eq!(v.value(), 0xf);
        assert_eq!(v.width(), 4);
    }

    #[test]
    fn width_bounds_rejected() {
        assert!(BitVec::new(0, 0).is_err());
        assert!(BitVec::new(129, 0).is_err());
        assert!(BitVec::new(128, u128::MAX).is_ok());
    }

    #[test]
    fn equality_requires_same_width_and_bits() {
        let a = BitVec::new(4, 3).unwrap();
        let b = BitVec::new(5, 3).unwrap();
        let c = BitVec::new(4, 3).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn bit_flip_round_trips() {
        let v = BitVec::new(8, 0b1010_0001).unwrap();
        let f = v.with_bit_flipped(5).unwrap();
        assert_eq!(f.value(), 0b1000_0001);
        assert_eq!(f.with_bit_flipped(5).unwrap(), v);
        assert!(v.with_bit_flipped(8).is_err());
    }

    #[test]
    fn hex_round_trip_is_padded_lowercase() {
        let v = BitVec::new(9, 0x1aa).unwrap();
        assert_eq!(v.to_hex(), "1aa");
        let w = BitVec::new(9, 0xf).unwrap();
        assert_eq!(w.to_hex(), "00f");
        assert_eq!(BitVec::parse_hex(9, "00f").unwrap(), w);
        assert!(BitVec::parse_hex(4, "1f").is_err());
        assert!(BitVec::parse_hex(8, "zz").is_err());
    }

    #[test]
    fn max_width_hex() {
        let v = BitVec::new(128, u128::MAX).unwrap();
        assert_eq!(v.to_hex().len(), 32);
        assert_eq!(BitVec::parse_hex(128, &v.to_hex()).unwrap(), v);
    }
}
