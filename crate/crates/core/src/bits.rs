//! Fixed-capacity bit strings.
//!
//! Values are MSB-first: bit 0 is the most significant bit and `prefix(j)`
//! keeps the `j` high-order bits. Internally the string is left-aligned in a
//! 256-bit big-endian word array, so two values of the same length order
//! exactly like the unsigned integers they encode.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::mix64;

/// Longest supported bit string.
pub const MAX_BITS: u32 = 256;

const WORDS: usize = (MAX_BITS / 64) as usize;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitValue {
    words: [u64; WORDS],
    len: u16,
}

impl BitValue {
    /// The empty string.
    pub const EMPTY: BitValue = BitValue {
        words: [0; WORDS],
        len: 0,
    };

    pub fn zeros(len: u32) -> Result<Self> {
        check_len(len)?;
        Ok(BitValue {
            words: [0; WORDS],
            len: len as u16,
        })
    }

    /// The `len`-bit binary representation of `x`.
    pub fn from_u128(x: u128, len: u32) -> Result<Self> {
        check_len(len)?;
        if len < 128 && x >> len != 0 {
            return Err(Error::invalid(format!("{x} does not fit in {len} bits")));
        }
        let right = [0, 0, (x >> 64) as u64, x as u64];
        Ok(BitValue {
            words: shl(right, MAX_BITS - len),
            len: len as u16,
        })
    }

    /// Packs `bytes` MSB-first, truncating or zero-padding to `len` bits.
    pub fn from_bytes(bytes: &[u8], len: u32) -> Result<Self> {
        check_len(len)?;
        let mut words = [0u64; WORDS];
        for (i, &b) in bytes.iter().take(WORDS * 8).enumerate() {
            words[i / 8] |= (b as u64) << (56 - 8 * (i % 8));
        }
        Ok(BitValue {
            words: mask_top(words, len),
            len: len as u16,
        })
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let len = s.len() as u32;
        let mut v = BitValue::zeros(len)?;
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.words[i / 64] |= 1 << (63 - i % 64),
                _ => return Err(Error::invalid(format!("not a bit string: {s:?}"))),
            }
        }
        Ok(v)
    }

    /// Parses a non-negative decimal integer as an `len`-bit value.
    pub fn from_decimal(s: &str, len: u32) -> Result<Self> {
        check_len(len)?;
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty integer"));
        }
        let mut right = [0u64; WORDS];
        for c in s.chars() {
            let d = c
                .to_digit(10)
                .ok_or_else(|| Error::invalid(format!("not a decimal integer: {s:?}")))?;
            let mut carry = d as u128;
            for w in right.iter_mut().rev() {
                let t = (*w as u128) * 10 + carry;
                *w = t as u64;
                carry = t >> 64;
            }
            if carry != 0 || (len < MAX_BITS && shr(right, len) != [0; WORDS]) {
                return Err(Error::invalid(format!("{s} does not fit in {len} bits")));
            }
        }
        Ok(BitValue {
            words: shl(right, MAX_BITS - len),
            len: len as u16,
        })
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.len as u32
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: u32) -> bool {
        assert!(i < self.len(), "bit index {i} out of range for length {}", self.len);
        self.words[(i / 64) as usize] >> (63 - i % 64) & 1 == 1
    }

    /// The `j` high-order bits. `prefix(0)` is empty, `prefix(len)` is `self`.
    pub fn prefix(&self, j: u32) -> BitValue {
        assert!(j <= self.len(), "prefix {j} longer than value length {}", self.len);
        BitValue {
            words: mask_top(self.words, j),
            len: j as u16,
        }
    }

    /// Bits `start..start + len`.
    pub fn segment(&self, start: u32, len: u32) -> BitValue {
        assert!(start + len <= self.len(), "segment out of range");
        BitValue {
            words: mask_top(shl(self.words, start), len),
            len: len as u16,
        }
    }

    /// Concatenation `self || other`.
    pub fn concat(&self, other: &BitValue) -> Result<BitValue> {
        let len = self.len() + other.len();
        check_len(len)?;
        let tail = shr(other.words, self.len());
        let mut words = self.words;
        for (w, t) in words.iter_mut().zip(tail) {
            *w |= t;
        }
        Ok(BitValue {
            words,
            len: len as u16,
        })
    }

    /// Appends the `bits` low-order bits of `pattern`.
    pub fn extend(&self, pattern: u64, bits: u32) -> Result<BitValue> {
        self.concat(&BitValue::from_u128(pattern as u128, bits)?)
    }

    /// The value as an integer when it fits in 128 bits.
    pub fn to_u128(&self) -> Option<u128> {
        if self.len() > 128 {
            return None;
        }
        let right = shr(self.words, MAX_BITS - self.len());
        Some(((right[2] as u128) << 64) | right[3] as u128)
    }

    /// Zero-padded hexadecimal of the integer the bits encode,
    /// `ceil(len / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.len().div_ceil(4) as usize;
        let right = shr(self.words, MAX_BITS - self.len());
        let full: String = right.iter().map(|w| format!("{w:016x}")).collect();
        full[full.len() - digits..].to_string()
    }

    pub fn from_hex(s: &str, len: u32) -> Result<Self> {
        check_len(len)?;
        let s = s.trim();
        if s.is_empty() || s.len() > (MAX_BITS / 4) as usize {
            return Err(Error::invalid(format!("bad hex value {s:?}")));
        }
        let mut right = [0u64; WORDS];
        for c in s.chars() {
            let d = c
                .to_digit(16)
                .ok_or_else(|| Error::invalid(format!("bad hex value {s:?}")))?;
            right = shl(right, 4);
            right[WORDS - 1] |= d as u64;
        }
        if len < MAX_BITS && shr(right, len) != [0; WORDS] {
            return Err(Error::invalid(format!("{s} does not fit in {len} bits")));
        }
        Ok(BitValue {
            words: shl(right, MAX_BITS - len),
            len: len as u16,
        })
    }

    pub fn to_decimal(&self) -> String {
        let mut right = shr(self.words, MAX_BITS - self.len());
        if right == [0; WORDS] {
            return "0".to_string();
        }
        let mut digits = Vec::new();
        while right != [0; WORDS] {
            let mut rem = 0u128;
            for w in right.iter_mut() {
                let cur = (rem << 64) | *w as u128;
                *w = (cur / 10) as u64;
                rem = cur % 10;
            }
            digits.push(b'0' + rem as u8);
        }
        digits.reverse();
        String::from_utf8(digits).expect("ascii digits")
    }

    /// Canonical 64-bit digest of `(len, bits)` used as the hash input of the
    /// local-hashing oracle. Distinct lengths never share an encoding.
    #[inline]
    pub fn key(&self) -> u64 {
        let mut h = mix64(0x6c64_7068_685f_6b65 ^ self.len as u64);
        for w in &self.words[..(self.len() as usize).div_ceil(64)] {
            h = mix64(h ^ w);
        }
        h
    }

    /// All `2^len` values of length `len`, in ascending order.
    pub fn all(len: u32) -> Result<impl DoubleEndedIterator<Item = BitValue> + ExactSizeIterator> {
        if len > 40 {
            return Err(Error::invalid(format!(
                "refusing to enumerate 2^{len} values"
            )));
        }
        Ok((0..1usize << len).map(move |x| BitValue::from_u128(x as u128, len).expect("fits")))
    }
}

impl fmt::Display for BitValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Serialized as its binary digits, which keeps the length.
impl Serialize for BitValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BitValue::from_bit_str(&s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for BitValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitValue({}b:{})", self.len, self)
    }
}

fn check_len(len: u32) -> Result<()> {
    if len > MAX_BITS {
        return Err(Error::invalid(format!(
            "bit length {len} exceeds the supported maximum {MAX_BITS}"
        )));
    }
    Ok(())
}

fn mask_top(mut words: [u64; WORDS], bits: u32) -> [u64; WORDS] {
    for (i, w) in words.iter_mut().enumerate() {
        let lo = 64 * i as u32;
        if bits <= lo {
            *w = 0;
        } else if bits < lo + 64 {
            *w &= !(u64::MAX >> (bits - lo));
        }
    }
    words
}

fn shl(words: [u64; WORDS], s: u32) -> [u64; WORDS] {
    if s >= MAX_BITS {
        return [0; WORDS];
    }
    let (ws, bs) = ((s / 64) as usize, s % 64);
    let mut out = [0u64; WORDS];
    for i in 0..WORDS - ws {
        let src = i + ws;
        out[i] = words[src] << bs;
        if bs > 0 && src + 1 < WORDS {
            out[i] |= words[src + 1] >> (64 - bs);
        }
    }
    out
}

fn shr(words: [u64; WORDS], s: u32) -> [u64; WORDS] {
    if s >= MAX_BITS {
        return [0; WORDS];
    }
    let (ws, bs) = ((s / 64) as usize, s % 64);
    let mut out = [0u64; WORDS];
    for i in ws..WORDS {
        let src = i - ws;
        out[i] = words[src] >> bs;
        if bs > 0 && src >= 1 {
            out[i] |= words[src - 1] << (64 - bs);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prefix_orientation_is_high_order_first() {
        let v = BitValue::from_u128(0b1011_0010, 8).unwrap();
        assert_eq!(v.to_string(), "10110010");
        assert_eq!(v.prefix(3).to_string(), "101");
        assert_eq!(v.prefix(0), BitValue::EMPTY);
        assert_eq!(v.prefix(8), v);
        assert_eq!(v.segment(2, 4).to_string(), "1100");
    }

    #[test]
    fn bytes_pack_msb_first_and_truncate() {
        let v = BitValue::from_bytes(b"ab", 16).unwrap();
        assert_eq!(v.to_hex(), "6162");
        let t = BitValue::from_bytes(b"ab", 12).unwrap();
        assert_eq!(t.to_string(), "011000010110");
        let padded = BitValue::from_bytes(b"a", 16).unwrap();
        assert_eq!(padded.to_hex(), "6100");
    }

    #[test]
    fn decimal_round_trip_wide_values() {
        let s = "115792089237316195423570985008687907853269984665640564039457584007913129639935";
        let v = BitValue::from_decimal(s, 256).unwrap();
        assert_eq!(v.to_decimal(), s);
        assert_eq!(v.to_hex(), "f".repeat(64));
        assert!(BitValue::from_decimal("256", 8).is_err());
        assert!(BitValue::from_decimal("12a", 8).is_err());
        assert_eq!(BitValue::from_decimal("0", 8).unwrap().to_string(), "00000000");
    }

    #[test]
    fn hex_is_zero_padded() {
        let v = BitValue::from_u128(5, 10).unwrap();
        assert_eq!(v.to_hex(), "005");
        assert_eq!(BitValue::from_hex("005", 10).unwrap(), v);
        assert!(BitValue::from_hex("400", 10).is_err());
    }

    #[test]
    fn keys_separate_lengths() {
        let a = BitValue::from_bit_str("0").unwrap();
        let b = BitValue::from_bit_str("00").unwrap();
        assert_ne!(a.key(), b.key());
        assert_ne!(BitValue::EMPTY.key(), a.key());
    }

    #[test]
    fn enumerate_all_in_order() {
        let all: Vec<_> = BitValue::all(3).unwrap().map(|v| v.to_string()).collect();
        assert_eq!(all, ["000", "001", "010", "011", "100", "101", "110", "111"]);
    }

    #[test]
    fn serde_keeps_length() {
        let v = BitValue::from_bit_str("00101").unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "\"00101\"");
        assert_eq!(serde_json::from_str::<BitValue>(&json).unwrap(), v);
        assert!(serde_json::from_str::<BitValue>("\"012\"").is_err());
    }

    proptest! {
        #[test]
        fn concat_of_split_is_identity(hi in any::<u64>(), lo in any::<u64>(), len in 1u32..=128, cut in 0u32..=128) {
            let x = ((hi as u128) << 64 | lo as u128) & if len == 128 { u128::MAX } else { (1u128 << len) - 1 };
            let cut = cut.min(len);
            let v = BitValue::from_u128(x, len).unwrap();
            let joined = v.prefix(cut).concat(&v.segment(cut, len - cut)).unwrap();
            prop_assert_eq!(joined, v);
            prop_assert_eq!(v.to_u128(), Some(x));
        }

        #[test]
        fn ordering_matches_integers(a in any::<u32>(), b in any::<u32>()) {
            let va = BitValue::from_u128(a as u128, 32).unwrap();
            let vb = BitValue::from_u128(b as u128, 32).unwrap();
            prop_assert_eq!(va.cmp(&vb), a.cmp(&b));
        }
    }
}
