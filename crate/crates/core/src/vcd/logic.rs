//! Four-state bit vectors stored as two bitplanes.
//!
//! Per bit, `(value, xz)` encodes `0 = (0,0)`, `1 = (1,0)`, `X = (0,1)`, `Z = (1,1)`.
//! Bit 0 is the least significant bit. Bits above `width` in the last word are
//! always zero in both planes.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logic {
    Zero,
    One,
    X,
    Z,
}

impl Logic {
    pub fn from_char(c: u8) -> Option<Self> {
        match c {
            b'0' => Some(Logic::Zero),
            b'1' => Some(Logic::One),
            b'x' | b'X' => Some(Logic::X),
            b'z' | b'Z' => Some(Logic::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Logic::Zero => '0',
            Logic::One => '1',
            Logic::X => 'x',
            Logic::Z => 'z',
        }
    }

    #[inline]
    fn planes(self) -> (bool, bool) {
        match self {
            Logic::Zero => (false, false),
            Logic::One => (true, false),
            Logic::X => (false, true),
            Logic::Z => (true, true),
        }
    }

    #[inline]
    fn from_planes(value: bool, xz: bool) -> Self {
        match (value, xz) {
            (false, false) => Logic::Zero,
            (true, false) => Logic::One,
            (false, true) => Logic::X,
            (true, true) => Logic::Z,
        }
    }
}

/// How unknown (X) and high-impedance (Z) bits count towards Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XzPolicy {
    /// Only 0<->1 flips between known bits count.
    #[default]
    CountAsZeroFlip,
    /// Any change of the four-state value counts as one flip.
    CountAsFlip,
}

#[inline]
pub(crate) fn words_for(width: u32) -> usize {
    (width as usize).div_ceil(64)
}

#[inline]
pub(crate) fn last_word_mask(width: u32) -> u64 {
    match width % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Borrowed four-state value.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct LogicRef<'a> {
    pub(crate) width: u32,
    pub(crate) value: &'a [u64],
    pub(crate) xz: &'a [u64],
}

impl<'a> LogicRef<'a> {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bit(&self, i: u32) -> Logic {
        let (w, b) = ((i / 64) as usize, i % 64);
        Logic::from_planes((self.value[w] >> b) & 1 == 1, (self.xz[w] >> b) & 1 == 1)
    }

    /// Bits from most significant to least significant, the order VCD prints them.
    pub fn to_bits(&self) -> Vec<Logic> {
        (0..self.width).rev().map(|i| self.bit(i)).collect()
    }

    pub fn is_known(&self) -> bool {
        self.xz.iter().all(|&w| w == 0)
    }

    /// The value as an integer, if it is fully known and fits in 64 bits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.width > 64 || !self.is_known() {
            return None;
        }
        Some(self.value[0])
    }

    /// Set bits among the known bits; X and Z contribute nothing.
    #[inline]
    pub fn hamming_weight(&self) -> u64 {
        self.value
            .iter()
            .zip(self.xz)
            .map(|(v, x)| (v & !x).count_ones() as u64)
            .sum()
    }

    /// Hamming distance to `other` (same width) under `policy`.
    #[inline]
    pub fn hamming_distance(&self, other: &LogicRef<'_>, policy: XzPolicy) -> u64 {
        debug_assert_eq!(self.width, other.width);
        let words = self
            .value
            .iter()
            .zip(self.xz)
            .zip(other.value.iter().zip(other.xz));
        match policy {
            XzPolicy::CountAsZeroFlip => words
                .map(|((va, xa), (vb, xb))| ((va ^ vb) & !(xa | xb)).count_ones() as u64)
                .sum(),
            XzPolicy::CountAsFlip => words
                .map(|((va, xa), (vb, xb))| ((va ^ vb) | (xa ^ xb)).count_ones() as u64)
                .sum(),
        }
    }

    pub fn to_owned(&self) -> LogicVec {
        LogicVec {
            width: self.width,
            value: self.value.to_vec(),
            xz: self.xz.to_vec(),
        }
    }
}

impl fmt::Debug for LogicRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.to_bits().into_iter().map(Logic::as_char).collect();
        write!(f, "b{s}")
    }
}

/// Owned four-state value.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LogicVec {
    width: u32,
    value: Vec<u64>,
    xz: Vec<u64>,
}

impl LogicVec {
    pub fn all_x(width: u32) -> Self {
        let n = words_for(width);
        let mut xz = vec![u64::MAX; n];
        if let Some(last) = xz.last_mut() {
            *last &= last_word_mask(width);
        }
        Self {
            width,
            value: vec![0; n],
            xz,
        }
    }

    pub fn zeros(width: u32) -> Self {
        let n = words_for(width);
        Self {
            width,
            value: vec![0; n],
            xz: vec![0; n],
        }
    }

    /// Known value from the low `width` bits of `v`.
    pub fn from_u64(width: u32, v: u64) -> Self {
        let mut out = Self::zeros(width);
        if let Some(first) = out.value.first_mut() {
            *first = if width >= 64 {
                v
            } else {
                v & last_word_mask(width)
            };
        }
        out
    }

    /// From bits given most significant first.
    pub fn from_bits(bits: &[Logic]) -> Self {
        let width = bits.len() as u32;
        let mut out = Self::zeros(width);
        for (k, &b) in bits.iter().enumerate() {
            out.set_bit(width - 1 - k as u32, b);
        }
        out
    }

    pub fn set_bit(&mut self, i: u32, b: Logic) {
        let (w, s) = ((i / 64) as usize, i % 64);
        let (v, x) = b.planes();
        self.value[w] = (self.value[w] & !(1 << s)) | ((v as u64) << s);
        self.xz[w] = (self.xz[w] & !(1 << s)) | ((x as u64) << s);
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn as_ref(&self) -> LogicRef<'_> {
        LogicRef {
            width: self.width,
            value: &self.value,
            xz: &self.xz,
        }
    }
}

impl fmt::Debug for LogicVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.as_ref().fmt(f)
    }
}

/// Decodes a VCD value literal (MSB first, no radix prefix) into the two planes.
///
/// Shorter literals are left-extended: with the leading digit when it is X or
/// Z, with zeros otherwise. Returns `None` on an invalid digit.
pub(crate) fn decode_binary(
    digits: &[u8],
    width: u32,
    value: &mut [u64],
    xz: &mut [u64],
) -> Option<()> {
    value.fill(0);
    xz.fill(0);
    let len = digits.len() as u32;
    debug_assert!(len <= width && len > 0);
    for (k, &c) in digits.iter().enumerate() {
        let (v, x) = Logic::from_char(c)?.planes();
        let bit = len - 1 - k as u32;
        let (w, s) = ((bit / 64) as usize, bit % 64);
        value[w] |= (v as u64) << s;
        xz[w] |= (x as u64) << s;
    }
    if len < width {
        let (v, x) = Logic::from_char(digits[0])?.planes();
        if x {
            for bit in len..width {
                let (w, s) = ((bit / 64) as usize, bit % 64);
                value[w] |= (v as u64) << s;
                xz[w] |= 1 << s;
            }
        }
    }
    Some(())
}
