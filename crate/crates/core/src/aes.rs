//! Table-driven AES-128 used to generate ciphertexts for the synthetic victim
//! and first-round SBox intermediates for CPA hypotheses.
//!
//! Nothing here tries to be constant time: this is the attacker's model of the
//! device, not the device.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[rustfmt::skip]
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HexError {
    #[error("expected {expected} hex digits, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("invalid hex digit `{0}`")]
    Digit(char),
}

fn parse_hex16(s: &str) -> Result<[u8; 16], HexError> {
    let s = s.trim();
    let s = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if s.len() != 32 {
        return Err(HexError::Length {
            expected: 32,
            actual: s.chars().count(),
        });
    }
    let mut out = [0u8; 16];
    let digits: Vec<char> = s.chars().collect();
    for (i, pair) in digits.chunks(2).enumerate() {
        let hi = pair[0].to_digit(16).ok_or(HexError::Digit(pair[0]))?;
        let lo = pair[1].to_digit(16).ok_or(HexError::Digit(pair[1]))?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Ok(out)
}

fn write_hex(bytes: &[u8], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for b in bytes {
        write!(f, "{b:02x}")?;
    }
    Ok(())
}

/// A 128-bit block. Byte `i` is the i-th most significant byte of the value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Block128(pub [u8; 16]);

impl Block128 {
    pub const fn new(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl FromStr for Block128 {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex16(s).map(Self)
    }
}

impl fmt::Display for Block128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(&self.0, f)
    }
}

impl fmt::Debug for Block128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block128({self})")
    }
}

impl From<[u8; 16]> for Block128 {
    fn from(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct AesKey128(pub [u8; 16]);

impl AesKey128 {
    pub const fn new(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn byte(&self, index: usize) -> u8 {
        self.0[index]
    }
}

impl FromStr for AesKey128 {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex16(s).map(Self)
    }
}

impl fmt::Display for AesKey128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(&self.0, f)
    }
}

impl fmt::Debug for AesKey128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AesKey128({self})")
    }
}

impl From<[u8; 16]> for AesKey128 {
    fn from(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }
}

#[inline]
pub fn sbox(b: u8) -> u8 {
    SBOX[b as usize]
}

/// The first-round SBox output for one state byte: `sbox(p[i] ^ guess)`.
///
/// Round key 0 is the cipher key, so `guess` is directly a guess of key byte `i`.
#[inline]
pub fn first_round_intermediate(p: &Block128, key_guess: u8, byte_index: usize) -> u8 {
    sbox(p.0[byte_index] ^ key_guess)
}

/// FIPS-197 key schedule; round key `r` is returned in the same byte order as
/// the cipher key.
pub fn key_expansion(key: &AesKey128) -> [[u8; 16]; 11] {
    let mut words = [[0u8; 4]; 44];
    for (i, w) in words.iter_mut().take(4).enumerate() {
        w.copy_from_slice(&key.0[4 * i..4 * i + 4]);
    }
    for i in 4..44 {
        let mut temp = words[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            for b in temp.iter_mut() {
                *b = sbox(*b);
            }
            temp[0] ^= RCON[i / 4 - 1];
        }
        for j in 0..4 {
            words[i][j] = words[i - 4][j] ^ temp[j];
        }
    }
    let mut round_keys = [[0u8; 16]; 11];
    for (r, rk) in round_keys.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&words[4 * r + c]);
        }
    }
    round_keys
}

#[inline]
fn xtime(b: u8) -> u8 {
    (b << 1) ^ (((b >> 7) & 1) * 0x1b)
}

fn add_round_key(state: &mut [u8; 16], rk: &[u8; 16]) {
    for (s, k) in state.iter_mut().zip(rk) {
        *s ^= k;
    }
}

fn sub_bytes(state: &mut [u8; 16]) {
    for s in state.iter_mut() {
        *s = sbox(*s);
    }
}

// Byte i sits at column i / 4, row i % 4.
fn shift_rows(state: &mut [u8; 16]) {
    let old = *state;
    for c in 0..4 {
        for r in 0..4 {
            state[4 * c + r] = old[4 * ((c + r) % 4) + r];
        }
    }
}

fn mix_columns(state: &mut [u8; 16]) {
    for col in state.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        let all = a0 ^ a1 ^ a2 ^ a3;
        col[0] ^= all ^ xtime(a0 ^ a1);
        col[1] ^= all ^ xtime(a1 ^ a2);
        col[2] ^= all ^ xtime(a2 ^ a3);
        col[3] ^= all ^ xtime(a3 ^ a0);
    }
}

pub fn encrypt_block(p: &Block128, key: &AesKey128) -> Block128 {
    let round_keys = key_expansion(key);
    let mut state = p.0;
    add_round_key(&mut state, &round_keys[0]);
    for rk in &round_keys[1..10] {
        sub_bytes(&mut state);
        shift_rows(&mut state);
        mix_columns(&mut state);
        add_round_key(&mut state, rk);
    }
    sub_bytes(&mut state);
    shift_rows(&mut state);
    add_round_key(&mut state, &round_keys[10]);
    Block128(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbox_known_entries() {
        assert_eq!(sbox(0x00), 0x63);
        assert_eq!(sbox(0x53), 0xed);
        assert_eq!(sbox(0x03), 0x7b);
    }

    #[test]
    fn sbox_is_a_permutation() {
        let mut seen = [false; 256];
        for b in 0..=255u8 {
            let s = sbox(b);
            assert!(!seen[s as usize], "duplicate output {s:#04x}");
            seen[s as usize] = true;
        }
    }

    #[test]
    fn first_round_examples() {
        let mut p = Block128::default();
        assert_eq!(first_round_intermediate(&p, 0x00, 0), 0x63);
        p.0[5] = 0xaa;
        assert_eq!(first_round_intermediate(&p, 0xaa, 5), 0x63);
        p.0[9] = 0x01;
        assert_eq!(first_round_intermediate(&p, 0x02, 9), 0x7b);
    }

    #[test]
    fn first_round_depends_only_on_target_byte() {
        let base = Block128([0x5a; 16]);
        for i in 0..16 {
            for g in [0u8, 0x3c, 0xff] {
                let mut other = base;
                for (j, b) in other.0.iter_mut().enumerate() {
                    if j != i {
                        *b = b.wrapping_mul(7).wrapping_add(j as u8);
                    }
                }
                assert_eq!(
                    first_round_intermediate(&base, g, i),
                    first_round_intermediate(&other, g, i)
                );
            }
        }
    }

    #[test]
    fn key_expansion_zero_key() {
        let rks = key_expansion(&AesKey128([0; 16]));
        assert_eq!(rks[0], [0; 16]);
        assert_eq!(
            Block128(rks[1]).to_string(),
            "62636363626363636263636362636363"
        );
        assert_eq!(
            Block128(rks[10]).to_string(),
            "b4ef5bcb3e92e21123e951cf6f8f188e"
        );
    }

    #[test]
    fn round_key_zero_is_cipher_key() {
        let key: AesKey128 = "00ff00ff11ee22dd33cc44bb55aa6699".parse().unwrap();
        assert_eq!(key_expansion(&key)[0], key.0);
    }

    #[test]
    fn fips197_appendix_c1() {
        let key: AesKey128 = "000102030405060708090a0b0c0d0e0f".parse().unwrap();
        let pt: Block128 = "00112233445566778899aabbccddeeff".parse().unwrap();
        assert_eq!(
            encrypt_block(&pt, &key).to_string(),
            "69c4e0d86a7b0430d8cdb78070b4c55a"
        );
    }

    #[test]
    fn hex_parse_errors() {
        assert_eq!(
            "00ff".parse::<AesKey128>(),
            Err(HexError::Length {
                expected: 32,
                actual: 4
            })
        );
        assert_eq!(
            "g0ff00ff11ee22dd33cc44bb55aa6699".parse::<AesKey128>(),
            Err(HexError::Digit('g'))
        );
        assert!("0x00ff00ff11ee22dd33cc44bb55aa6699"
            .parse::<AesKey128>()
            .is_ok());
    }

    #[test]
    fn distinct_plaintexts_distinct_ciphertexts() {
        let key = AesKey128([7; 16]);
        let a = encrypt_block(&Block128([0; 16]), &key);
        let mut p = [0; 16];
        p[15] = 1;
        let b = encrypt_block(&Block128(p), &key);
        assert_ne!(a, b);
    }
}
