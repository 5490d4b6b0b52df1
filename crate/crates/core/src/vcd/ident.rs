//! Identifier-code to dense signal index lookup.

use std::collections::HashMap;

/// Longest identifier that still fits a `u64` in bijective base 94.
const MAX_DENSE_LEN: usize = 9;

/// Decodes a printable-ASCII identifier as a bijective base-94 integer, first
/// character least significant. Distinct identifiers never collide.
pub fn decode_base94(id: &[u8]) -> Option<u64> {
    if id.is_empty() || id.len() > MAX_DENSE_LEN {
        return None;
    }
    let mut acc = 0u64;
    for &c in id.iter().rev() {
        if !(b'!'..=b'~').contains(&c) {
            return None;
        }
        acc = acc * 94 + (c - b'!') as u64 + 1;
    }
    Some(acc)
}

/// Maps identifier codes to dense slots. Uses a flat table when the decoded
/// codes are compact, as simulator output usually is.
#[derive(Debug, Clone)]
pub enum IdLookup {
    Dense(Vec<u32>),
    Hashed(HashMap<Box<[u8]>, u32>),
}

const EMPTY: u32 = u32::MAX;

impl IdLookup {
    pub fn build<'a>(ids: impl Iterator<Item = (&'a [u8], u32)> + Clone) -> Self {
        let count = ids.clone().count() as u64;
        let max = ids
            .clone()
            .map(|(id, _)| decode_base94(id))
            .try_fold(0u64, |m, d| d.map(|d| m.max(d)));
        match max {
            Some(max) if max <= 8 * count + 4096 => {
                let mut table = vec![EMPTY; max as usize + 1];
                for (id, slot) in ids {
                    table[decode_base94(id).unwrap() as usize] = slot;
                }
                IdLookup::Dense(table)
            }
            _ => IdLookup::Hashed(ids.map(|(id, slot)| (id.into(), slot)).collect()),
        }
    }

    #[inline]
    pub fn get(&self, id: &[u8]) -> Option<u32> {
        match self {
            IdLookup::Dense(table) => {
                let d = decode_base94(id)? as usize;
                table.get(d).copied().filter(|&s| s != EMPTY)
            }
            IdLookup::Hashed(map) => map.get(id).copied(),
        }
    }
}
