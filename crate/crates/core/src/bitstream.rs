use crate::error::{domain, Result};
use crate::series::Timebase;

/// Extracted random symbols of `bits_per_symbol` bits each.
///
/// Bit-level views expand every symbol most-significant bit first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitStream {
    symbols: Vec<u16>,
    bits_per_symbol: u8,
    source_dt: Timebase,
}

impl BitStream {
    pub fn new(symbols: Vec<u16>, bits_per_symbol: u8, source_dt: Timebase) -> Result<Self> {
        if !(1..=16).contains(&bits_per_symbol) {
            return Err(domain(format!(
                "bits per symbol must be 1..=16, got {bits_per_symbol}"
            )));
        }
        let limit = 1u32 << bits_per_symbol;
        if let Some(n) = symbols.iter().position(|&s| s as u32 >= limit) {
            return Err(domain(format!(
                "symbol {n} ({}) does not fit in {bits_per_symbol} bits",
                symbols[n]
            )));
        }
        Ok(Self {
            symbols,
            bits_per_symbol,
            source_dt,
        })
    }

    pub fn symbols(&self) -> &[u16] {
        &self.symbols
    }

    pub fn bits_per_symbol(&self) -> u8 {
        self.bits_per_symbol
    }

    pub fn source_dt(&self) -> Timebase {
        self.source_dt
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn bit_len(&self) -> u64 {
        self.symbols.len() as u64 * self.bits_per_symbol as u64
    }

    /// Output rate in bits per second: one symbol per source sample.
    pub fn bit_rate(&self) -> f64 {
        self.source_dt.bit_rate(self.bits_per_symbol as u32)
    }

    /// Individual bits, MSB of each symbol first.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        let k = self.bits_per_symbol;
        self.symbols
            .iter()
            .flat_map(move |&s| (0..k).rev().map(move |b| (s >> b) & 1 == 1))
    }

    /// Concatenated bits packed MSB-first into bytes; the final byte is
    /// zero-padded. For 8-bit symbols this is one byte per symbol.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        if self.bits_per_symbol == 8 {
            return self.symbols.iter().map(|&s| s as u8).collect();
        }
        let mut out = Vec::with_capacity(self.bit_len().div_ceil(8) as usize);
        let mut acc: u32 = 0;
        let mut filled = 0u32;
        for &s in &self.symbols {
            acc = (acc << self.bits_per_symbol) | s as u32;
            filled += self.bits_per_symbol as u32;
            while filled >= 8 {
                filled -= 8;
                out.push((acc >> filled) as u8);
            }
            acc &= (1 << filled) - 1;
        }
        if filled > 0 {
            out.push((acc << (8 - filled)) as u8);
        }
        out
    }

    /// Inverse of [`to_packed_bytes`](Self::to_packed_bytes) for `count`
    /// symbols.
    pub fn from_packed_bytes(
        bytes: &[u8],
        bits_per_symbol: u8,
        count: usize,
        source_dt: Timebase,
    ) -> Result<Self> {
        if !(1..=16).contains(&bits_per_symbol) {
            return Err(domain(format!(
                "bits per symbol must be 1..=16, got {bits_per_symbol}"
            )));
        }
        let needed = (count as u64 * bits_per_symbol as u64).div_ceil(8);
        if (bytes.len() as u64) < needed {
            return Err(domain(format!(
                "{count} symbols of {bits_per_symbol} bits need {needed} bytes, got {}",
                bytes.len()
            )));
        }
        let mut symbols = Vec::with_capacity(count);
        let mut acc: u32 = 0;
        let mut filled = 0u32;
        let mut bytes = bytes.iter();
        let k = bits_per_symbol as u32;
        while symbols.len() < count {
            while filled < k {
                acc = (acc << 8) | *bytes.next().expect("length checked") as u32;
                filled += 8;
            }
            filled -= k;
            symbols.push(((acc >> filled) & ((1 << k) - 1)) as u16);
            acc &= (1 << filled) - 1;
        }
        Self::new(symbols, bits_per_symbol, source_dt)
    }

    /// Bits packed MSB-first into 64-bit words, plus the number of valid bits.
    pub(crate) fn to_words(&self) -> (Vec<u64>, u64) {
        let n = self.bit_len();
        let mut words = Vec::with_capacity(n.div_ceil(64) as usize);
        let mut acc: u128 = 0;
        let mut filled = 0u32;
        for &s in &self.symbols {
            acc = (acc << self.bits_per_symbol) | s as u128;
            filled += self.bits_per_symbol as u32;
            if filled >= 64 {
                filled -= 64;
                words.push((acc >> filled) as u64);
                acc &= (1u128 << filled) - 1;
            }
        }
        if filled > 0 {
            words.push((acc << (64 - filled)) as u64);
        }
        (words, n)
    }
}
