//! Synthetic leaky AES device.
//!
//! Each encryption occupies `cycles_per_op` clock cycles. Cycle
//! `leak_cycle_offset + i` carries the first-round SBox leakage of state byte
//! `i`; every cycle also carries Gaussian noise and Poisson-distributed ambient
//! switching. The same execution can be rendered as a VCD whose extracted
//! switching activity equals the simulated traces sample for sample.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::aes::{encrypt_block, sbox, AesKey128, Block128};
use crate::traces::TraceMatrix;

/// Counter span used by the structured plaintext scheme.
pub const STRUCTURED_RANGE: Range<u32> = 0..3000;

/// Width of the register that carries the leak and Gaussian components.
pub const STATE_REGISTER_WIDTH: u32 = 128;

const MIN_AMBIENT_WIDTH: u32 = 64;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum SynthError {
    #[error("trace count must be at least 1")]
    EmptyPlaintextSet,
    #[error(
        "{count} structured plaintexts requested but the counter range {start}..{end} holds {span}"
    )]
    CounterRange {
        count: usize,
        start: u32,
        end: u32,
        span: usize,
    },
    #[error("cycles_per_op {cycles_per_op} must be at least 16 + leak_cycle_offset ({offset})")]
    CyclesPerOp { cycles_per_op: usize, offset: usize },
    #[error("noise sigma must be finite and non-negative, got {0}")]
    NoiseSigma(f64),
    #[error("ambient rate must be finite and non-negative, got {0}")]
    AmbientRate(f64),
    #[error("I/O error while writing VCD")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaintextMode {
    /// A 16-bit counter replicated into all eight 16-bit segments.
    Structured,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaintextSpec {
    pub mode: PlaintextMode,
    pub count: usize,
    pub seed: u64,
    pub counter_range: Range<u32>,
}

impl PlaintextSpec {
    pub fn structured(count: usize) -> Self {
        Self {
            mode: PlaintextMode::Structured,
            count,
            seed: 0,
            counter_range: STRUCTURED_RANGE,
        }
    }

    pub fn uniform(count: usize, seed: u64) -> Self {
        Self {
            mode: PlaintextMode::UniformRandom,
            count,
            seed,
            counter_range: STRUCTURED_RANGE,
        }
    }
}

/// Eight big-endian copies of `counter`: high byte at even indices, low byte at
/// odd indices.
pub fn structured_plaintext(counter: u16) -> Block128 {
    let [hi, lo] = counter.to_be_bytes();
    let mut out = [0u8; 16];
    for seg in out.chunks_exact_mut(2) {
        seg[0] = hi;
        seg[1] = lo;
    }
    Block128(out)
}

pub fn gen_plaintexts(spec: &PlaintextSpec) -> Result<Vec<Block128>> {
    if spec.count == 0 {
        return Err(SynthError::EmptyPlaintextSet);
    }
    match spec.mode {
        PlaintextMode::Structured => {
            let Range { start, end } = spec.counter_range;
            let span = end.saturating_sub(start) as usize;
            if spec.count > span || end > u16::MAX as u32 + 1 {
                return Err(SynthError::CounterRange {
                    count: spec.count,
                    start,
                    end,
                    span,
                });
            }
            Ok((0..spec.count)
                .map(|j| structured_plaintext((start as usize + j) as u16))
                .collect())
        }
        PlaintextMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            Ok((0..spec.count)
                .map(|_| {
                    let mut b = [0u8; 16];
                    rng.fill(&mut b);
                    Block128(b)
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeakModel {
    /// `HW(sbox(p ^ k))`
    #[default]
    HwOfSboxOut,
    /// `HW((p ^ k) ^ sbox(p ^ k))`
    HdSboxInToSboxOut,
}

impl LeakModel {
    pub fn leak(self, plaintext_byte: u8, key_byte: u8) -> u32 {
        let input = plaintext_byte ^ key_byte;
        let output = sbox(input);
        match self {
            LeakModel::HwOfSboxOut => output.count_ones(),
            LeakModel::HdSboxInToSboxOut => (input ^ output).count_ones(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakConfig {
    pub leak_model: LeakModel,
    pub cycles_per_op: usize,
    pub leak_cycle_offset: usize,
    /// Standard deviation of the additive Gaussian noise, in bit flips.
    pub noise_sigma: f64,
    /// Mean number of unrelated bit flips per cycle.
    pub ambient_activity: f64,
    pub seed: u64,
}

impl Default for LeakConfig {
    fn default() -> Self {
        Self {
            leak_model: LeakModel::HwOfSboxOut,
            cycles_per_op: 150,
            leak_cycle_offset: 20,
            noise_sigma: 1.0,
            ambient_activity: 1.0,
            seed: 0,
        }
    }
}

impl LeakConfig {
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: 0.0,
            ambient_activity: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles_per_op < 16 + self.leak_cycle_offset {
            return Err(SynthError::CyclesPerOp {
                cycles_per_op: self.cycles_per_op,
                offset: self.leak_cycle_offset,
            });
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::NoiseSigma(self.noise_sigma));
        }
        if !(self.ambient_activity.is_finite() && self.ambient_activity >= 0.0) {
            return Err(SynthError::AmbientRate(self.ambient_activity));
        }
        Ok(())
    }

    /// Cycle at which state byte `byte_index` leaks.
    pub fn leak_cycle(&self, byte_index: usize) -> usize {
        self.leak_cycle_offset + byte_index
    }
}

/// One row split into what the state register and the ambient register carry.
#[derive(Debug, Clone, PartialEq, Eq)]
struct RowComponents {
    state: Vec<u32>,
    ambient: Vec<u32>,
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn simulate_row(pt: &Block128, key: &AesKey128, cfg: &LeakConfig, row: usize) -> RowComponents {
    let mut rng = row_rng(cfg.seed, row);
    let normal = (cfg.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, cfg.noise_sigma).expect("validated sigma"));
    let poisson = (cfg.ambient_activity > 0.0)
        .then(|| Poisson::new(cfg.ambient_activity).expect("validated rate"));
    let leak_cycles = cfg.leak_cycle_offset..cfg.leak_cycle_offset + 16;
    let mut state = Vec::with_capacity(cfg.cycles_per_op);
    let mut ambient = Vec::with_capacity(cfg.cycles_per_op);
    for cycle in 0..cfg.cycles_per_op {
        let base = if leak_cycles.contains(&cycle) {
            let i = cycle - cfg.leak_cycle_offset;
            cfg.leak_model.leak(pt.0[i], key.0[i]) as f64
        } else {
            0.0
        };
        let gauss = normal.map_or(0.0, |n| n.sample(&mut rng));
        let amb = poisson.map_or(0.0, |p| p.sample(&mut rng));
        let s = (base + gauss)
            .round()
            .clamp(0.0, STATE_REGISTER_WIDTH as f64);
        state.push(s as u32);
        ambient.push(amb as u32);
    }
    RowComponents { state, ambient }
}

fn components_sequential(
    pts: &[Block128],
    key: &AesKey128,
    cfg: &LeakConfig,
) -> Vec<RowComponents> {
    pts.iter()
        .enumerate()
        .map(|(j, pt)| simulate_row(pt, key, cfg, j))
        .collect()
}

#[cfg(feature = "parallel")]
fn components_parallel(pts: &[Block128], key: &AesKey128, cfg: &LeakConfig) -> Vec<RowComponents> {
    use rayon::prelude::*;
    pts.par_iter()
        .enumerate()
        .map(|(j, pt)| simulate_row(pt, key, cfg, j))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Per-cycle switching activity, one row per plaintext.
    pub traces: TraceMatrix,
    pub ciphertexts: Vec<Block128>,
}

fn assemble(
    rows: &[RowComponents],
    pts: &[Block128],
    key: &AesKey128,
    cfg: &LeakConfig,
) -> Simulation {
    let data = rows
        .iter()
        .flat_map(|r| r.state.iter().zip(&r.ambient).map(|(s, a)| s + a))
        .collect();
    Simulation {
        traces: TraceMatrix::from_counts(pts.len(), cfg.cycles_per_op, data).expect("row lengths"),
        ciphertexts: pts.iter().map(|p| encrypt_block(p, key)).collect(),
    }
}

/// Runs the victim over `pts`. Each sample is
/// `clamp(round(leak + gauss), 0, 128) + poisson`, where `leak` is zero outside
/// the sixteen leak cycles. Row `j` draws from its own stream of `cfg.seed`, so
/// the result does not depend on evaluation order.
pub fn simulate(pts: &[Block128], key: &AesKey128, cfg: &LeakConfig) -> Result<Simulation> {
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    let rows = components_parallel(pts, key, cfg);
    #[cfg(not(feature = "parallel"))]
    let rows = components_sequential(pts, key, cfg);
    Ok(assemble(&rows, pts, key, cfg))
}

/// Single-threaded [`simulate`]; always available for comparison.
pub fn simulate_sequential(
    pts: &[Block128],
    key: &AesKey128,
    cfg: &LeakConfig,
) -> Result<Simulation> {
    cfg.validate()?;
    let rows = components_sequential(pts, key, cfg);
    Ok(assemble(&rows, pts, key, cfg))
}

/// A register whose successive values differ in exactly the requested number
/// of bits. Flips a contiguous run starting at a rotating cursor.
struct FlipRegister {
    width: u32,
    words: Vec<u64>,
    cursor: u32,
}

impl FlipRegister {
    fn new(width: u32) -> Self {
        Self {
            width,
            words: vec![0; (width as usize).div_ceil(64)],
            cursor: 0,
        }
    }

    fn flip(&mut self, count: u32) {
        debug_assert!(count <= self.width);
        for k in 0..count {
            let bit = (self.cursor + k) % self.width;
            self.words[(bit / 64) as usize] ^= 1 << (bit % 64);
        }
        self.cursor = (self.cursor + count) % self.width;
    }

    fn write_binary(&self, out: &mut Vec<u8>) {
        for bit in (0..self.width).rev() {
            let set = (self.words[(bit / 64) as usize] >> (bit % 64)) & 1 == 1;
            out.push(if set { b'1' } else { b'0' });
        }
    }
}

const CLOCK_ID: &str = "!";
const STATE_ID: &str = "\"";
const AMBIENT_ID: &str = "#";

/// Hierarchical name of the clock in files written by [`write_vcd`].
pub const VCD_CLOCK_NAME: &str = "victim.clk";

/// Renders the execution of [`simulate`] as a VCD.
///
/// Cycle `c` spans the rising edges at times `2c + 1` and `2c + 3`; its register
/// updates happen at the falling edge `2c + 2`. The 128-bit `state` register
/// flips as many bits as the leak-plus-Gaussian component, the `ambient`
/// register as many as the Poisson component.
pub fn write_vcd<W: Write>(
    pts: &[Block128],
    key: &AesKey128,
    cfg: &LeakConfig,
    out: W,
) -> Result<()> {
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    let rows = components_parallel(pts, key, cfg);
    #[cfg(not(feature = "parallel"))]
    let rows = components_sequential(pts, key, cfg);
    let max_ambient = rows
        .iter()
        .flat_map(|r| r.ambient.iter().copied())
        .max()
        .unwrap_or(0);
    let ambient_width = max_ambient.max(MIN_AMBIENT_WIDTH);

    let mut w = BufWriter::new(out);
    writeln!(w, "$version satrace synthetic victim $end")?;
    writeln!(w, "$timescale 1ns $end")?;
    writeln!(w, "$scope module victim $end")?;
    writeln!(w, "$var wire 1 {CLOCK_ID} clk $end")?;
    writeln!(
        w,
        "$var reg {STATE_REGISTER_WIDTH} {STATE_ID} state [127:0] $end"
    )?;
    writeln!(
        w,
        "$var reg {ambient_width} {AMBIENT_ID} ambient [{}:0] $end",
        ambient_width - 1
    )?;
    writeln!(w, "$upscope $end")?;
    writeln!(w, "$enddefinitions $end")?;
    writeln!(w, "#0")?;
    writeln!(w, "$dumpvars")?;
    writeln!(w, "0{CLOCK_ID}")?;
    writeln!(w, "b0 {STATE_ID}")?;
    writeln!(w, "b0 {AMBIENT_ID}")?;
    writeln!(w, "$end")?;

    let mut state = FlipRegister::new(STATE_REGISTER_WIDTH);
    let mut ambient = FlipRegister::new(ambient_width);
    let mut line = Vec::with_capacity(ambient_width.max(STATE_REGISTER_WIDTH) as usize + 8);
    let mut cycle: u64 = 0;
    for row in &rows {
        for (&s, &a) in row.state.iter().zip(&row.ambient) {
            writeln!(w, "#{}\n1{CLOCK_ID}", 2 * cycle + 1)?;
            writeln!(w, "#{}\n0{CLOCK_ID}", 2 * cycle + 2)?;
            for (reg, count, id) in [(&mut state, s, STATE_ID), (&mut ambient, a, AMBIENT_ID)] {
                if count > 0 {
                    reg.flip(count);
                    line.clear();
                    line.push(b'b');
                    reg.write_binary(&mut line);
                    line.push(b' ');
                    line.extend_from_slice(id.as_bytes());
                    line.push(b'\n');
                    w.write_all(&line)?;
                }
            }
            cycle += 1;
        }
    }
    // closing edge of the last cycle
    writeln!(w, "#{}\n1{CLOCK_ID}", 2 * cycle + 1)?;
    w.flush()?;
    Ok(())
}

pub fn write_vcd_file(
    pts: &[Block128],
    key: &AesKey128,
    cfg: &LeakConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_vcd(pts, key, cfg, File::create(path)?)
}
