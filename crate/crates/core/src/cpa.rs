//! First-round correlation power analysis.
//!
//! For one target byte, every key guess `g` predicts a leakage value per trace;
//! the guess whose prediction correlates best with the measured samples, over
//! the attacked window, is taken as the key byte.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

use crate::aes::{sbox, Block128};
use crate::traces::{Row, TraceMatrix};

pub const GUESSES: usize = 256;

/// Rows summed in plain arithmetic before being folded into the compensated
/// totals.
const BLOCK_ROWS: usize = 64;

/// Sample columns handled by one task.
const CHUNK_COLUMNS: usize = 64;

#[derive(Debug, Error, PartialEq)]
#[non_exhaustive]
pub enum CpaError {
    #[error("at least 2 traces are needed, got {0}")]
    TooFewTraces(usize),
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("trace matrix has {traces} rows but the hypotheses cover {hypotheses}")]
    DimensionMismatch { traces: usize, hypotheses: usize },
    #[error("window {start}..{end} is empty or exceeds the {len} samples per trace")]
    Window {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("byte index {0} is out of range 0..16")]
    ByteIndex(usize),
    #[error("bit index {0} is out of range 0..8")]
    BitIndex(u8),
    #[error("unknown leakage model {0:?} (expected hw, hd or bit:K)")]
    UnknownModel(String),
}

pub type Result<T> = std::result::Result<T, CpaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeakageModel {
    /// `HW(sbox(p ^ g))`
    #[default]
    HwSboxOut,
    /// `HW((p ^ g) ^ sbox(p ^ g))`
    HdSboxInOut,
    /// Bit `k` of `sbox(p ^ g)`.
    SboxBit(u8),
}

impl LeakageModel {
    pub fn predict(self, plaintext_byte: u8, guess: u8) -> f64 {
        let x = plaintext_byte ^ guess;
        let y = sbox(x);
        let v = match self {
            LeakageModel::HwSboxOut => y.count_ones(),
            LeakageModel::HdSboxInOut => (x ^ y).count_ones(),
            LeakageModel::SboxBit(k) => ((y >> k) & 1) as u32,
        };
        v as f64
    }
}

impl FromStr for LeakageModel {
    type Err = CpaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hw" => Ok(LeakageModel::HwSboxOut),
            "hd" => Ok(LeakageModel::HdSboxInOut),
            _ => {
                let k = s
                    .strip_prefix("bit:")
                    .and_then(|k| k.parse::<u8>().ok())
                    .ok_or_else(|| CpaError::UnknownModel(s.to_string()))?;
                if k >= 8 {
                    return Err(CpaError::BitIndex(k));
                }
                Ok(LeakageModel::SboxBit(k))
            }
        }
    }
}

impl fmt::Display for LeakageModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeakageModel::HwSboxOut => f.write_str("hw"),
            LeakageModel::HdSboxInOut => f.write_str("hd"),
            LeakageModel::SboxBit(k) => write!(f, "bit:{k}"),
        }
    }
}

/// Predicted leakage, `n_traces × 256`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisMatrix {
    byte_index: usize,
    model: Option<LeakageModel>,
    n_traces: usize,
    values: Vec<f64>,
}

impl HypothesisMatrix {
    /// Arbitrary predictions, `values[j * 256 + g]`.
    pub fn from_values(byte_index: usize, n_traces: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_traces * GUESSES {
            return Err(CpaError::LengthMismatch(values.len(), n_traces * GUESSES));
        }
        Ok(Self {
            byte_index,
            model: None,
            n_traces,
            values,
        })
    }

    pub fn byte_index(&self) -> usize {
        self.byte_index
    }

    pub fn model(&self) -> Option<LeakageModel> {
        self.model
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn get(&self, trace: usize, guess: u8) -> f64 {
        self.values[trace * GUESSES + guess as usize]
    }

    pub fn row(&self, trace: usize) -> &[f64] {
        &self.values[trace * GUESSES..(trace + 1) * GUESSES]
    }

    pub fn column(&self, guess: u8) -> Vec<f64> {
        (0..self.n_traces).map(|j| self.get(j, guess)).collect()
    }
}

pub fn build_hypotheses(
    pts: &[Block128],
    byte_index: usize,
    model: LeakageModel,
) -> Result<HypothesisMatrix> {
    if byte_index >= 16 {
        return Err(CpaError::ByteIndex(byte_index));
    }
    if let LeakageModel::SboxBit(k) = model {
        if k >= 8 {
            return Err(CpaError::BitIndex(k));
        }
    }
    // one table row per plaintext byte value
    let table: Vec<f64> = (0..=255u8)
        .flat_map(|p| (0..=255u8).map(move |g| model.predict(p, g)))
        .collect();
    let mut values = Vec::with_capacity(pts.len() * GUESSES);
    for pt in pts {
        let p = pt.0[byte_index] as usize;
        values.extend_from_slice(&table[p * GUESSES..(p + 1) * GUESSES]);
    }
    Ok(HypothesisMatrix {
        byte_index,
        model: Some(model),
        n_traces: pts.len(),
        values,
    })
}

/// Pearson correlation of two equally long columns, accumulated in one pass
/// with running means and co-moments over values shifted by the first pair.
/// `None` if either column is constant.
pub fn pearson(h: &[f64], t: &[f64]) -> Result<Option<f64>> {
    if h.len() != t.len() {
        return Err(CpaError::LengthMismatch(h.len(), t.len()));
    }
    if h.len() < 2 {
        return Err(CpaError::TooFewTraces(h.len()));
    }
    let (h0, t0) = (h[0], t[0]);
    let (mut mh, mut mt) = (0.0f64, 0.0f64);
    let (mut shh, mut stt, mut sht) = (0.0f64, 0.0f64, 0.0f64);
    for (k, (&x, &y)) in h.iter().zip(t).enumerate() {
        let (x, y) = (x - h0, y - t0);
        let n = (k + 1) as f64;
        let dx = x - mh;
        let dy = y - mt;
        mh += dx / n;
        mt += dy / n;
        shh += dx * (x - mh);
        stt += dy * (y - mt);
        sht += dx * (y - mt);
    }
    if shh <= 0.0 || stt <= 0.0 {
        return Ok(None);
    }
    Ok(Some(sht / (shh.sqrt() * stt.sqrt())))
}

/// Correlation of every guess against every sample of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    byte_index: usize,
    window: Range<usize>,
    /// `rho[g * width + (t - window.start)]`, 0 where undefined
    rho: Vec<f64>,
    defined: Vec<bool>,
}

impl CorrelationSurface {
    pub fn byte_index(&self) -> usize {
        self.byte_index
    }

    pub fn window(&self) -> Range<usize> {
        self.window.clone()
    }

    pub fn width(&self) -> usize {
        self.window.len()
    }

    /// `None` when the cell is undefined. `sample` is absolute.
    pub fn get(&self, guess: u8, sample: usize) -> Option<f64> {
        let k = guess as usize * self.width() + (sample - self.window.start);
        self.defined[k].then_some(self.rho[k])
    }

    /// Correlations of one guess across the window, undefined cells as 0.
    pub fn guess_row(&self, guess: u8) -> &[f64] {
        let w = self.width();
        &self.rho[guess as usize * w..(guess as usize + 1) * w]
    }

    pub fn undefined_cells(&self) -> usize {
        self.defined.iter().filter(|d| !**d).count()
    }

    /// `max_g |rho[g][t]|` for every sample of the window.
    pub fn max_curve(&self) -> Vec<f64> {
        let w = self.width();
        let mut curve = vec![0.0f64; w];
        for g in 0..GUESSES {
            for (c, r) in curve.iter_mut().zip(&self.rho[g * w..(g + 1) * w]) {
                *c = c.max(r.abs());
            }
        }
        curve
    }
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

fn check_inputs(traces: &TraceMatrix, hyp: &HypothesisMatrix, window: &Range<usize>) -> Result<()> {
    if traces.n_traces() != hyp.n_traces() {
        return Err(CpaError::DimensionMismatch {
            traces: traces.n_traces(),
            hypotheses: hyp.n_traces(),
        });
    }
    if traces.n_traces() < 2 {
        return Err(CpaError::TooFewTraces(traces.n_traces()));
    }
    if window.start >= window.end || window.end > traces.n_samples() {
        return Err(CpaError::Window {
            start: window.start,
            end: window.end,
            len: traces.n_samples(),
        });
    }
    Ok(())
}

/// Hypotheses minus their column means, plus the column sums of squares.
fn center_hypotheses(hyp: &HypothesisMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = hyp.n_traces();
    let mut mean = vec![Kahan::default(); GUESSES];
    for j in 0..n {
        for (m, &v) in mean.iter_mut().zip(hyp.row(j)) {
            m.add(v);
        }
    }
    let mean: Vec<f64> = mean.iter().map(|m| m.sum / n as f64).collect();
    let mut centered = Vec::with_capacity(n * GUESSES);
    let mut sq = vec![Kahan::default(); GUESSES];
    for j in 0..n {
        for ((&v, &m), s) in hyp.row(j).iter().zip(&mean).zip(sq.iter_mut()) {
            let c = v - m;
            centered.push(c);
            s.add(c * c);
        }
    }
    (centered, sq.iter().map(|s| s.sum).collect())
}

fn load_row(row: Row<'_>, cols: Range<usize>, out: &mut [f64]) {
    match row {
        Row::Counts(r) => {
            for (o, &v) in out.iter_mut().zip(&r[cols]) {
                *o = v as f64;
            }
        }
        Row::Real(r) => out.copy_from_slice(&r[cols]),
    }
}

/// Correlations for columns `cols` of every guess, `rho[g * cols.len() + k]`.
///
/// Samples are shifted by the first trace's value for numerical stability; the
/// shift cancels because hypotheses are exactly centered. Rows are summed in
/// blocks of `BLOCK_ROWS` whose subtotals are folded with compensation, so the
/// traces are read once and the result does not depend on how columns are
/// split between tasks.
fn correlate_chunk(
    traces: &TraceMatrix,
    centered: &[f64],
    hyp_sq: &[f64],
    cols: Range<usize>,
) -> (Vec<f64>, Vec<bool>) {
    let n = traces.n_traces();
    let w = cols.len();
    let mut shift = vec![0.0; w];
    load_row(traces.row(0), cols.clone(), &mut shift);

    let mut x = vec![0.0; w];
    let mut blk_ht = vec![0.0; GUESSES * w];
    let mut blk_t = vec![0.0; w];
    let mut blk_tt = vec![0.0; w];
    let mut acc_ht = vec![Kahan::default(); GUESSES * w];
    let mut acc_t = vec![Kahan::default(); w];
    let mut acc_tt = vec![Kahan::default(); w];

    let fold = |blk: &mut [f64], acc: &mut [Kahan]| {
        for (b, a) in blk.iter_mut().zip(acc.iter_mut()) {
            a.add(*b);
            *b = 0.0;
        }
    };

    for j in 0..n {
        load_row(traces.row(j), cols.clone(), &mut x);
        for ((v, s), (bt, btt)) in x
            .iter_mut()
            .zip(&shift)
            .zip(blk_t.iter_mut().zip(blk_tt.iter_mut()))
        {
            *v -= s;
            *bt += *v;
            *btt += *v * *v;
        }
        let hrow = &centered[j * GUESSES..(j + 1) * GUESSES];
        for (g, &h) in hrow.iter().enumerate() {
            let dst = &mut blk_ht[g * w..(g + 1) * w];
            for (d, &v) in dst.iter_mut().zip(&x) {
                *d += h * v;
            }
        }
        if (j + 1) % BLOCK_ROWS == 0 || j + 1 == n {
            fold(&mut blk_ht, &mut acc_ht);
            fold(&mut blk_t, &mut acc_t);
            fold(&mut blk_tt, &mut acc_tt);
        }
    }

    let nf = n as f64;
    let var_t: Vec<f64> = acc_t
        .iter()
        .zip(&acc_tt)
        .map(|(s, ss)| ss.sum - s.sum * s.sum / nf)
        .collect();
    let mut rho = vec![0.0; GUESSES * w];
    let mut defined = vec![false; GUESSES * w];
    for (g, &hsq) in hyp_sq.iter().enumerate() {
        for (k, &vt) in var_t.iter().enumerate() {
            let i = g * w + k;
            if hsq > 0.0 && vt > 0.0 {
                rho[i] = acc_ht[i].sum / (hsq.sqrt() * vt.sqrt());
                defined[i] = true;
            }
        }
    }
    (rho, defined)
}

fn column_chunks(window: &Range<usize>) -> Vec<Range<usize>> {
    window
        .clone()
        .step_by(CHUNK_COLUMNS)
        .map(|s| s..(s + CHUNK_COLUMNS).min(window.end))
        .collect()
}

fn assemble(
    hyp: &HypothesisMatrix,
    window: Range<usize>,
    chunks: &[Range<usize>],
    parts: Vec<(Vec<f64>, Vec<bool>)>,
) -> CorrelationSurface {
    let width = window.len();
    let mut rho = vec![0.0; GUESSES * width];
    let mut defined = vec![false; GUESSES * width];
    for (cols, (r, d)) in chunks.iter().zip(parts) {
        let cw = cols.len();
        let off = cols.start - window.start;
        for g in 0..GUESSES {
            rho[g * width + off..g * width + off + cw].copy_from_slice(&r[g * cw..(g + 1) * cw]);
            defined[g * width + off..g * width + off + cw]
                .copy_from_slice(&d[g * cw..(g + 1) * cw]);
        }
    }
    CorrelationSurface {
        byte_index: hyp.byte_index(),
        window,
        rho,
        defined,
    }
}

/// Correlates every hypothesis column with every trace column in `window`.
pub fn correlate(
    traces: &TraceMatrix,
    hyp: &HypothesisMatrix,
    window: Range<usize>,
) -> Result<CorrelationSurface> {
    #[cfg(feature = "parallel")]
    {
        correlate_parallel(traces, hyp, window)
    }
    #[cfg(not(feature = "parallel"))]
    {
        correlate_sequential(traces, hyp, window)
    }
}

pub fn correlate_sequential(
    traces: &TraceMatrix,
    hyp: &HypothesisMatrix,
    window: Range<usize>,
) -> Result<CorrelationSurface> {
    check_inputs(traces, hyp, &window)?;
    let (centered, sq) = center_hypotheses(hyp);
    let chunks = column_chunks(&window);
    let parts = chunks
        .iter()
        .map(|c| correlate_chunk(traces, &centered, &sq, c.clone()))
        .collect();
    Ok(assemble(hyp, window, &chunks, parts))
}

/// Same result as [`correlate_sequential`], bit for bit; column chunks run as
/// separate tasks.
#[cfg(feature = "parallel")]
pub fn correlate_parallel(
    traces: &TraceMatrix,
    hyp: &HypothesisMatrix,
    window: Range<usize>,
) -> Result<CorrelationSurface> {
    use rayon::prelude::*;
    check_inputs(traces, hyp, &window)?;
    let (centered, sq) = center_hypotheses(hyp);
    let chunks = column_chunks(&window);
    let parts = chunks
        .par_iter()
        .map(|c| correlate_chunk(traces, &centered, &sq, c.clone()))
        .collect();
    Ok(assemble(hyp, window, &chunks, parts))
}

/// Sample at which one guess stands out from the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub sample: usize,
    pub guess: u8,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Minimum `|rho|` in units of `1 / sqrt(n_traces)`.
    pub sigmas: f64,
    /// Minimum `|rho|` as a fraction of the largest one in the surface.
    pub relative: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            sigmas: 6.0,
            relative: 0.5,
        }
    }
}

impl PeakOptions {
    pub fn threshold(&self, n_traces: usize, surface_max: f64) -> f64 {
        (self.sigmas / (n_traces as f64).sqrt()).max(self.relative * surface_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByteReport {
    pub byte_index: usize,
    pub window: Range<usize>,
    pub best_guess: u8,
    /// Absolute sample index of `best_rho`.
    pub best_sample: usize,
    /// Signed correlation of the best guess at `best_sample`.
    pub best_rho: f64,
    /// Guesses by descending score.
    pub ranking: Vec<u8>,
    /// `max_t |rho[g][t]|`, indexed by guess.
    pub scores: Vec<f64>,
    pub true_key: Option<u8>,
    pub true_rank: Option<usize>,
    /// `max_g |rho[g][t]|` over the window.
    pub max_curve: Vec<f64>,
    /// Per-sample winners where the curve is significant.
    pub peaks: Vec<Peak>,
    pub undefined_cells: usize,
}

impl ByteReport {
    /// Distinct winning guesses among the peaks, ascending.
    pub fn peak_guesses(&self) -> Vec<u8> {
        let mut g: Vec<u8> = self.peaks.iter().map(|p| p.guess).collect();
        g.sort_unstable();
        g.dedup();
        g
    }
}

pub fn rank_and_report(surface: &CorrelationSurface, true_key: Option<u8>) -> ByteReport {
    rank_with_peaks(surface, true_key, None, PeakOptions::default())
}

/// [`rank_and_report`] with explicit peak detection settings. `n_traces`
/// feeds the absolute threshold; without it only the relative one applies.
pub fn rank_with_peaks(
    surface: &CorrelationSurface,
    true_key: Option<u8>,
    n_traces: Option<usize>,
    opts: PeakOptions,
) -> ByteReport {
    let w = surface.width();
    let start = surface.window.start;
    let mut scores = vec![0.0f64; GUESSES];
    let mut best_at = vec![0usize; GUESSES];
    for (g, (score, at)) in scores.iter_mut().zip(best_at.iter_mut()).enumerate() {
        for (k, r) in surface.guess_row(g as u8).iter().enumerate() {
            if r.abs() > *score {
                *score = r.abs();
                *at = k;
            }
        }
    }
    let mut ranking: Vec<u8> = (0..=255).collect();
    ranking.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    let best = ranking[0];
    let best_sample = best_at[best as usize];

    let curve = surface.max_curve();
    let surface_max = curve.iter().copied().fold(0.0, f64::max);
    let threshold = match n_traces {
        Some(n) => opts.threshold(n, surface_max),
        None => opts.relative * surface_max,
    };
    let mut peaks = Vec::new();
    if surface_max > 0.0 {
        for (k, &c) in curve.iter().enumerate() {
            if c < threshold {
                continue;
            }
            // first guess reaching the maximum, i.e. the smallest on ties
            let g = (0..GUESSES)
                .find(|&g| surface.guess_row(g as u8)[k].abs() == c)
                .expect("curve value comes from some guess");
            peaks.push(Peak {
                sample: start + k,
                guess: g as u8,
                rho: surface.guess_row(g as u8)[k],
            });
        }
    }

    ByteReport {
        byte_index: surface.byte_index,
        window: surface.window(),
        best_guess: best,
        best_sample: start + best_sample,
        best_rho: surface.guess_row(best)[best_sample.min(w.saturating_sub(1))],
        true_rank: true_key.map(|k| ranking.iter().position(|&g| g == k).expect("permutation")),
        true_key,
        ranking,
        scores,
        max_curve: curve,
        peaks,
        undefined_cells: surface.undefined_cells(),
    }
}

/// Reports for several target bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct CpaResult {
    pub model: LeakageModel,
    pub n_traces: usize,
    pub bytes: Vec<ByteReport>,
}

impl CpaResult {
    /// `Some(true)` iff every byte with a known key is ranked first.
    pub fn all_recovered(&self) -> Option<bool> {
        let ranks: Vec<usize> = self.bytes.iter().filter_map(|b| b.true_rank).collect();
        (!ranks.is_empty()).then(|| ranks.iter().all(|&r| r == 0))
    }
}

fn attack_byte(
    traces: &TraceMatrix,
    pts: &[Block128],
    byte_index: usize,
    model: LeakageModel,
    window: Range<usize>,
    key: Option<&[u8; 16]>,
) -> Result<ByteReport> {
    let hyp = build_hypotheses(pts, byte_index, model)?;
    let surface = correlate(traces, &hyp, window)?;
    Ok(rank_with_peaks(
        &surface,
        key.map(|k| k[byte_index]),
        Some(traces.n_traces()),
        PeakOptions::default(),
    ))
}

/// Runs the full attack on each of `bytes`.
pub fn attack(
    traces: &TraceMatrix,
    pts: &[Block128],
    bytes: &[usize],
    model: LeakageModel,
    window: Range<usize>,
    key: Option<&[u8; 16]>,
) -> Result<CpaResult> {
    if pts.len() != traces.n_traces() {
        return Err(CpaError::DimensionMismatch {
            traces: traces.n_traces(),
            hypotheses: pts.len(),
        });
    }
    #[cfg(feature = "parallel")]
    let reports: Result<Vec<ByteReport>> = {
        use rayon::prelude::*;
        bytes
            .par_iter()
            .map(|&b| attack_byte(traces, pts, b, model, window.clone(), key))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let reports: Result<Vec<ByteReport>> = bytes
        .iter()
        .map(|&b| attack_byte(traces, pts, b, model, window.clone(), key))
        .collect();
    Ok(CpaResult {
        model,
        n_traces: traces.n_traces(),
        bytes: reports?,
    })
}
