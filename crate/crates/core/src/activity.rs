//! Folds streaming value changes into one switching-activity sample per clock
//! cycle.
//!
//! Conventions:
//! - a cycle runs from one configured clock edge to the next; changes in the
//!   timestep of the closing edge belong to the cycle being closed;
//! - activity before the first edge and after the last edge is dropped, so a
//!   file with `k` edges yields `k - 1` cycles;
//! - the clock signal itself is never measured;
//! - an edge is a known `0 -> 1` (rising) or `1 -> 0` (falling) transition.

use std::io::BufRead;
use std::ops::Range;

use log::warn;
use thiserror::Error;

use crate::traces::TraceMatrix;
use crate::vcd::{SignalState, TimestepBatch, VcdError, VcdHeader, VcdParser};

pub use crate::vcd::XzPolicy;

/// Default extraction window, in clock cycles.
pub const DEFAULT_WINDOW: Range<u64> = 0..10_000;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum ExtractError {
    #[error(transparent)]
    Vcd(#[from] VcdError),
    #[error("no clock edges")]
    NoClockEdges,
    #[error("clock selector `{0}` matches no signal")]
    ClockNotFound(String),
    #[error("clock selector `{selector}` is ambiguous: {}", matches.join(", "))]
    AmbiguousClock {
        selector: String,
        matches: Vec<String>,
    },
    #[error("clock `{name}` is {width} bits wide, expected 1")]
    ClockNotScalar { name: String, width: u32 },
    #[error("empty window {start}..{end}")]
    InvalidWindow { start: u64, end: u64 },
    #[error("change on undeclared signal index {0}")]
    UndeclaredSignal(usize),
    #[error("invalid glob pattern `{pattern}`")]
    Pattern {
        pattern: String,
        #[source]
        source: glob::PatternError,
    },
    #[error("{len} samples cannot be split into {rows} equal traces")]
    Segmentation { len: usize, rows: usize },
    #[error("sample {value} at cycle {cycle} does not fit in 32 bits")]
    SampleOverflow { cycle: usize, value: u64 },
    #[error("power constants must be strictly positive")]
    InvalidConstants,
}

pub type Result<T> = std::result::Result<T, ExtractError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockEdge {
    #[default]
    Rising,
    Falling,
}

/// Which per-cycle total becomes the trace sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Hd,
    Hw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleActivity {
    pub cycle_index: u64,
    /// Bit flips summed over all measured signals during the cycle.
    pub hd_total: u64,
    /// Set bits summed over all measured signals at the end of the cycle.
    pub hw_total: u64,
}

impl CycleActivity {
    pub fn metric(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Hd => self.hd_total,
            Metric::Hw => self.hw_total,
        }
    }
}

/// Load capacitance (F), supply voltage (V) and clock frequency (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConstants {
    c_load: f64,
    v_dd: f64,
    freq: f64,
}

impl PowerConstants {
    pub fn new(c_load: f64, v_dd: f64, freq: f64) -> Result<Self> {
        if [c_load, v_dd, freq]
            .iter()
            .all(|&x| x.is_finite() && x > 0.0)
        {
            Ok(Self { c_load, v_dd, freq })
        } else {
            Err(ExtractError::InvalidConstants)
        }
    }

    pub fn c_load(&self) -> f64 {
        self.c_load
    }

    pub fn v_dd(&self) -> f64 {
        self.v_dd
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }
}

/// Dynamic power in watts, taking the cycle's bit-flip count as the switching
/// factor.
pub fn scale_to_power(acc: &CycleActivity, k: &PowerConstants) -> f64 {
    acc.hd_total as f64 * k.c_load * k.v_dd * k.v_dd * k.freq
}

#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    /// Exact hierarchical name, identifier code, or trailing name component.
    pub clock: String,
    pub edge: ClockEdge,
    /// Half-open range of cycle indices to keep.
    pub window: Range<u64>,
    /// Signals must match one of these (when non-empty) by hierarchical name.
    pub include: Vec<glob::Pattern>,
    /// Signals matching any of these are not measured.
    pub exclude: Vec<glob::Pattern>,
    pub xz_policy: XzPolicy,
    pub metric: Metric,
}

impl ExtractionConfig {
    pub fn new(clock: impl Into<String>) -> Self {
        Self {
            clock: clock.into(),
            edge: ClockEdge::Rising,
            window: DEFAULT_WINDOW,
            include: Vec::new(),
            exclude: Vec::new(),
            xz_policy: XzPolicy::default(),
            metric: Metric::Hd,
        }
    }

    pub fn with_window(mut self, window: Range<u64>) -> Self {
        self.window = window;
        self
    }

    pub fn with_edge(mut self, edge: ClockEdge) -> Self {
        self.edge = edge;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_xz_policy(mut self, policy: XzPolicy) -> Self {
        self.xz_policy = policy;
        self
    }

    pub fn include(mut self, pattern: &str) -> Result<Self> {
        self.include.push(compile(pattern)?);
        Ok(self)
    }

    pub fn exclude(mut self, pattern: &str) -> Result<Self> {
        self.exclude.push(compile(pattern)?);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.window.start >= self.window.end {
            return Err(ExtractError::InvalidWindow {
                start: self.window.start,
                end: self.window.end,
            });
        }
        Ok(())
    }
}

fn compile(pattern: &str) -> Result<glob::Pattern> {
    glob::Pattern::new(pattern).map_err(|source| ExtractError::Pattern {
        pattern: pattern.to_string(),
        source,
    })
}

/// Resolves a clock selector to a dense signal index.
///
/// Tried in order: exact hierarchical name, identifier code, trailing name
/// component(s). Declarations aliasing one signal count as one match.
pub fn resolve_clock(header: &VcdHeader, selector: &str) -> Result<usize> {
    let suffix = format!(".{selector}");
    let passes: [&dyn Fn(&crate::vcd::SignalDecl) -> bool; 3] = [
        &|d| d.hier_name == selector,
        &|d| d.id_code == selector,
        &|d| d.hier_name.ends_with(&suffix),
    ];
    for pass in passes {
        let mut indices: Vec<usize> = header
            .signals
            .iter()
            .filter(|d| pass(d))
            .map(|d| d.index)
            .collect();
        indices.sort_unstable();
        indices.dedup();
        match indices.as_slice() {
            [] => continue,
            [index] => {
                let width = header.width_of(*index);
                if width != 1 {
                    return Err(ExtractError::ClockNotScalar {
                        name: selector.to_string(),
                        width,
                    });
                }
                return Ok(*index);
            }
            many => {
                let matches = many
                    .iter()
                    .flat_map(|&i| header.aliases(i).map(|d| d.hier_name.clone()))
                    .collect();
                return Err(ExtractError::AmbiguousClock {
                    selector: selector.to_string(),
                    matches,
                });
            }
        }
    }
    Err(ExtractError::ClockNotFound(selector.to_string()))
}

/// Per-signal flag: does this signal contribute to the totals?
pub fn measured_signals(header: &VcdHeader, clock: usize, config: &ExtractionConfig) -> Vec<bool> {
    let mut measured = vec![false; header.signal_count()];
    for d in &header.signals {
        if d.index == clock {
            continue;
        }
        let included =
            config.include.is_empty() || config.include.iter().any(|p| p.matches(&d.hier_name));
        let excluded = config.exclude.iter().any(|p| p.matches(&d.hier_name));
        if included && !excluded {
            measured[d.index] = true;
        }
    }
    measured
}

/// Streaming HD/HW accumulator. Owns the current signal state; memory is
/// proportional to the total declared width.
#[derive(Debug, Clone)]
pub struct ActivityAccumulator {
    state: SignalState,
    measured: Vec<bool>,
    clock: usize,
    edge: ClockEdge,
    policy: XzPolicy,
    hd_open: u64,
    hw_current: u64,
    started: bool,
    edges_seen: u64,
    next_cycle: u64,
}

impl ActivityAccumulator {
    pub fn new(header: &VcdHeader, config: &ExtractionConfig) -> Result<Self> {
        config.validate()?;
        let clock = resolve_clock(header, &config.clock)?;
        let measured = measured_signals(header, clock, config);
        Ok(Self {
            state: SignalState::all_x(header.widths()),
            measured,
            clock,
            edge: config.edge,
            policy: config.xz_policy,
            hd_open: 0,
            hw_current: 0,
            started: false,
            edges_seen: 0,
            next_cycle: 0,
        })
    }

    pub fn clock_index(&self) -> usize {
        self.clock
    }

    pub fn state(&self) -> &SignalState {
        &self.state
    }

    pub fn edges_seen(&self) -> u64 {
        self.edges_seen
    }

    /// Index the next closed cycle will get.
    pub fn next_cycle(&self) -> u64 {
        self.next_cycle
    }

    /// Applies one timestep. Returns the cycle closed by a clock edge in this
    /// timestep, if any.
    pub fn accumulate(&mut self, batch: &TimestepBatch) -> Result<Option<CycleActivity>> {
        let mut edge = false;
        for (index, new) in batch.iter() {
            if index >= self.state.len() {
                return Err(ExtractError::UndeclaredSignal(index));
            }
            let old = self.state.get(index);
            if index == self.clock {
                edge = match self.edge {
                    ClockEdge::Rising => old.to_u64() == Some(0) && new.to_u64() == Some(1),
                    ClockEdge::Falling => old.to_u64() == Some(1) && new.to_u64() == Some(0),
                };
            } else if self.measured[index] {
                self.hd_open += old.hamming_distance(&new, self.policy);
                self.hw_current = self.hw_current - old.hamming_weight() + new.hamming_weight();
            }
            self.state.set(index, new);
        }
        if !edge {
            return Ok(None);
        }
        self.edges_seen += 1;
        let hd = std::mem::take(&mut self.hd_open);
        if !std::mem::replace(&mut self.started, true) {
            return Ok(None);
        }
        let closed = CycleActivity {
            cycle_index: self.next_cycle,
            hd_total: hd,
            hw_total: self.hw_current,
        };
        self.next_cycle += 1;
        Ok(Some(closed))
    }
}

/// Iterator of window-clipped cycles pulled straight from a VCD stream.
///
/// Stops reading as soon as the window is exhausted. Yields
/// [`ExtractError::NoClockEdges`] if the stream ends without a single edge.
pub struct CycleStream<R> {
    parser: VcdParser<R>,
    acc: ActivityAccumulator,
    batch: TimestepBatch,
    window: Range<u64>,
    done: bool,
}

impl<R: BufRead> CycleStream<R> {
    pub fn new(reader: R, config: &ExtractionConfig) -> Result<Self> {
        let parser = VcdParser::new(reader)?;
        Self::from_parser(parser, config)
    }

    pub fn from_parser(parser: VcdParser<R>, config: &ExtractionConfig) -> Result<Self> {
        let acc = ActivityAccumulator::new(parser.header(), config)?;
        Ok(Self {
            parser,
            acc,
            batch: TimestepBatch::new(),
            window: config.window.clone(),
            done: false,
        })
    }

    pub fn header(&self) -> &VcdHeader {
        self.parser.header()
    }

    pub fn parser(&self) -> &VcdParser<R> {
        &self.parser
    }

    pub fn accumulator(&self) -> &ActivityAccumulator {
        &self.acc
    }

    fn pull(&mut self) -> Result<Option<CycleActivity>> {
        loop {
            if self.acc.next_cycle() >= self.window.end {
                return Ok(None);
            }
            if !self.parser.next_timestep_into(&mut self.batch)? {
                if self.acc.edges_seen() == 0 {
                    return Err(ExtractError::NoClockEdges);
                }
                return Ok(None);
            }
            if let Some(cycle) = self.acc.accumulate(&self.batch)? {
                if self.window.contains(&cycle.cycle_index) {
                    return Ok(Some(cycle));
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for CycleStream<R> {
    type Item = Result<CycleActivity>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.pull().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Extracts one per-cycle trace (HD or HW totals, per `config.metric`) from a
/// VCD stream in a single pass.
pub fn extract_traces<R: BufRead>(reader: R, config: &ExtractionConfig) -> Result<Vec<u64>> {
    let mut stream = CycleStream::new(reader, config)?;
    let metric = config.metric;
    let samples = stream
        .by_ref()
        .map(|c| c.map(|c| c.metric(metric)))
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        warn!(
            "window {}..{} selects no cycles ({} cycles in stream)",
            config.window.start,
            config.window.end,
            stream.accumulator().next_cycle()
        );
    }
    let stats = stream.parser().stats();
    if stats.skipped_real + stats.skipped_string > 0 {
        warn!(
            "skipped {} real and {} string value changes",
            stats.skipped_real, stats.skipped_string
        );
    }
    Ok(samples)
}

/// Splits one long extracted trace into `rows` equal-length traces.
pub fn segment(samples: &[u64], rows: usize) -> Result<TraceMatrix> {
    if rows == 0 {
        if samples.is_empty() {
            return Ok(TraceMatrix::from_counts(0, 0, Vec::new()).expect("empty shape"));
        }
        return Err(ExtractError::Segmentation {
            len: samples.len(),
            rows,
        });
    }
    if !samples.len().is_multiple_of(rows) {
        return Err(ExtractError::Segmentation {
            len: samples.len(),
            rows,
        });
    }
    let data = samples
        .iter()
        .enumerate()
        .map(|(cycle, &value)| {
            u32::try_from(value).map_err(|_| ExtractError::SampleOverflow { cycle, value })
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(TraceMatrix::from_counts(rows, samples.len() / rows, data).expect("shape checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rising edges at 10, 20, 30; `reg` changes inside cycle 1.
    const THREE_EDGES: &str = "$scope module top $end\n\
        $var wire 1 ! clk $end\n$var reg 8 \" r $end\n$upscope $end\n$enddefinitions $end\n\
        #0 $dumpvars 0! b0 \" $end\n#10 1!\n#15 0!\n#20 1!\n#25 0! b11111111 \"\n#30 1!\n#35 0!\n";

    fn run(text: &str, config: &ExtractionConfig) -> Result<Vec<u64>> {
        extract_traces(text.as_bytes(), config)
    }

    #[test]
    fn three_edges_two_cycles() {
        let cfg = ExtractionConfig::new("clk");
        assert_eq!(run(THREE_EDGES, &cfg).unwrap(), vec![0, 8]);
        let hw = cfg.clone().with_metric(Metric::Hw);
        assert_eq!(run(THREE_EDGES, &hw).unwrap(), vec![0, 8]);
    }

    #[test]
    fn edge_timestep_belongs_to_closing_cycle() {
        let text =
            THREE_EDGES.replace("#25 0! b11111111 \"\n#30 1!", "#25 0!\n#30 1! b11111111 \"");
        assert_eq!(
            run(&text, &ExtractionConfig::new("clk")).unwrap(),
            vec![0, 8]
        );
    }

    #[test]
    fn falling_edge() {
        let cfg = ExtractionConfig::new("clk").with_edge(ClockEdge::Falling);
        // falling edges at 15, 25, 35; the change at 25 closes cycle 0
        assert_eq!(run(THREE_EDGES, &cfg).unwrap(), vec![8, 0]);
    }

    #[test]
    fn window_past_end_is_empty() {
        let cfg = ExtractionConfig::new("clk").with_window(5..10);
        assert!(run(THREE_EDGES, &cfg).unwrap().is_empty());
    }

    #[test]
    fn window_clips() {
        let cfg = ExtractionConfig::new("clk").with_window(1..2);
        assert_eq!(run(THREE_EDGES, &cfg).unwrap(), vec![8]);
        let bad = ExtractionConfig::new("clk").with_window(3..3);
        assert!(matches!(
            run(THREE_EDGES, &bad),
            Err(ExtractError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn excluding_everything_gives_zeros() {
        let cfg = ExtractionConfig::new("clk").exclude("top.r").unwrap();
        assert_eq!(run(THREE_EDGES, &cfg).unwrap(), vec![0, 0]);
    }

    #[test]
    fn no_clock_edges() {
        let text = "$var wire 1 ! clk $end $enddefinitions $end #0 0! #5 0!";
        assert!(matches!(
            run(text, &ExtractionConfig::new("clk")),
            Err(ExtractError::NoClockEdges)
        ));
    }

    #[test]
    fn clock_resolution() {
        let text = "$scope module a $end $var wire 1 ! clk $end $var wire 4 # bus $end $upscope $end\n\
                    $scope module b $end $var wire 1 \" clk $end $upscope $end $enddefinitions $end";
        let p = VcdParser::new(text.as_bytes()).unwrap();
        let h = p.header();
        assert_eq!(resolve_clock(h, "a.clk").unwrap(), 0);
        assert_eq!(resolve_clock(h, "\"").unwrap(), 2);
        match resolve_clock(h, "clk") {
            Err(ExtractError::AmbiguousClock { matches, .. }) => {
                assert_eq!(matches, vec!["a.clk".to_string(), "b.clk".to_string()])
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            resolve_clock(h, "bus"),
            Err(ExtractError::ClockNotScalar { width: 4, .. })
        ));
        assert!(matches!(
            resolve_clock(h, "nope"),
            Err(ExtractError::ClockNotFound(_))
        ));
    }

    #[test]
    fn xz_policy_on_accumulate() {
        let text = "$var wire 1 ! clk $end $var wire 1 \" s $end $enddefinitions $end\n\
                    #0 0! #1 1! #2 1\" #3 0! #4 1!";
        let zero = ExtractionConfig::new("clk");
        assert_eq!(run(text, &zero).unwrap(), vec![0]);
        let flip = zero.with_xz_policy(XzPolicy::CountAsFlip);
        assert_eq!(run(text, &flip).unwrap(), vec![1]);
    }

    #[test]
    fn redundant_dump_costs_nothing() {
        let text = "$var wire 1 ! clk $end $var wire 4 \" s $end $enddefinitions $end\n\
                    #0 0! b1010 \" #1 1! #2 b1010 \" #3 0! #4 1! #5 0! b0101 \" #6 1!";
        assert_eq!(
            run(text, &ExtractionConfig::new("clk")).unwrap(),
            vec![0, 4]
        );
    }

    #[test]
    fn power_scaling() {
        let k = PowerConstants::new(1e-12, 1.2, 1e8).unwrap();
        let mut a = CycleActivity::default();
        assert_eq!(scale_to_power(&a, &k), 0.0);
        a.hd_total = 100;
        assert!((scale_to_power(&a, &k) - 1.44e-2).abs() < 1e-15);
        a.hd_total = 1;
        let unit = PowerConstants::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(scale_to_power(&a, &unit), 1.0);
        assert!(PowerConstants::new(0.0, 1.0, 1.0).is_err());
        assert!(PowerConstants::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn segmentation() {
        let m = segment(&[1, 2, 3, 4, 5, 6], 2).unwrap();
        assert_eq!((m.n_traces(), m.n_samples()), (2, 3));
        assert!(matches!(
            segment(&[1, 2, 3], 2),
            Err(ExtractError::Segmentation { .. })
        ));
        assert!(matches!(
            segment(&[u64::from(u32::MAX) + 1], 1),
            Err(ExtractError::SampleOverflow { .. })
        ));
        assert_eq!(segment(&[], 0).unwrap().n_traces(), 0);
    }
}
