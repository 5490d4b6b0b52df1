//! Single-pass streaming parser for IEEE-1364 Value Change Dump text.
//!
//! The header is parsed eagerly; the body is then pulled one `#<time>` section
//! at a time with [`VcdParser::next_timestep`]. Nothing beyond the signal table,
//! one token and the current batch is retained, so files of any size parse in
//! memory proportional to the number of signals.
//!
//! Supported commands: `$date $version $timescale $scope $upscope $var
//! $enddefinitions $comment $dumpvars $dumpall $dumpon $dumpoff`. Anything else
//! is an error.

mod ident;
mod logic;
mod tokens;

use std::fmt;
use std::io::BufRead;

use thiserror::Error;

pub use ident::{decode_base94, IdLookup};
use logic::{decode_binary, last_word_mask, words_for};
pub use logic::{Logic, LogicRef, LogicVec, XzPolicy};
use tokens::Tokenizer;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum VcdError {
    #[error("I/O error while reading VCD")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: u64, message: String },
    #[error("line {line}: unsupported command `{command}`")]
    UnknownCommand { line: u64, command: String },
    #[error("truncated header: `$enddefinitions` not found")]
    TruncatedHeader,
    #[error("line {line}: identifier `{id}` declared with width {first} and {second}")]
    AliasWidthMismatch {
        line: u64,
        id: String,
        first: u32,
        second: u32,
    },
    #[error("line {line}: value `{literal}` has {len} bits but `{id}` is {width} bits wide")]
    VectorTooWide {
        line: u64,
        id: String,
        literal: String,
        len: usize,
        width: u32,
    },
    #[error("line {line}: unknown identifier code `{id}`")]
    UnknownId { line: u64, id: String },
    #[error("line {line}: time {found} is before {previous}")]
    NonMonotonicTime {
        line: u64,
        previous: u64,
        found: u64,
    },
}

pub type Result<T> = std::result::Result<T, VcdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Wire,
    Reg,
    Other,
}

/// One `$var` declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalDecl {
    pub id_code: String,
    pub width: u32,
    /// Dot-joined scope path and reference name, e.g. `top.cpu.clk`.
    pub hier_name: String,
    pub kind: VarKind,
    /// Dense index of the signal this declaration refers to. Declarations that
    /// share an identifier code share an index.
    pub index: usize,
}

impl SignalDecl {
    /// Reference name without the scope path.
    pub fn name(&self) -> &str {
        self.hier_name.rsplit('.').next().unwrap_or(&self.hier_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    S,
    Ms,
    Us,
    Ns,
    Ps,
    Fs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timescale {
    pub magnitude: u32,
    pub unit: TimeUnit,
}

impl fmt::Display for Timescale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = match self.unit {
            TimeUnit::S => "s",
            TimeUnit::Ms => "ms",
            TimeUnit::Us => "us",
            TimeUnit::Ns => "ns",
            TimeUnit::Ps => "ps",
            TimeUnit::Fs => "fs",
        };
        write!(f, "{}{}", self.magnitude, unit)
    }
}

fn parse_timescale(text: &str) -> Option<Timescale> {
    let text = text.trim();
    let split = text.find(|c: char| !c.is_ascii_digit())?;
    let magnitude: u32 = text[..split].parse().ok()?;
    if ![1, 10, 100].contains(&magnitude) {
        return None;
    }
    let unit = match text[split..].trim() {
        "s" => TimeUnit::S,
        "ms" => TimeUnit::Ms,
        "us" => TimeUnit::Us,
        "ns" => TimeUnit::Ns,
        "ps" => TimeUnit::Ps,
        "fs" => TimeUnit::Fs,
        _ => return None,
    };
    Some(Timescale { magnitude, unit })
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Glob patterns matched case-insensitively against reference names to
    /// propose clock candidates.
    pub clock_patterns: Vec<glob::Pattern>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            clock_patterns: ["*clk*", "*clock*"]
                .iter()
                .map(|p| glob::Pattern::new(p).expect("static pattern"))
                .collect(),
        }
    }
}

/// Everything declared before `$enddefinitions`.
#[derive(Debug, Clone)]
pub struct VcdHeader {
    pub signals: Vec<SignalDecl>,
    pub timescale: Option<Timescale>,
    /// Indices into `signals` of width-1 declarations whose name looks like a clock.
    pub clock_candidates: Vec<usize>,
    widths: Vec<u32>,
}

impl VcdHeader {
    /// Number of distinct signals (identifier codes).
    pub fn signal_count(&self) -> usize {
        self.widths.len()
    }

    pub fn width_of(&self, index: usize) -> u32 {
        self.widths[index]
    }

    pub fn widths(&self) -> &[u32] {
        &self.widths
    }

    /// Declarations referring to signal `index`.
    pub fn aliases(&self, index: usize) -> impl Iterator<Item = &SignalDecl> {
        self.signals.iter().filter(move |d| d.index == index)
    }

    pub fn total_width(&self) -> u64 {
        self.widths.iter().map(|&w| w as u64).sum()
    }
}

/// Current value of every signal, indexed by dense signal index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalState {
    widths: Vec<u32>,
    offsets: Vec<usize>,
    value: Vec<u64>,
    xz: Vec<u64>,
}

impl SignalState {
    pub fn all_x(widths: &[u32]) -> Self {
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for &w in widths {
            offsets.push(total);
            total += words_for(w);
        }
        let mut xz = vec![u64::MAX; total];
        for (&w, &off) in widths.iter().zip(&offsets) {
            xz[off + words_for(w) - 1] &= last_word_mask(w);
        }
        Self {
            widths: widths.to_vec(),
            offsets,
            value: vec![0; total],
            xz,
        }
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn get(&self, index: usize) -> LogicRef<'_> {
        let w = self.widths[index];
        let off = self.offsets[index];
        let n = words_for(w);
        LogicRef {
            width: w,
            value: &self.value[off..off + n],
            xz: &self.xz[off..off + n],
        }
    }

    pub fn set(&mut self, index: usize, v: LogicRef<'_>) {
        assert_eq!(
            v.width, self.widths[index],
            "width mismatch for signal {index}"
        );
        let off = self.offsets[index];
        let n = v.value.len();
        self.value[off..off + n].copy_from_slice(v.value);
        self.xz[off..off + n].copy_from_slice(v.xz);
    }

    pub fn apply(&mut self, batch: &TimestepBatch) {
        for (index, v) in batch.iter() {
            self.set(index, v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Change {
    signal: u32,
    width: u32,
    offset: u32,
}

/// Value changes of one `#<time>` section. At most one change per signal; a
/// repeated change within the section overwrites the earlier one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimestepBatch {
    pub time: u64,
    changes: Vec<Change>,
    value: Vec<u64>,
    xz: Vec<u64>,
}

impl TimestepBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, LogicRef<'_>)> + '_ {
        self.changes.iter().map(move |c| {
            let off = c.offset as usize;
            let n = words_for(c.width);
            (
                c.signal as usize,
                LogicRef {
                    width: c.width,
                    value: &self.value[off..off + n],
                    xz: &self.xz[off..off + n],
                },
            )
        })
    }

    /// Owned copy of the changes, for comparisons in tests and tools.
    pub fn to_changes(&self) -> Vec<(usize, LogicVec)> {
        self.iter().map(|(i, v)| (i, v.to_owned())).collect()
    }

    fn clear(&mut self) {
        self.changes.clear();
        self.value.clear();
        self.xz.clear();
    }

    /// Returns storage for a fresh change (zeroed planes) and its change slot.
    fn push(&mut self, signal: u32, width: u32) -> usize {
        let offset = self.value.len();
        let n = words_for(width);
        self.value.resize(offset + n, 0);
        self.xz.resize(offset + n, 0);
        self.changes.push(Change {
            signal,
            width,
            offset: offset as u32,
        });
        self.changes.len() - 1
    }

    fn planes_mut(&mut self, slot: usize) -> (&mut [u64], &mut [u64]) {
        let c = self.changes[slot];
        let off = c.offset as usize;
        let n = words_for(c.width);
        (&mut self.value[off..off + n], &mut self.xz[off..off + n])
    }
}

/// Counters for value changes the parser accepted but did not decode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub batches: u64,
    pub skipped_real: u64,
    pub skipped_string: u64,
}

/// Parses the header of a VCD stream and returns a parser positioned at the
/// first value-change section.
pub fn parse_header<R: BufRead>(reader: R) -> Result<VcdParser<R>> {
    VcdParser::with_options(reader, &ParseOptions::default())
}

pub struct VcdParser<R> {
    tokens: Tokenizer<R>,
    header: VcdHeader,
    lookup: IdLookup,
    /// Time of the section being read, once its `#` marker (or a change) was seen.
    section_time: Option<u64>,
    last_emitted: Option<u64>,
    /// Per-signal batch slot, valid when the matching stamp equals `generation`.
    slot_of: Vec<u32>,
    stamp: Vec<u32>,
    generation: u32,
    pending_value: Vec<u8>,
    finished: bool,
    stats: ParseStats,
}

impl<R: BufRead> VcdParser<R> {
    pub fn new(reader: R) -> Result<Self> {
        Self::with_options(reader, &ParseOptions::default())
    }

    pub fn with_options(reader: R, options: &ParseOptions) -> Result<Self> {
        let mut tokens = Tokenizer::new(reader);
        let (header, lookup) = read_header(&mut tokens, options)?;
        let n = header.signal_count();
        Ok(Self {
            tokens,
            header,
            lookup,
            section_time: None,
            last_emitted: None,
            slot_of: vec![0; n],
            stamp: vec![0; n],
            generation: 0,
            pending_value: Vec::new(),
            finished: false,
            stats: ParseStats::default(),
        })
    }

    pub fn header(&self) -> &VcdHeader {
        &self.header
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    /// Bytes held by the parser's growable buffers; stays bounded by the
    /// longest token regardless of input size.
    pub fn retained_buffer_bytes(&self) -> usize {
        self.tokens.buffer_capacity() + self.pending_value.capacity()
    }

    pub fn next_timestep(&mut self) -> Result<Option<TimestepBatch>> {
        let mut batch = TimestepBatch::new();
        Ok(self.next_timestep_into(&mut batch)?.then_some(batch))
    }

    /// Reads the next section into `batch`, reusing its storage. Returns
    /// `false` once the stream is exhausted.
    pub fn next_timestep_into(&mut self, batch: &mut TimestepBatch) -> Result<bool> {
        batch.clear();
        if self.finished {
            return Ok(false);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
        loop {
            if !self.tokens.advance()? {
                self.finished = true;
                return Ok(self.emit(batch));
            }
            let first = self.tokens.token()[0];
            match first {
                b'#' => {
                    let line = self.tokens.token_line();
                    let t =
                        parse_u64(&self.tokens.token()[1..]).ok_or_else(|| VcdError::Syntax {
                            line,
                            message: format!("invalid timestamp `{}`", self.tokens.token_str()),
                        })?;
                    match self.section_time {
                        None => {
                            self.check_monotonic(t, line)?;
                            self.section_time = Some(t);
                        }
                        Some(cur) if t == cur => {}
                        Some(cur) if t < cur => {
                            return Err(VcdError::NonMonotonicTime {
                                line,
                                previous: cur,
                                found: t,
                            })
                        }
                        Some(_) => {
                            self.emit(batch);
                            self.section_time = Some(t);
                            return Ok(true);
                        }
                    }
                }
                b'$' => match self.tokens.token() {
                    b"$dumpvars" | b"$dumpall" | b"$dumpon" | b"$dumpoff" | b"$end" => {}
                    b"$comment" => self.skip_to_end()?,
                    _ => {
                        return Err(VcdError::UnknownCommand {
                            line: self.tokens.token_line(),
                            command: self.tokens.token_str(),
                        })
                    }
                },
                b'0' | b'1' | b'x' | b'X' | b'z' | b'Z' => {
                    self.open_section()?;
                    let (digit, id) = self.tokens.token().split_at(1);
                    let mut sink = ChangeSink {
                        lookup: &self.lookup,
                        widths: &self.header.widths,
                        stamp: &mut self.stamp,
                        slot_of: &mut self.slot_of,
                        generation: self.generation,
                        line: self.tokens.token_line(),
                    };
                    sink.record(batch, digit, id)?;
                }
                b'b' | b'B' => {
                    self.open_section()?;
                    self.pending_value.clear();
                    self.pending_value
                        .extend_from_slice(&self.tokens.token()[1..]);
                    self.expect_id()?;
                    let mut sink = ChangeSink {
                        lookup: &self.lookup,
                        widths: &self.header.widths,
                        stamp: &mut self.stamp,
                        slot_of: &mut self.slot_of,
                        generation: self.generation,
                        line: self.tokens.token_line(),
                    };
                    sink.record(batch, &self.pending_value, self.tokens.token())?;
                }
                b'r' | b'R' | b's' | b'S' => {
                    self.open_section()?;
                    if matches!(first, b'r' | b'R') {
                        self.stats.skipped_real += 1;
                    } else {
                        self.stats.skipped_string += 1;
                    }
                    self.expect_id()?;
                    if self.lookup.get(self.tokens.token()).is_none() {
                        return Err(VcdError::UnknownId {
                            line: self.tokens.token_line(),
                            id: self.tokens.token_str(),
                        });
                    }
                }
                _ => {
                    return Err(VcdError::Syntax {
                        line: self.tokens.token_line(),
                        message: format!("unexpected token `{}`", self.tokens.token_str()),
                    })
                }
            }
        }
    }

    fn check_monotonic(&self, t: u64, line: u64) -> Result<()> {
        match self.last_emitted {
            Some(prev) if t <= prev => Err(VcdError::NonMonotonicTime {
                line,
                previous: prev,
                found: t,
            }),
            _ => Ok(()),
        }
    }

    /// Value changes before any `#` marker belong to time 0.
    fn open_section(&mut self) -> Result<()> {
        if self.section_time.is_none() {
            self.check_monotonic(0, self.tokens.token_line())?;
            self.section_time = Some(0);
        }
        Ok(())
    }

    fn emit(&mut self, batch: &mut TimestepBatch) -> bool {
        match self.section_time.take() {
            Some(t) => {
                batch.time = t;
                self.last_emitted = Some(t);
                self.stats.batches += 1;
                true
            }
            None => false,
        }
    }

    fn expect_id(&mut self) -> Result<()> {
        let line = self.tokens.token_line();
        if !self.tokens.advance()? {
            return Err(VcdError::Syntax {
                line,
                message: "value without identifier at end of input".into(),
            });
        }
        Ok(())
    }

    fn skip_to_end(&mut self) -> Result<()> {
        let line = self.tokens.token_line();
        while self.tokens.advance()? {
            if self.tokens.token() == b"$end" {
                return Ok(());
            }
        }
        Err(VcdError::Syntax {
            line,
            message: "unterminated `$comment`".into(),
        })
    }
}

/// Disjoint borrow of the parser state needed to store one value change.
struct ChangeSink<'a> {
    lookup: &'a IdLookup,
    widths: &'a [u32],
    stamp: &'a mut [u32],
    slot_of: &'a mut [u32],
    generation: u32,
    line: u64,
}

impl ChangeSink<'_> {
    fn record(&mut self, batch: &mut TimestepBatch, digits: &[u8], id: &[u8]) -> Result<()> {
        let line = self.line;
        let signal = self.lookup.get(id).ok_or_else(|| VcdError::UnknownId {
            line,
            id: String::from_utf8_lossy(id).into_owned(),
        })?;
        let s = signal as usize;
        let width = self.widths[s];
        if digits.is_empty() {
            return Err(VcdError::Syntax {
                line,
                message: "empty vector literal".into(),
            });
        }
        if digits.len() > width as usize {
            return Err(VcdError::VectorTooWide {
                line,
                id: String::from_utf8_lossy(id).into_owned(),
                literal: String::from_utf8_lossy(digits).into_owned(),
                len: digits.len(),
                width,
            });
        }
        let slot = if self.stamp[s] == self.generation {
            self.slot_of[s] as usize
        } else {
            let slot = batch.push(signal, width);
            self.stamp[s] = self.generation;
            self.slot_of[s] = slot as u32;
            slot
        };
        let (value, xz) = batch.planes_mut(slot);
        decode_binary(digits, width, value, xz).ok_or_else(|| VcdError::Syntax {
            line,
            message: format!("invalid value digits `{}`", String::from_utf8_lossy(digits)),
        })
    }
}

impl<R: BufRead> Iterator for VcdParser<R> {
    type Item = Result<TimestepBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_timestep().transpose()
    }
}

fn parse_u64(digits: &[u8]) -> Option<u64> {
    if digits.is_empty() {
        return None;
    }
    digits.iter().try_fold(0u64, |acc, &d| {
        if d.is_ascii_digit() {
            acc.checked_mul(10)?.checked_add((d - b'0') as u64)
        } else {
            None
        }
    })
}

fn read_header<R: BufRead>(
    tokens: &mut Tokenizer<R>,
    options: &ParseOptions,
) -> Result<(VcdHeader, IdLookup)> {
    let mut scopes: Vec<String> = Vec::new();
    let mut signals: Vec<SignalDecl> = Vec::new();
    let mut timescale = None;
    // identifier -> dense index while the header is open
    let mut ids: std::collections::HashMap<Vec<u8>, usize> = Default::default();
    let mut widths: Vec<u32> = Vec::new();

    let syntax = |line: u64, message: String| VcdError::Syntax { line, message };

    loop {
        if !tokens.advance()? {
            return Err(VcdError::TruncatedHeader);
        }
        let line = tokens.token_line();
        let command = tokens.token().to_vec();
        // arguments up to `$end`
        let collect_args = |tokens: &mut Tokenizer<R>| -> Result<Vec<String>> {
            let mut out = Vec::new();
            loop {
                if !tokens.advance()? {
                    return Err(VcdError::TruncatedHeader);
                }
                if tokens.token() == b"$end" {
                    return Ok(out);
                }
                out.push(tokens.token_str());
            }
        };
        match command.as_slice() {
            b"$date" | b"$version" | b"$comment" => {
                collect_args(tokens)?;
            }
            b"$timescale" => {
                let joined = collect_args(tokens)?.concat();
                timescale = Some(
                    parse_timescale(&joined)
                        .ok_or_else(|| syntax(line, format!("invalid timescale `{joined}`")))?,
                );
            }
            b"$scope" => {
                let args = collect_args(tokens)?;
                match args.as_slice() {
                    [_kind, name] => scopes.push(name.clone()),
                    _ => return Err(syntax(line, format!("malformed $scope: {args:?}"))),
                }
            }
            b"$upscope" => {
                collect_args(tokens)?;
                if scopes.pop().is_none() {
                    return Err(syntax(line, "$upscope without open $scope".into()));
                }
            }
            b"$var" => {
                let args = collect_args(tokens)?;
                if args.len() < 4 {
                    return Err(syntax(line, format!("malformed $var: {args:?}")));
                }
                let kind = match args[0].as_str() {
                    "wire" => VarKind::Wire,
                    "reg" => VarKind::Reg,
                    _ => VarKind::Other,
                };
                let width: u32 = args[1]
                    .parse()
                    .ok()
                    .filter(|&w| w >= 1)
                    .ok_or_else(|| syntax(line, format!("invalid width `{}`", args[1])))?;
                let id = args[2].clone();
                let mut hier_name = scopes.join(".");
                if !hier_name.is_empty() {
                    hier_name.push('.');
                }
                hier_name.push_str(&args[3]);
                let index = match ids.get(id.as_bytes()) {
                    Some(&index) => {
                        if widths[index] != width {
                            return Err(VcdError::AliasWidthMismatch {
                                line,
                                id,
                                first: widths[index],
                                second: width,
                            });
                        }
                        index
                    }
                    None => {
                        widths.push(width);
                        ids.insert(id.as_bytes().to_vec(), widths.len() - 1);
                        widths.len() - 1
                    }
                };
                signals.push(SignalDecl {
                    id_code: id,
                    width,
                    hier_name,
                    kind,
                    index,
                });
            }
            b"$enddefinitions" => {
                collect_args(tokens)?;
                break;
            }
            _ => {
                let shown = String::from_utf8_lossy(&command).into_owned();
                if command.first() == Some(&b'$') {
                    return Err(VcdError::UnknownCommand {
                        line,
                        command: shown,
                    });
                }
                return Err(syntax(
                    line,
                    format!("expected a declaration command, found `{shown}`"),
                ));
            }
        }
    }

    let clock_candidates = signals
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            let name = d.name().to_ascii_lowercase();
            d.width == 1 && options.clock_patterns.iter().any(|p| p.matches(&name))
        })
        .map(|(i, _)| i)
        .collect();
    let lookup = IdLookup::build(ids.iter().map(|(k, &v)| (k.as_slice(), v as u32)));
    Ok((
        VcdHeader {
            signals,
            timescale,
            clock_candidates,
            widths,
        },
        lookup,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parser(text: &str) -> VcdParser<std::io::Cursor<Vec<u8>>> {
        VcdParser::new(std::io::Cursor::new(text.as_bytes().to_vec())).unwrap()
    }

    const HEADER: &str = "$date today $end\n$timescale 1ns $end\n\
        $scope module top $end\n$var wire 1 ! clk $end\n$var reg 3 \" data $end\n\
        $var wire 4 # bus [3:0] $end\n$upscope $end\n$enddefinitions $end\n";

    #[test]
    fn header_declarations() {
        let p = parser(HEADER);
        let h = p.header();
        assert_eq!(h.signals.len(), 3);
        assert_eq!(
            h.signals[0],
            SignalDecl {
                id_code: "!".into(),
                width: 1,
                hier_name: "top.clk".into(),
                kind: VarKind::Wire,
                index: 0,
            }
        );
        assert_eq!(h.signals[2].hier_name, "top.bus");
        assert_eq!(
            h.timescale,
            Some(Timescale {
                magnitude: 1,
                unit: TimeUnit::Ns
            })
        );
        assert_eq!(h.clock_candidates, vec![0]);
    }

    #[test]
    fn empty_scope() {
        let p = parser("$scope module top $end $upscope $end $enddefinitions $end");
        assert!(p.header().signals.is_empty());
        assert_eq!(p.header().signal_count(), 0);
    }

    #[test]
    fn aliased_ids_share_a_slot() {
        let p = parser(
            "$scope module a $end $var wire 1 ! clk $end $upscope $end\n\
             $scope module b $end $var wire 1 ! clk_in $end $upscope $end\n\
             $enddefinitions $end",
        );
        let h = p.header();
        assert_eq!(h.signals.len(), 2);
        assert_eq!(h.signal_count(), 1);
        assert_eq!(h.signals[0].index, h.signals[1].index);
        assert_eq!(h.aliases(0).count(), 2);
    }

    #[test]
    fn alias_width_mismatch() {
        let err = VcdParser::new(
            "$var wire 1 ! a $end $var wire 2 ! b $end $enddefinitions $end".as_bytes(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, VcdError::AliasWidthMismatch { .. }));
    }

    #[test]
    fn malformed_keyword_reports_line() {
        let err = VcdParser::new("$date x $end\n\n$bogus $end\n".as_bytes())
            .err()
            .unwrap();
        match err {
            VcdError::UnknownCommand { line, command } => {
                assert_eq!(line, 3);
                assert_eq!(command, "$bogus");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_enddefinitions() {
        let err = VcdParser::new("$var wire 1 ! clk $end\n".as_bytes())
            .err()
            .unwrap();
        assert!(matches!(err, VcdError::TruncatedHeader));
    }

    #[test]
    fn scalar_and_vector_changes() {
        let mut p = parser(&format!("{HEADER}#10\n1!\nb101 \"\n#20\n"));
        let b = p.next_timestep().unwrap().unwrap();
        assert_eq!(b.time, 10);
        let changes = b.to_changes();
        assert_eq!(changes.len(), 2);
        assert_eq!(changes[0].0, 0);
        assert_eq!(changes[0].1.as_ref().to_u64(), Some(1));
        assert_eq!(changes[1].0, 1);
        assert_eq!(changes[1].1.as_ref().to_u64(), Some(0b101));
        let empty = p.next_timestep().unwrap().unwrap();
        assert_eq!(empty.time, 20);
        assert!(empty.is_empty());
        assert!(p.next_timestep().unwrap().is_none());
    }

    #[test]
    fn four_state_vector() {
        let mut p = parser(&format!("{HEADER}#0 bxxz1 #"));
        let b = p.next_timestep().unwrap().unwrap();
        let (_, v) = b.iter().next().unwrap();
        assert_eq!(v.to_bits(), vec![Logic::X, Logic::X, Logic::Z, Logic::One]);
    }

    #[test]
    fn case_insensitive_literals() {
        let mut p = parser(&format!("{HEADER}#0 BXXZ1 # X!"));
        let b = p.next_timestep().unwrap().unwrap();
        let c = b.to_changes();
        assert_eq!(
            c[0].1.as_ref().to_bits(),
            vec![Logic::X, Logic::X, Logic::Z, Logic::One]
        );
        assert_eq!(c[1].1.as_ref().to_bits(), vec![Logic::X]);
    }

    #[test]
    fn last_write_wins_within_section() {
        let mut p = parser(&format!("{HEADER}#5 1! b1 \" 0! b11 \""));
        let b = p.next_timestep().unwrap().unwrap();
        let c = b.to_changes();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].1.as_ref().to_u64(), Some(0));
        assert_eq!(c[1].1.as_ref().to_u64(), Some(3));
    }

    #[test]
    fn dumpvars_before_first_timestamp_is_time_zero() {
        let mut p = parser(&format!("{HEADER}$dumpvars 0! b000 \" $end #0 1! #3 0!"));
        let b = p.next_timestep().unwrap().unwrap();
        assert_eq!(b.time, 0);
        assert_eq!(b.len(), 2);
        assert_eq!(b.to_changes()[0].1.as_ref().to_u64(), Some(1));
        assert_eq!(p.next_timestep().unwrap().unwrap().time, 3);
    }

    #[test]
    fn repeated_timestamp_merges() {
        let mut p = parser(&format!("{HEADER}#4 1! #4 b1 \" #6"));
        let b = p.next_timestep().unwrap().unwrap();
        assert_eq!((b.time, b.len()), (4, 2));
    }

    #[test]
    fn errors_in_body() {
        let too_wide = parser(&format!("{HEADER}#0 b1010 \"")).next_timestep();
        assert!(matches!(
            too_wide,
            Err(VcdError::VectorTooWide {
                len: 4,
                width: 3,
                ..
            })
        ));

        let unknown = parser(&format!("{HEADER}#0 1?")).next_timestep();
        match unknown {
            Err(VcdError::UnknownId { id, .. }) => assert_eq!(id, "?"),
            other => panic!("unexpected {other:?}"),
        }

        let mut p = parser(&format!("{HEADER}#10 1! #5 0!"));
        assert!(matches!(
            p.next_timestep(),
            Err(VcdError::NonMonotonicTime {
                previous: 10,
                found: 5,
                ..
            })
        ));

        let cmd = parser(&format!("{HEADER}#0 $attrbegin")).next_timestep();
        assert!(matches!(cmd, Err(VcdError::UnknownCommand { .. })));
    }

    #[test]
    fn real_and_string_changes_are_skipped_and_counted() {
        let mut p = parser(&format!("{HEADER}#0 r1.5 # shello ! 1!"));
        let b = p.next_timestep().unwrap().unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(p.stats().skipped_real, 1);
        assert_eq!(p.stats().skipped_string, 1);
    }

    #[test]
    fn comments_in_body() {
        let mut p = parser(&format!("{HEADER}#0 $comment b1 x $end 1!"));
        assert_eq!(p.next_timestep().unwrap().unwrap().len(), 1);
    }

    #[test]
    fn dumpoff_block_applies_x() {
        let mut p = parser(&format!("{HEADER}#0 1! #8 $dumpoff x! bx \" $end"));
        let mut state = SignalState::all_x(p.header().widths());
        for b in p.by_ref() {
            state.apply(&b.unwrap());
        }
        assert_eq!(state.get(0).to_bits(), vec![Logic::X]);
        assert_eq!(state.get(1).to_bits(), vec![Logic::X; 3]);
    }

    #[test]
    fn state_starts_all_x() {
        let s = SignalState::all_x(&[1, 70]);
        assert_eq!(s.get(1).to_bits(), vec![Logic::X; 70]);
        assert_eq!(s.get(1).hamming_weight(), 0);
    }
}
