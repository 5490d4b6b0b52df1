//! Brute-force reference for switching-activity extraction.
//!
//! Loads the whole VCD text, records the full four-state value of every signal
//! after every timestep as characters, and only then diffs consecutive states.
//! Deliberately shares no code with the streaming parser.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

pub struct OracleConfig<'a> {
    /// Exact hierarchical name of the clock.
    pub clock: &'a str,
    pub rising: bool,
    pub count_xz_as_flip: bool,
    pub window: (u64, u64),
    /// Exact hierarchical names that are not measured.
    pub excluded: &'a [&'a str],
}

impl<'a> OracleConfig<'a> {
    pub fn new(clock: &'a str) -> Self {
        Self {
            clock,
            rising: true,
            count_xz_as_flip: false,
            window: (0, u64::MAX),
            excluded: &[],
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct OracleTraces {
    pub edges: u64,
    pub hd: Vec<u64>,
    pub hw: Vec<u64>,
}

struct Var {
    width: usize,
    names: Vec<String>,
}

type Sections = Vec<(u64, Vec<(String, String)>)>;

/// Parses everything up front: declarations, then a time-ordered list of
/// (time, changes) with later writes in a section overriding earlier ones.
fn load(text: &str) -> (BTreeMap<String, Var>, Sections) {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut vars: BTreeMap<String, Var> = BTreeMap::new();
    let mut scope: Vec<String> = Vec::new();
    let mut i = 0;
    loop {
        let t = toks[i];
        i += 1;
        let mut args = Vec::new();
        while toks[i] != "$end" {
            args.push(toks[i]);
            i += 1;
        }
        i += 1;
        match t {
            "$scope" => scope.push(args[1].to_string()),
            "$upscope" => {
                scope.pop();
            }
            "$var" => {
                let mut name = scope.join(".");
                if !name.is_empty() {
                    name.push('.');
                }
                name.push_str(args[3]);
                vars.entry(args[2].to_string())
                    .or_insert(Var {
                        width: args[1].parse().unwrap(),
                        names: Vec::new(),
                    })
                    .names
                    .push(name);
            }
            "$enddefinitions" => break,
            _ => {}
        }
    }

    let mut sections: Sections = Vec::new();
    let mut current: Option<(u64, Vec<(String, String)>)> = None;
    let mut in_comment = false;
    while i < toks.len() {
        let t = toks[i];
        i += 1;
        if in_comment {
            in_comment = t != "$end";
            continue;
        }
        if t == "$comment" {
            in_comment = true;
            continue;
        }
        if t.starts_with('$') {
            continue;
        }
        if let Some(time) = t.strip_prefix('#') {
            let time: u64 = time.parse().unwrap();
            match &current {
                Some((cur, _)) if *cur == time => {}
                _ => {
                    if let Some(done) = current.take() {
                        sections.push(done);
                    }
                    current = Some((time, Vec::new()));
                }
            }
            continue;
        }
        let (value, id) = match t.as_bytes()[0] {
            b'b' | b'B' => {
                let id = toks[i];
                i += 1;
                (t[1..].to_lowercase(), id.to_string())
            }
            b'r' | b'R' | b's' | b'S' => {
                i += 1;
                continue;
            }
            _ => (t[..1].to_lowercase(), t[1..].to_string()),
        };
        let section = current.get_or_insert_with(|| (0, Vec::new()));
        section.1.push((id, value));
    }
    if let Some(done) = current.take() {
        sections.push(done);
    }
    (vars, sections)
}

/// Left-extends a literal to `width` characters, MSB first.
fn extend(lit: &str, width: usize) -> String {
    let pad = match lit.chars().next().unwrap() {
        'x' => 'x',
        'z' => 'z',
        _ => '0',
    };
    let mut s: String = std::iter::repeat_n(pad, width - lit.len()).collect();
    s.push_str(lit);
    s
}

fn bit_flips(a: &str, b: &str, count_xz: bool) -> u64 {
    a.chars()
        .zip(b.chars())
        .filter(|(x, y)| {
            let known = matches!(x, '0' | '1') && matches!(y, '0' | '1');
            if count_xz {
                x != y
            } else {
                known && x != y
            }
        })
        .count() as u64
}

pub fn oracle_traces(text: &str, cfg: &OracleConfig<'_>) -> OracleTraces {
    let (vars, sections) = load(text);
    let clock_id = vars
        .iter()
        .find(|(_, v)| v.names.iter().any(|n| n == cfg.clock))
        .map(|(id, _)| id.clone())
        .expect("clock declared");
    let measured: Vec<&String> = vars
        .iter()
        .filter(|(id, v)| {
            **id != clock_id && v.names.iter().any(|n| !cfg.excluded.contains(&n.as_str()))
        })
        .map(|(id, _)| id)
        .collect();

    // Pass 1: full state history.
    let mut state: HashMap<String, String> = vars
        .iter()
        .map(|(id, v)| (id.clone(), "x".repeat(v.width)))
        .collect();
    let mut history: Vec<HashMap<String, String>> = vec![state.clone()];
    for (_, changes) in &sections {
        for (id, lit) in changes {
            let w = vars[id].width;
            state.insert(id.clone(), extend(lit, w));
        }
        history.push(state.clone());
    }

    // Pass 2: diff consecutive states.
    let (edge_from, edge_to) = if cfg.rising { ("0", "1") } else { ("1", "0") };
    let mut hd = Vec::new();
    let mut hw = Vec::new();
    let mut open: Option<u64> = None;
    let mut edges = 0;
    for k in 1..history.len() {
        let (before, after) = (&history[k - 1], &history[k]);
        let flips: u64 = measured
            .iter()
            .map(|id| bit_flips(&before[*id], &after[*id], cfg.count_xz_as_flip))
            .sum();
        if let Some(acc) = open.as_mut() {
            *acc += flips;
        }
        if before[&clock_id] == edge_from && after[&clock_id] == edge_to {
            edges += 1;
            if let Some(acc) = open.take() {
                let weight: u64 = measured
                    .iter()
                    .map(|id| after[*id].chars().filter(|&c| c == '1').count() as u64)
                    .sum();
                hd.push(acc);
                hw.push(weight);
            }
            open = Some(0);
        }
    }
    let (lo, hi) = cfg.window;
    let clip = |v: Vec<u64>| -> Vec<u64> {
        v.into_iter()
            .enumerate()
            .filter(|(i, _)| (*i as u64) >= lo && (*i as u64) < hi)
            .map(|(_, x)| x)
            .collect()
    };
    OracleTraces {
        edges,
        hd: clip(hd),
        hw: clip(hw),
    }
}
