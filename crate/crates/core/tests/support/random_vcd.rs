//! Random well-formed VCD text for equivalence tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

pub struct RandomVcd {
    pub text: String,
    /// Hierarchical names of each non-clock signal, aliases included.
    pub signal_names: Vec<Vec<String>>,
}

const CLOCK_ID: &str = "!";

fn id_for(n: usize) -> String {
    // skip '!' (clock); two-character ids past the first 90
    let alphabet: Vec<char> = ('"'..='~').collect();
    if n < alphabet.len() {
        alphabet[n].to_string()
    } else {
        let n = n - alphabet.len();
        format!(
            "{}{}",
            alphabet[n % alphabet.len()],
            alphabet[n / alphabet.len()]
        )
    }
}

fn random_literal(rng: &mut ChaCha8Rng, width: usize, allow_xz: bool) -> String {
    let len = if rng.random_bool(0.3) {
        rng.random_range(1..=width)
    } else {
        width
    };
    (0..len)
        .map(|_| {
            let r = rng.random_range(0..100);
            if allow_xz && r < 4 {
                'x'
            } else if allow_xz && r < 6 {
                'z'
            } else if r % 2 == 0 {
                '0'
            } else {
                '1'
            }
        })
        .collect()
}

/// At most `max_signals` signals and `max_steps` timesteps.
pub fn random_vcd(seed: u64, max_signals: usize, max_steps: usize) -> RandomVcd {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_signals);
    let widths: Vec<usize> = (0..n)
        .map(|_| {
            if rng.random_bool(0.4) {
                1
            } else {
                rng.random_range(2..=70)
            }
        })
        .collect();
    let allow_xz = rng.random_bool(0.7);

    let mut text = String::new();
    writeln!(text, "$date random {seed} $end").unwrap();
    writeln!(text, "$timescale 1ps $end").unwrap();
    writeln!(text, "$scope module top $end").unwrap();
    writeln!(text, "$var wire 1 {CLOCK_ID} clk $end").unwrap();
    let mut signal_names = Vec::new();
    for (i, w) in widths.iter().enumerate() {
        let kind = if i % 2 == 0 { "wire" } else { "reg" };
        writeln!(text, "$var {kind} {w} {} s{i} $end", id_for(i)).unwrap();
        signal_names.push(vec![format!("top.s{i}")]);
    }
    writeln!(text, "$scope module inner $end").unwrap();
    for i in 0..n {
        if rng.random_bool(0.2) {
            writeln!(text, "$var wire {} {} alias{i} $end", widths[i], id_for(i)).unwrap();
            signal_names[i].push(format!("top.inner.alias{i}"));
        }
    }
    writeln!(text, "$upscope $end").unwrap();
    writeln!(text, "$upscope $end").unwrap();
    writeln!(text, "$enddefinitions $end").unwrap();

    let dump_initial = rng.random_bool(0.8);
    if dump_initial {
        writeln!(text, "#0").unwrap();
        writeln!(text, "$dumpvars").unwrap();
        writeln!(text, "0{CLOCK_ID}").unwrap();
        for (i, &w) in widths.iter().enumerate() {
            if w == 1 {
                writeln!(
                    text,
                    "{}{}",
                    random_literal(&mut rng, 1, allow_xz),
                    id_for(i)
                )
                .unwrap();
            } else {
                writeln!(
                    text,
                    "b{} {}",
                    random_literal(&mut rng, w, allow_xz),
                    id_for(i)
                )
                .unwrap();
            }
        }
        writeln!(text, "$end").unwrap();
    }

    let steps = rng.random_range(1..=max_steps);
    let mut time = if dump_initial {
        0
    } else {
        rng.random_range(0..3)
    };
    let mut clk = 0;
    for _ in 0..steps {
        time += rng.random_range(1..=3);
        writeln!(text, "#{time}").unwrap();
        if rng.random_bool(0.5) {
            clk ^= 1;
            writeln!(text, "{clk}{CLOCK_ID}").unwrap();
        }
        if rng.random_bool(0.05) {
            writeln!(text, "$comment noise $end").unwrap();
        }
        let changes = rng.random_range(0..=n.min(6));
        for _ in 0..changes {
            let i = rng.random_range(0..n);
            let w = widths[i];
            if w == 1 || rng.random_bool(0.05) {
                writeln!(
                    text,
                    "{}{}",
                    random_literal(&mut rng, 1, allow_xz),
                    id_for(i)
                )
                .unwrap();
            } else {
                writeln!(
                    text,
                    "b{} {}",
                    random_literal(&mut rng, w, allow_xz),
                    id_for(i)
                )
                .unwrap();
            }
        }
    }
    RandomVcd { text, signal_names }
}
