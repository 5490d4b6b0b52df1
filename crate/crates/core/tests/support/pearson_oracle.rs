//! Textbook two-pass Pearson correlation.

#![allow(dead_code)]

/// `None` when either column has zero variance.
pub fn two_pass(h: &[f64], t: &[f64]) -> Option<f64> {
    let n = h.len() as f64;
    let mh = h.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dh = 0.0;
    let mut dt = 0.0;
    for (x, y) in h.iter().zip(t) {
        num += (x - mh) * (y - mt);
        dh += (x - mh) * (x - mh);
        dt += (y - mt) * (y - mt);
    }
    if dh == 0.0 || dt == 0.0 {
        None
    } else {
        Some(num / (dh.sqrt() * dt.sqrt()))
    }
}
