//! In-memory trace matrix: `n_traces` rows of `n_samples` per-cycle samples.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("buffer holds {len} samples, expected {n_traces} x {n_samples}")]
    BufferLength {
        len: usize,
        n_traces: usize,
        n_samples: usize,
    },
    #[error("row {row} has {len} samples, expected {expected}")]
    RowLength {
        row: usize,
        len: usize,
        expected: usize,
    },
}

/// Sample storage. Switching-activity counts stay integral end to end; only the
/// CPA engine converts them to floating point.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Counts(Vec<u32>),
    Real(Vec<f64>),
}

impl Samples {
    fn len(&self) -> usize {
        match self {
            Samples::Counts(v) => v.len(),
            Samples::Real(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMatrix {
    n_traces: usize,
    n_samples: usize,
    samples: Samples,
}

/// Borrowed view of one trace.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Counts(&'a [u32]),
    Real(&'a [f64]),
}

impl Row<'_> {
    pub fn len(&self) -> usize {
        match self {
            Row::Counts(r) => r.len(),
            Row::Real(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, t: usize) -> f64 {
        match self {
            Row::Counts(r) => r[t] as f64,
            Row::Real(r) => r[t],
        }
    }
}

impl TraceMatrix {
    pub fn from_counts(
        n_traces: usize,
        n_samples: usize,
        data: Vec<u32>,
    ) -> Result<Self, ShapeError> {
        Self::new(n_traces, n_samples, Samples::Counts(data))
    }

    pub fn from_real(
        n_traces: usize,
        n_samples: usize,
        data: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        Self::new(n_traces, n_samples, Samples::Real(data))
    }

    pub fn new(n_traces: usize, n_samples: usize, samples: Samples) -> Result<Self, ShapeError> {
        if samples.len() != n_traces * n_samples {
            return Err(ShapeError::BufferLength {
                len: samples.len(),
                n_traces,
                n_samples,
            });
        }
        Ok(Self {
            n_traces,
            n_samples,
            samples,
        })
    }

    /// Builds a count matrix from equal-length rows. An empty row list gives a
    /// 0 x `n_samples` matrix.
    pub fn from_count_rows(n_samples: usize, rows: &[Vec<u32>]) -> Result<Self, ShapeError> {
        let mut data = Vec::with_capacity(rows.len() * n_samples);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n_samples {
                return Err(ShapeError::RowLength {
                    row,
                    len: r.len(),
                    expected: n_samples,
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_counts(rows.len(), n_samples, data)
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn is_counts(&self) -> bool {
        matches!(self.samples, Samples::Counts(_))
    }

    pub fn row(&self, j: usize) -> Row<'_> {
        let range = j * self.n_samples..(j + 1) * self.n_samples;
        match &self.samples {
            Samples::Counts(v) => Row::Counts(&v[range]),
            Samples::Real(v) => Row::Real(&v[range]),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.n_traces).map(move |j| self.row(j))
    }

    #[inline]
    pub fn get(&self, j: usize, t: usize) -> f64 {
        let idx = j * self.n_samples + t;
        match &self.samples {
            Samples::Counts(v) => v[idx] as f64,
            Samples::Real(v) => v[idx],
        }
    }

    /// Applies `a * x + b` to every sample, producing a real-valued matrix.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let data = match &self.samples {
            Samples::Counts(v) => v.iter().map(|&x| a * x as f64 + b).collect(),
            Samples::Real(v) => v.iter().map(|&x| a * x + b).collect(),
        };
        Self {
            n_traces: self.n_traces,
            n_samples: self.n_samples,
            samples: Samples::Real(data),
        }
    }

    /// Per-sample mean, minimum and maximum across traces.
    pub fn column_summary(&self) -> Vec<ColumnSummary> {
        let mut out: Vec<ColumnSummary> = (0..self.n_samples)
            .map(|_| ColumnSummary {
                mean: 0.0,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            })
            .collect();
        for row in self.rows() {
            for (t, s) in out.iter_mut().enumerate() {
                let x = row.get(t);
                s.mean += x;
                s.min = s.min.min(x);
                s.max = s.max.max(x);
            }
        }
        if self.n_traces > 0 {
            for s in &mut out {
                s.mean /= self.n_traces as f64;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}
