//! Escape statistics, 2-D histograms and series correlation.

use serde::{Deserialize, Serialize};

/// Summary of first-passage times. Censored and diverged paths are excluded
/// from the mean; `mean` and `std_err` are None when too few paths escaped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    pub paths: usize,
    pub escaped: usize,
    pub censored: usize,
    pub diverged: usize,
    /// Escaped fraction of the non-diverged paths.
    pub fraction: f64,
    pub mean: Option<f64>,
    pub std_err: Option<f64>,
}

impl EscapeStats {
    pub fn from_times(times: &[f64], censored: usize, diverged: usize) -> Self {
        let n = times.len();
        let live = n + censored;
        let mean = (n > 0).then(|| times.iter().sum::<f64>() / n as f64);
        let std_err = match (mean, n) {
            (Some(m), n) if n > 1 => {
                let var = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                Some((var / n as f64).sqrt())
            }
            _ => None,
        };
        EscapeStats {
            paths: live + diverged,
            escaped: n,
            censored,
            diverged,
            fraction: if live == 0 { 0.0 } else { n as f64 / live as f64 },
            mean,
            std_err,
        }
    }

    /// Standard error relative to the mean.
    pub fn relative_error(&self) -> Option<f64> {
        Some(self.std_err? / self.mean?.abs())
    }
}

/// Counts on a uniform grid over `[x0, x1) x [y0, y1)`, stored column-major
/// in x (`counts[ix * ny + iy]`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub nx: usize,
    pub ny: usize,
    pub x_range: [OrderedF64; 2],
    pub y_range: [OrderedF64; 2],
    pub counts: Vec<u64>,
}

/// An f64 that compares bitwise, so histograms can derive `Eq`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedF64(pub f64);

impl PartialEq for OrderedF64 {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for OrderedF64 {}

impl Histogram2d {
    pub fn new(bins: [usize; 2], x_range: [f64; 2], y_range: [f64; 2]) -> Self {
        assert!(bins[0] > 0 && bins[1] > 0, "histogram needs at least one bin per axis");
        assert!(
            x_range[0] < x_range[1] && y_range[0] < y_range[1],
            "empty histogram range"
        );
        Histogram2d {
            nx: bins[0],
            ny: bins[1],
            x_range: x_range.map(OrderedF64),
            y_range: y_range.map(OrderedF64),
            counts: vec![0; bins[0] * bins[1]],
        }
    }

    fn axis_bin(v: f64, range: [OrderedF64; 2], n: usize) -> Option<usize> {
        let (lo, hi) = (range[0].0, range[1].0);
        if !(v >= lo && v < hi) {
            return None;
        }
        Some((((v - lo) / (hi - lo)) * n as f64).floor().min((n - 1) as f64) as usize)
    }

    pub fn bin_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((
            Self::axis_bin(x, self.x_range, self.nx)?,
            Self::axis_bin(y, self.y_range, self.ny)?,
        ))
    }

    /// Adds one sample; samples outside the grid are dropped.
    pub fn add(&mut self, x: f64, y: f64) -> bool {
        match self.bin_of(x, y) {
            Some((i, j)) => {
                self.counts[i * self.ny + j] += 1;
                true
            }
            None => false,
        }
    }

    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.counts[ix * self.ny + iy]
    }

    pub fn merge(&mut self, other: &Histogram2d) {
        assert!(
            self.nx == other.nx
                && self.ny == other.ny
                && self.x_range == other.x_range
                && self.y_range == other.y_range,
            "merging histograms on different grids"
        );
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> [f64; 2] {
        [
            (self.x_range[1].0 - self.x_range[0].0) / self.nx as f64,
            (self.y_range[1].0 - self.y_range[0].0) / self.ny as f64,
        ]
    }

    pub fn x_center(&self, ix: usize) -> f64 {
        self.x_range[0].0 + (ix as f64 + 0.5) * self.bin_width()[0]
    }

    pub fn y_center(&self, iy: usize) -> f64 {
        self.y_range[0].0 + (iy as f64 + 0.5) * self.bin_width()[1]
    }

    /// Row of the largest count in column `ix` (lowest row on ties), or None
    /// for an empty column.
    pub fn column_argmax(&self, ix: usize) -> Option<usize> {
        let col = &self.counts[ix * self.ny..(ix + 1) * self.ny];
        let (best, &c) = col.iter().enumerate().rev().max_by_key(|(_, &c)| c)?;
        (c > 0).then_some(best)
    }

    /// `(x center, y center of the column mode)` for every non-empty column.
    pub fn ridge(&self) -> Vec<(f64, f64)> {
        (0..self.nx)
            .filter_map(|ix| Some((self.x_center(ix), self.y_center(self.column_argmax(ix)?))))
            .collect()
    }
}

/// Zero-lag Pearson correlation of two equally sampled series. None when the
/// lengths differ, the series are shorter than two samples, or either one is
/// constant.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
