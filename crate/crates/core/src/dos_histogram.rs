//! Binned entropy estimate `S` and visit histogram `H`, with the flatness
//! criterion and the halving modification-factor schedule.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::g17;

#[derive(Debug, Error)]
pub enum HistogramError {
    #[error("invalid bin spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniform binning of the scalar output range `[lo, hi)`.
///
/// Bin `b` is centered at `lo + b * width`; the first bin is centered at
/// `lo` itself, so values are assigned by rounding to the nearest center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

/// Where a scalar output lands relative to a `BinSpec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinIndex {
    In(usize),
    BelowRange,
    AboveRange,
}

impl BinSpec {
    pub fn new(lo: f64, hi: f64, width: f64) -> Result<Self, HistogramError> {
        if !(lo < hi) {
            return Err(HistogramError::InvalidSpec(format!(
                "bin range empty: lo {} >= hi {}",
                lo, hi
            )));
        }
        if !(width > 0.0) {
            return Err(HistogramError::InvalidSpec(format!("width {} <= 0", width)));
        }
        let n = (hi - lo) / width;
        if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return Err(HistogramError::InvalidSpec(format!(
                "(hi-lo)/width = {} is not a positive integer",
                n
            )));
        }
        Ok(BinSpec { lo, hi, width })
    }

    pub fn bin_count(&self) -> usize {
        ((self.hi - self.lo) / self.width).round() as usize
    }

    pub fn center(&self, b: usize) -> f64 {
        self.lo + b as f64 * self.width
    }

    /// Maps an output value to its bin by rounding to the nearest bin
    /// center; out-of-range values are markers, not errors.
    pub fn bin_index(&self, z: f64) -> BinIndex {
        if z < self.lo - self.width / 2.0 {
            return BinIndex::BelowRange;
        }
        if z >= self.hi - self.width / 2.0 || z.is_nan() {
            return BinIndex::AboveRange;
        }
        let b = ((z - self.lo) / self.width).round();
        let b = (b.max(0.0) as usize).min(self.bin_count() - 1);
        BinIndex::In(b)
    }
}

/// Modification increment `ln f`, halved every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModificationSchedule {
    pub ln_f0: f64,
    pub iteration: u32,
}

impl ModificationSchedule {
    pub fn new(ln_f0: f64) -> Self {
        assert!(ln_f0 > 0.0, "ln_f0 must be positive");
        ModificationSchedule { ln_f0, iteration: 0 }
    }

    pub fn ln_f(&self) -> f64 {
        self.ln_f0 / 2f64.powi(self.iteration as i32)
    }

    pub fn advance(&mut self) {
        self.iteration += 1;
    }
}

/// Running entropy estimate `s` plus the per-iteration visit counts `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosHistogram {
    pub spec: BinSpec,
    pub s: Vec<f64>,
    pub h: Vec<u64>,
    pub visited: Vec<bool>,
    pub overflow_low: u64,
    pub overflow_high: u64,
}

impl DosHistogram {
    pub fn new(spec: BinSpec) -> Self {
        let n = spec.bin_count();
        DosHistogram {
            spec,
            s: vec![0.0; n],
            h: vec![0; n],
            visited: vec![false; n],
            overflow_low: 0,
            overflow_high: 0,
        }
    }

    /// Reads the entropy at a bin index, treating out-of-range as +inf so
    /// the acceptance rule rejects moves out of the preset window.
    pub fn s_at(&self, idx: BinIndex) -> f64 {
        match idx {
            BinIndex::In(b) => self.s[b],
            _ => f64::INFINITY,
        }
    }

    pub fn record_visit(&mut self, idx: BinIndex, ln_f: f64) {
        assert!(ln_f >= 0.0, "ln_f must be non-negative");
        match idx {
            BinIndex::In(b) => {
                self.s[b] += ln_f;
                self.h[b] += 1;
                self.visited[b] = true;
            }
            BinIndex::BelowRange => self.overflow_low += 1,
            BinIndex::AboveRange => self.overflow_high += 1,
        }
    }

    /// Flatness over every bin visited so far in the run:
    /// max(h) - min(h) < mean(h). Judging against the lifetime visit set
    /// (not just this iteration's) keeps a walker that stalls on a few
    /// bins from advancing the schedule with an unconverged profile.
    /// An empty visit set is not flat.
    pub fn is_flat(&self) -> bool {
        let active: Vec<u64> = self
            .h
            .iter()
            .zip(&self.visited)
            .filter(|(_, &v)| v)
            .map(|(&c, _)| c)
            .collect();
        if active.is_empty() {
            return false;
        }
        let max = *active.iter().max().unwrap();
        let min = *active.iter().min().unwrap();
        let mean = active.iter().sum::<u64>() as f64 / active.len() as f64;
        ((max - min) as f64) < mean
    }

    /// Resets `h` for the next iteration and halves `ln f`; `s` and the
    /// visited marks accumulate across iterations.
    pub fn advance_iteration(&mut self, sched: &mut ModificationSchedule) {
        self.h.iter_mut().for_each(|c| *c = 0);
        sched.advance();
    }

    pub fn visited_bin_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// CSV rows `bin_lo,s,h,visited`, one per bin; `bin_lo` is the bin's
    /// lower edge (center - width/2).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), HistogramError> {
        writeln!(out, "bin_lo,s,h,visited")?;
        for b in 0..self.spec.bin_count() {
            let lo = self.spec.center(b) - self.spec.width / 2.0;
            writeln!(
                out,
                "{},{},{},{}",
                g17(lo),
                g17(self.s[b]),
                self.h[b],
                if self.visited[b] { "true" } else { "false" }
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self, sched: &ModificationSchedule) -> String {
        let mut out = String::from("{\"spec\":{");
        out.push_str(&format!(
            "\"lo\":{},\"hi\":{},\"width\":{}}},",
            g17(self.spec.lo),
            g17(self.spec.hi),
            g17(self.spec.width)
        ));
        out.push_str(&format!(
            "\"schedule\":{{\"ln_f0\":{},\"iteration\":{}}},",
            g17(sched.ln_f0),
            sched.iteration
        ));
        out.push_str("\"s\":[");
        out.push_str(&self.s.iter().map(|&v| g17(v)).collect::<Vec<_>>().join(","));
        out.push_str("],\"h\":[");
        out.push_str(&self.h.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","));
        out.push_str("],\"visited\":[");
        out.push_str(
            &self
                .visited
                .iter()
                .map(|&v| if v { "true" } else { "false" })
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push_str(&format!(
            "],\"overflow_low\":{},\"overflow_high\":{}}}",
            self.overflow_low, self.overflow_high
        ));
        out
    }
}
