//! Per-shot phase profiles and the correlation estimator.
//!
//! Each experimental realisation ("shot") yields one phase profile
//! `θ_s(x_i)` on the measurement grid. The profile is only defined up to a
//! global offset that changes from shot to shot, so the only estimable
//! quantities are expectations of phase *differences*. Even-order
//! correlators pair the positions up with alternating signs,
//!
//! ```text
//! C(x₁,…,xₙ) = ⟨cos(θ(x₁) − θ(x₂) + θ(x₃) − … − θ(xₙ))⟩ ,
//! ```
//!
//! and the estimator averages this over shots. The inner sum is computed as
//! grouped pairwise differences `(θ₁−θ₂) + (θ₃−θ₄) + …`, so a constant
//! offset cancels within each pair; whenever the offset addition itself is
//! exact in floating point, the estimate is bit-identical with and without
//! the offset. Odd orders have no offset-free combination — requesting one
//! is an error, and [`ShotEnsemble::raw_phase_average`] exposes the raw
//! (sign-free) averages whose collapse towards zero under offset spreading
//! demonstrates why.

use rayon::prelude::*;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corr::CorrTensor;
use crate::correlator::{check_order, MAX_ORDER};
use crate::error::{TomoError, TomoResult};
use crate::grid::Grid;
use crate::linalg::C64;
use crate::simplex::{advance, simplex_len, unrank};

/// A set of phase profiles on a common grid, one row per shot.
#[derive(Debug, Clone)]
pub struct ShotEnsemble {
    grid: Grid,
    phases: Vec<Vec<f64>>,
}

impl ShotEnsemble {
    /// Wrap phase rows, each of length `grid.count`.
    pub fn new(grid: Grid, phases: Vec<Vec<f64>>) -> TomoResult<Self> {
        for (s, row) in phases.iter().enumerate() {
            if row.len() != grid.count {
                return Err(TomoError::DimensionMismatch(format!(
                    "shot {s} has {} phases but the grid has {} points",
                    row.len(),
                    grid.count
                )));
            }
        }
        Ok(Self { grid, phases })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn num_shots(&self) -> usize {
        self.phases.len()
    }

    /// Phase rows, one per shot.
    pub fn phases(&self) -> &[Vec<f64>] {
        &self.phases
    }

    /// Estimate the order-`n` correlation tensor (`n` even).
    ///
    /// For every canonical tuple the alternating-difference cosine is
    /// averaged over shots in ascending shot order; the per-entry standard
    /// error of the mean is attached. The result is deterministic — grouped
    /// pair differences, a fixed accumulation order, and parallelism only
    /// across independent entries.
    pub fn estimate_correlator(&self, order: usize) -> TomoResult<CorrTensor> {
        check_order(order)?;
        let shots = self.phases.len();
        if shots < 2 {
            return Err(TomoError::DimensionMismatch(format!(
                "estimation needs at least 2 shots, got {shots}"
            )));
        }
        let count = self.grid.count;
        let len = simplex_len(count, order);
        let mut values = vec![0.0f64; len];
        let mut stderr = vec![0.0f64; len];

        const CHUNK: usize = 2048;
        values
            .par_chunks_mut(CHUNK)
            .zip(stderr.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(ci, (vals, errs))| {
                let mut tuple = unrank((ci * CHUNK) as u128, count, order);
                for (v, e) in vals.iter_mut().zip(errs.iter_mut()) {
                    let mut sum = 0.0;
                    let mut sumsq = 0.0;
                    for row in &self.phases {
                        let mut delta = 0.0;
                        for p in (0..order).step_by(2) {
                            delta += row[tuple[p]] - row[tuple[p + 1]];
                        }
                        let c = delta.cos();
                        sum += c;
                        sumsq += c * c;
                    }
                    let n = shots as f64;
                    let mean = sum / n;
                    let var = ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0);
                    *v = mean;
                    *e = (var / n).sqrt();
                    advance(&mut tuple, count);
                }
            });

        let mut t = CorrTensor::from_values(order, self.grid, values)?;
        t.set_stderr(stderr)?;
        t.shots = Some(shots as u64);
        Ok(t)
    }

    /// Raw (same-sign) phase averages `⟨e^{i(θ(x₁）+…+θ(xₙ))}⟩` over the
    /// canonical simplex, in rank order.
    ///
    /// These are *not* estimators of any state property — a global offset
    /// does not cancel — but they make the even-order restriction visible:
    /// spreading the offset drives every odd-order raw average towards zero.
    pub fn raw_phase_average(&self, order: usize) -> TomoResult<Vec<C64>> {
        if order == 0 || order > MAX_ORDER {
            return Err(TomoError::OrderTooLarge {
                order,
                max: MAX_ORDER,
            });
        }
        let shots = self.phases.len();
        if shots == 0 {
            return Err(TomoError::DimensionMismatch(
                "raw averages need at least one shot".into(),
            ));
        }
        let count = self.grid.count;
        let len = simplex_len(count, order);
        let mut out = Vec::with_capacity(len);
        let mut tuple = vec![0usize; order];
        loop {
            let mut acc = C64::new(0.0, 0.0);
            for row in &self.phases {
                let total: f64 = tuple.iter().map(|&i| row[i]).sum();
                acc += C64::new(0.0, total).exp();
            }
            out.push(acc / shots as f64);
            if advance(&mut tuple, count).is_none() {
                break;
            }
        }
        debug_assert_eq!(out.len(), len);
        Ok(out)
    }

    /// Write the CSV document: a `#` header with the grid, then one row of
    /// phases per shot, in exact (shortest round-trip) decimal form.
    pub fn write_csv(&self, path: &Path) -> TomoResult<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "# grid_start={} grid_step={} grid_count={}",
            self.grid.start, self.grid.step, self.grid.count
        )?;
        for row in &self.phases {
            let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Read a CSV document written by [`ShotEnsemble::write_csv`].
    pub fn read_csv(path: &Path) -> TomoResult<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();

        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| TomoError::Parse {
                context: format!("{}", path.display()),
                detail: "file is empty".into(),
            })?;
        let meta = crate::corr::parse_shot_header(&header, path)?;
        let grid = Grid::new(meta.0, meta.1, meta.2)?;

        let mut phases = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row: Result<Vec<f64>, _> = trimmed
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect();
            let row = row.map_err(|e| TomoError::Parse {
                context: format!("{} line {}", path.display(), lineno + 2),
                detail: format!("{e}"),
            })?;
            if row.len() != grid.count {
                return Err(TomoError::Parse {
                    context: format!("{} line {}", path.display(), lineno + 2),
                    detail: format!(
                        "row has {} phases but the grid has {}",
                        row.len(),
                        grid.count
                    ),
                });
            }
            phases.push(row);
        }
        Self::new(grid, phases)
    }
}
