//! Higher-order prediction, validation scoring, and plot-ready projections.
//!
//! Once a chain model (modes `λ` plus vertex matrix `M`) has been
//! reconstructed from low orders, its scientific test is whether it predicts
//! correlators it was never fitted to. This module evaluates those
//! predictions, scores them against measured tensors with the floored
//! relative-deviation metric, renders human-readable report tables (one row
//! per labelled dataset, one column per order), and extracts
//! two-coordinate projection slices of high-order tensors as rectangular
//! matrices for plotting.

use serde::{Deserialize, Serialize};

use crate::corr::{relative_deviation, CorrTensor, DeviationReport};
use crate::correlator::ChainEvaluator;
use crate::error::{TomoError, TomoResult};
use crate::grid::Grid;

/// Entries whose magnitude exceeds `1 + BOUND_TOL` are counted as bound
/// violations: phase correlators of a physical state cannot exceed 1, but a
/// fitted model can (they are flagged, never clipped).
const BOUND_TOL: f64 = 1e-6;

/// Predict the full ordered-index tensor of a given even order on a grid.
///
/// Returns the tensor of real parts and the largest imaginary residue
/// encountered during evaluation (non-negligible values signal a model
/// whose modes and vertex matrix are not conjugation-consistent).
pub fn predict(
    eval: &ChainEvaluator,
    order: usize,
    grid: Grid,
) -> TomoResult<(CorrTensor, f64)> {
    eval.fill_simplex(order, grid)
}

/// Per-order comparison of a model prediction against a measured tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderScore {
    pub order: usize,
    /// Floored relative deviations of measured versus predicted entries.
    pub deviation: DeviationReport,
    /// Largest imaginary part produced while evaluating the prediction.
    pub max_imag: f64,
    /// Largest relative mismatch between a predicted entry and the entry
    /// with the reversed gap vector. Exact for models from real states;
    /// reported (not asserted) for fitted models.
    pub reversal_asymmetry: f64,
    /// Predicted entries with magnitude above `1 + 1e-6`.
    pub bound_violations: usize,
}

/// Validation scores for one model against a set of measured tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scores: Vec<OrderScore>,
}

impl ValidationReport {
    pub fn save(&self, path: &std::path::Path) -> TomoResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> TomoResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Score a model against measured tensors (typically orders 2, 4 and 6 on
/// one shared grid).
///
/// Every tensor is compared against a fresh prediction on its own order and
/// the common grid; tensors on different grids are rejected.
pub fn validation_report(
    eval: &ChainEvaluator,
    measured: &[CorrTensor],
) -> TomoResult<ValidationReport> {
    let Some(first) = measured.first() else {
        return Err(TomoError::DimensionMismatch(
            "validation needs at least one measured tensor".into(),
        ));
    };
    let grid = *first.grid();
    let mut scores = Vec::with_capacity(measured.len());
    for tensor in measured {
        if !tensor.grid().approx_eq(&grid) {
            return Err(TomoError::GridMismatch(format!(
                "measured tensors mix grids: {} vs {}",
                tensor.grid(),
                grid
            )));
        }
        let (predicted, max_imag) = eval.fill_simplex(tensor.order(), grid)?;
        let deviation = relative_deviation(tensor, &predicted)?;
        let reversal_asymmetry = reversal_asymmetry(&predicted)?;
        let bound_violations = predicted
            .values()
            .iter()
            .filter(|v| v.abs() > 1.0 + BOUND_TOL)
            .count();
        scores.push(OrderScore {
            order: tensor.order(),
            deviation,
            max_imag,
            reversal_asymmetry,
            bound_violations,
        });
    }
    Ok(ValidationReport { scores })
}

/// Largest relative mismatch between entries whose gap vectors are reverses
/// of each other, normalised by the largest entry magnitude.
///
/// The underlying correlator of a state with real `(Q, R)` is symmetric
/// under reversing the separation sequence, so for such models this is a
/// roundoff-level number; fitted models may break it and the size of the
/// breach is a useful diagnostic.
pub fn reversal_asymmetry(tensor: &CorrTensor) -> TomoResult<f64> {
    let scale = tensor
        .values()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-300);
    let mut worst = 0.0f64;
    for (tuple, v) in tensor.entries() {
        let gaps: Vec<usize> = tuple.windows(2).map(|w| w[1] - w[0]).collect();
        let mut pos = 0usize;
        let mut mirrored = Vec::with_capacity(tuple.len());
        mirrored.push(0);
        for g in gaps.iter().rev() {
            pos += g;
            mirrored.push(pos);
        }
        let v_rev = tensor.value_at(&mirrored)?;
        worst = worst.max((v - v_rev).abs() / scale);
    }
    Ok(worst)
}

/// Render one report as a plain-text table: a row per order with the
/// deviation statistics and diagnostics.
pub fn render_report(report: &ValidationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>5}  {:>12}  {:>12}  {:>6}  {:>8}  {:>10}  {:>10}  {:>6}\n",
        "order", "mean dev", "max dev", "used", "excluded", "max imag", "reversal", "|v|>1"
    ));
    for s in &report.scores {
        out.push_str(&format!(
            "{:>5}  {:>12.4e}  {:>12.4e}  {:>6}  {:>8}  {:>10.2e}  {:>10.2e}  {:>6}\n",
            s.order,
            s.deviation.mean,
            s.deviation.max,
            s.deviation.used,
            s.deviation.excluded,
            s.max_imag,
            s.reversal_asymmetry,
            s.bound_violations
        ));
    }
    out
}

/// Render several labelled reports as one table: a row per dataset, a
/// column per order, cells holding the mean relative deviation. This is the
/// layout used to compare reconstructions across measurement conditions.
pub fn render_labeled_reports(rows: &[(String, ValidationReport)]) -> String {
    let mut orders: Vec<usize> = rows
        .iter()
        .flat_map(|(_, r)| r.scores.iter().map(|s| s.order))
        .collect();
    orders.sort_unstable();
    orders.dedup();

    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(7)
        .max(7);
    let mut out = String::new();
    out.push_str(&format!("{:>label_width$}", "dataset"));
    for o in &orders {
        out.push_str(&format!("  {:>12}", format!("mean dev C{o}")));
    }
    out.push('\n');
    for (label, report) in rows {
        out.push_str(&format!("{label:>label_width$}"));
        for o in &orders {
            match report.scores.iter().find(|s| s.order == *o) {
                Some(s) => out.push_str(&format!("  {:>12.4e}", s.deviation.mean)),
                None => out.push_str(&format!("  {:>12}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

/// A rectangular slice through a high-order tensor: the first two gap
/// coordinates vary over the full grid while every remaining gap is fixed
/// at one grid separation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionSlice {
    pub order: usize,
    /// Grid index of the fixed separation applied to gaps 3, 4, ….
    pub fix_index: usize,
    pub grid: Grid,
    /// Varying gap coordinates (2 in general; 1 for an order-2 tensor).
    pub varying: usize,
    /// Model values, row-major `count × count` (rows: first gap, columns:
    /// second gap); `count × 1` when only one gap varies. The model is
    /// evaluated over the whole rectangle.
    pub predicted: Vec<f64>,
    /// Measured values where the index tuple fits on the grid, `NaN`
    /// elsewhere (the ordered simplex covers only part of the rectangle).
    pub measured: Vec<f64>,
}

impl ProjectionSlice {
    pub fn rows(&self) -> usize {
        self.grid.count
    }

    pub fn cols(&self) -> usize {
        if self.varying == 2 {
            self.grid.count
        } else {
            1
        }
    }

    /// One matrix block as CSV with a descriptive comment header. `kind`
    /// selects `"predicted"` or `"measured"`.
    pub fn csv_matrix(&self, kind: &str) -> TomoResult<String> {
        let data = match kind {
            "predicted" => &self.predicted,
            "measured" => &self.measured,
            other => {
                return Err(TomoError::Parse {
                    context: "projection slice".into(),
                    detail: format!("unknown block `{other}` (predicted|measured)"),
                })
            }
        };
        let mut out = String::new();
        out.push_str(&format!(
            "# order={} fix_index={} fix_tau={} grid_start={} grid_step={} grid_count={} kind={}\n",
            self.order,
            self.fix_index,
            self.fix_index as f64 * self.grid.step,
            self.grid.start,
            self.grid.step,
            self.grid.count,
            kind
        ));
        let cols = self.cols();
        for r in 0..self.rows() {
            let row: Vec<String> = (0..cols)
                .map(|c| format!("{}", data[r * cols + c]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Extract the projection slice of `measured` at a fixed separation index,
/// with the model evaluated over the full rectangle for comparison.
pub fn projection_slice(
    eval: &ChainEvaluator,
    measured: &CorrTensor,
    fix_index: usize,
) -> TomoResult<ProjectionSlice> {
    let order = measured.order();
    crate::correlator::check_order(order)?;
    let grid = *measured.grid();
    if fix_index >= grid.count {
        return Err(TomoError::GridMismatch(format!(
            "fixed separation index {fix_index} outside grid of {} points",
            grid.count
        )));
    }
    let n_gaps = order - 1;
    let varying = n_gaps.min(2);
    let fixed = n_gaps - varying;

    let count = grid.count;
    let cols = if varying == 2 { count } else { 1 };
    let mut predicted = vec![f64::NAN; count * cols];
    let mut measured_vals = vec![f64::NAN; count * cols];

    for r in 0..count {
        for c in 0..cols {
            let mut gaps_idx = Vec::with_capacity(n_gaps);
            gaps_idx.push(r);
            if varying == 2 {
                gaps_idx.push(c);
            }
            gaps_idx.extend(std::iter::repeat(fix_index).take(fixed));

            let gaps_tau: Vec<f64> = gaps_idx.iter().map(|&g| g as f64 * grid.step).collect();
            predicted[r * cols + c] = eval.eval_gaps(&gaps_tau)?.re;

            // The measured tuple exists only when the accumulated index
            // stays on the grid.
            let mut pos = 0usize;
            let mut tuple = Vec::with_capacity(order);
            tuple.push(0);
            for &g in &gaps_idx {
                pos += g;
                tuple.push(pos);
            }
            if pos < count {
                measured_vals[r * cols + c] = measured.value_at(&tuple)?;
            }
        }
    }

    Ok(ProjectionSlice {
        order,
        fix_index,
        grid,
        varying,
        predicted,
        measured: measured_vals,
    })
}
