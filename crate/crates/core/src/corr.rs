//! Symmetric correlation tensors on a measurement grid, their CSV form, and
//! the relative-deviation metric used to compare measured against
//! reconstructed data.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{TomoError, TomoResult};
use crate::grid::Grid;
use crate::simplex::{rank, simplex_len, SimplexIter};

/// Fraction of the largest reconstructed magnitude below which entries are
/// excluded from relative deviations (their denominators are unreliable).
pub const DEVIATION_FLOOR_FRACTION: f64 = 1e-3;

/// A fully symmetric order-`n` correlation tensor sampled on a uniform grid.
///
/// Only the canonical simplex `i₁ ≤ i₂ ≤ … ≤ iₙ` is stored; all other index
/// orders follow by symmetry of the correlation function.
#[derive(Debug, Clone)]
pub struct CorrTensor {
    order: usize,
    grid: Grid,
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
    /// Number of experimental shots behind these values, when known.
    pub shots: Option<u64>,
}

impl CorrTensor {
    /// Zero-filled tensor of the given order on the given grid.
    pub fn zeros(order: usize, grid: Grid) -> Self {
        let len = simplex_len(grid.count, order);
        Self {
            order,
            grid,
            values: vec![0.0; len],
            stderr: None,
            shots: None,
        }
    }

    /// Build a tensor by evaluating `f` on every canonical index tuple.
    pub fn from_fn(order: usize, grid: Grid, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(order, grid);
        let mut it = SimplexIter::new(grid.count, order);
        let mut r = 0;
        while let Some((tuple, _)) = it.next_tuple() {
            t.values[r] = f(tuple);
            r += 1;
        }
        t
    }

    /// Wrap existing flat storage (must have the canonical simplex length).
    pub fn from_values(order: usize, grid: Grid, values: Vec<f64>) -> TomoResult<Self> {
        let len = simplex_len(grid.count, order);
        if values.len() != len {
            return Err(TomoError::DimensionMismatch(format!(
                "order-{order} tensor on {} points needs {len} values, got {}",
                grid.count,
                values.len()
            )));
        }
        Ok(Self {
            order,
            grid,
            values,
            stderr: None,
            shots: None,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Flat storage in lexicographic tuple order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Per-entry standard errors, when the tensor came from shot estimation.
    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    pub fn set_stderr(&mut self, stderr: Vec<f64>) -> TomoResult<()> {
        if stderr.len() != self.values.len() {
            return Err(TomoError::DimensionMismatch(format!(
                "stderr length {} does not match value count {}",
                stderr.len(),
                self.values.len()
            )));
        }
        self.stderr = Some(stderr);
        Ok(())
    }

    /// Number of stored (canonical) entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a canonical (non-decreasing) index tuple.
    pub fn value_at(&self, indices: &[usize]) -> TomoResult<f64> {
        self.check_tuple(indices)?;
        Ok(self.values[rank(indices, self.grid.count)])
    }

    /// Set the value at a canonical index tuple.
    pub fn set_value(&mut self, indices: &[usize], v: f64) -> TomoResult<()> {
        self.check_tuple(indices)?;
        let r = rank(indices, self.grid.count);
        self.values[r] = v;
        Ok(())
    }

    fn check_tuple(&self, indices: &[usize]) -> TomoResult<()> {
        if indices.len() != self.order {
            return Err(TomoError::DimensionMismatch(format!(
                "tuple length {} does not match tensor order {}",
                indices.len(),
                self.order
            )));
        }
        if !indices.windows(2).all(|w| w[0] <= w[1]) {
            return Err(TomoError::DimensionMismatch(format!(
                "index tuple {indices:?} is not non-decreasing"
            )));
        }
        if indices.last().is_some_and(|&i| i >= self.grid.count) {
            return Err(TomoError::DimensionMismatch(format!(
                "index tuple {indices:?} exceeds grid count {}",
                self.grid.count
            )));
        }
        Ok(())
    }

    /// Iterate `(tuple, value)` pairs in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let mut it = SimplexIter::new(self.grid.count, self.order);
        let mut r = 0;
        std::iter::from_fn(move || {
            let (tuple, _) = it.next_tuple()?;
            let v = self.values[r];
            r += 1;
            Some((tuple.to_vec(), v))
        })
    }

    /// Write the CSV document: a `#` header carrying order/grid/shot
    /// metadata, then one row per canonical tuple with positions, value and
    /// (when available) standard error. Floats are printed exactly (shortest
    /// round-trip form).
    pub fn write_csv(&self, path: &Path) -> TomoResult<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = format!(
            "# order={} grid_start={} grid_step={} grid_count={}",
            self.order, self.grid.start, self.grid.step, self.grid.count
        );
        if let Some(s) = self.shots {
            header.push_str(&format!(" shots={s}"));
        }
        writeln!(out, "{header}")?;
        let mut it = SimplexIter::new(self.grid.count, self.order);
        let mut r = 0;
        while let Some((tuple, _)) = it.next_tuple() {
            let mut row = String::new();
            for &i in tuple {
                row.push_str(&format!("{},", self.grid.position(i)));
            }
            row.push_str(&format!("{}", self.values[r]));
            if let Some(se) = &self.stderr {
                row.push_str(&format!(",{}", se[r]));
            }
            writeln!(out, "{row}")?;
            r += 1;
        }
        Ok(())
    }

    /// Read a CSV document written by [`CorrTensor::write_csv`]. Rows may
    /// appear in any order but must cover every canonical tuple exactly once.
    pub fn read_csv(path: &Path) -> TomoResult<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();

        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break line;
                }
                None => {
                    return Err(TomoError::Parse {
                        context: format!("{}", path.display()),
                        detail: "file is empty".into(),
                    })
                }
            }
        };
        let meta = parse_header(&header, path)?;
        let order = meta.require_usize("order")?;
        let grid = Grid::new(
            meta.require_f64("grid_start")?,
            meta.require_f64("grid_step")?,
            meta.require_usize("grid_count")?,
        )?;
        let shots = meta.get_u64("shots");

        let len = simplex_len(grid.count, order);
        let mut values = vec![f64::NAN; len];
        let mut stderr: Option<Vec<f64>> = None;
        let mut filled = vec![false; len];
        let mut nrows = 0usize;

        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != order + 1 && fields.len() != order + 2 {
                return Err(TomoError::Parse {
                    context: format!("{} line {}", path.display(), lineno + 2),
                    detail: format!(
                        "expected {} or {} comma-separated fields, got {}",
                        order + 1,
                        order + 2,
                        fields.len()
                    ),
                });
            }
            let parse_f64 = |s: &str| -> TomoResult<f64> {
                s.trim().parse().map_err(|e| TomoError::Parse {
                    context: format!("{} line {}", path.display(), lineno + 2),
                    detail: format!("bad float {s:?}: {e}"),
                })
            };
            let mut tuple = Vec::with_capacity(order);
            for f in &fields[..order] {
                tuple.push(grid.index_of(parse_f64(f)?)?);
            }
            if !tuple.windows(2).all(|w| w[0] <= w[1]) {
                return Err(TomoError::Parse {
                    context: format!("{} line {}", path.display(), lineno + 2),
                    detail: format!("positions are not non-decreasing: {tuple:?}"),
                });
            }
            let r = rank(&tuple, grid.count);
            if filled[r] {
                return Err(TomoError::Parse {
                    context: format!("{} line {}", path.display(), lineno + 2),
                    detail: format!("duplicate entry for tuple {tuple:?}"),
                });
            }
            filled[r] = true;
            values[r] = parse_f64(fields[order])?;
            if fields.len() == order + 2 {
                stderr.get_or_insert_with(|| vec![f64::NAN; len])[r] =
                    parse_f64(fields[order + 1])?;
            }
            nrows += 1;
        }

        if nrows != len {
            return Err(TomoError::Parse {
                context: format!("{}", path.display()),
                detail: format!("expected {len} data rows, found {nrows}"),
            });
        }

        let mut t = Self::from_values(order, grid, values)?;
        if let Some(se) = stderr {
            t.set_stderr(se)?;
        }
        t.shots = shots;
        Ok(t)
    }
}

struct HeaderMeta {
    pairs: Vec<(String, String)>,
    context: String,
}

impl HeaderMeta {
    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require_f64(&self, key: &str) -> TomoResult<f64> {
        self.get(key)
            .ok_or_else(|| TomoError::Parse {
                context: self.context.clone(),
                detail: format!("header is missing {key}"),
            })?
            .parse()
            .map_err(|e| TomoError::Parse {
                context: self.context.clone(),
                detail: format!("bad {key}: {e}"),
            })
    }

    fn require_usize(&self, key: &str) -> TomoResult<usize> {
        self.get(key)
            .ok_or_else(|| TomoError::Parse {
                context: self.context.clone(),
                detail: format!("header is missing {key}"),
            })?
            .parse()
            .map_err(|e| TomoError::Parse {
                context: self.context.clone(),
                detail: format!("bad {key}: {e}"),
            })
    }

    fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key).and_then(|v| v.parse().ok())
    }
}

/// Parse a shot-file header `# grid_start=… grid_step=… grid_count=…` into
/// its `(start, step, count)` triple. Shared with [`crate::shots`].
pub(crate) fn parse_shot_header(line: &str, path: &Path) -> TomoResult<(f64, f64, usize)> {
    let meta = parse_header(line, path)?;
    Ok((
        meta.require_f64("grid_start")?,
        meta.require_f64("grid_step")?,
        meta.require_usize("grid_count")?,
    ))
}

fn parse_header(line: &str, path: &Path) -> TomoResult<HeaderMeta> {
    let context = format!("{} header", path.display());
    let body = line.strip_prefix('#').ok_or_else(|| TomoError::Parse {
        context: context.clone(),
        detail: format!("expected a `# key=value ...` header, got {line:?}"),
    })?;
    let mut pairs = Vec::new();
    for token in body.split_whitespace() {
        let (k, v) = token.split_once('=').ok_or_else(|| TomoError::Parse {
            context: context.clone(),
            detail: format!("malformed header token {token:?}"),
        })?;
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(HeaderMeta { pairs, context })
}

/// Summary of entry-wise relative deviations between a measured and a
/// reconstructed tensor.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DeviationReport {
    /// Mean of `|measured − reconstructed| / |reconstructed|` over included
    /// entries.
    pub mean: f64,
    /// Maximum relative deviation over included entries.
    pub max: f64,
    /// Number of entries included.
    pub used: usize,
    /// Entries excluded because the reconstructed magnitude fell below the
    /// floor (denominator too small for a meaningful ratio).
    pub excluded: usize,
}

/// Compare a measured tensor against a reconstructed one entry by entry.
///
/// The deviation of each entry is `|C − C_rec| / |C_rec|`. Entries whose
/// reconstructed magnitude is below [`DEVIATION_FLOOR_FRACTION`] times the
/// largest reconstructed magnitude are excluded and counted separately. With
/// no includable entries, `mean` and `max` are NaN.
pub fn relative_deviation(
    measured: &CorrTensor,
    reconstructed: &CorrTensor,
) -> TomoResult<DeviationReport> {
    if measured.order != reconstructed.order {
        return Err(TomoError::GridMismatch(format!(
            "cannot compare order {} against order {}",
            measured.order, reconstructed.order
        )));
    }
    if !measured.grid.approx_eq(&reconstructed.grid) {
        return Err(TomoError::GridMismatch(format!(
            "tensor grids differ: {} vs {}",
            measured.grid, reconstructed.grid
        )));
    }

    let floor = DEVIATION_FLOOR_FRACTION
        * reconstructed
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for (m, r) in measured.values.iter().zip(&reconstructed.values) {
        if r.abs() < floor {
            excluded += 1;
            continue;
        }
        let dev = (m - r).abs() / r.abs();
        sum += dev;
        max = max.max(dev);
        used += 1;
    }
    let mean = if used > 0 { sum / used as f64 } else { f64::NAN };
    let max = if used > 0 { max } else { f64::NAN };
    Ok(DeviationReport {
        mean,
        max,
        used,
        excluded,
    })
}
