//! Translation-invariant continuous matrix-product state parametrisation.
//!
//! A state of bond dimension `d` is specified by two complex `d × d`
//! matrices: `Q`, the free-evolution generator, and `R`, the field operator.
//! All physical predictions of the pipeline (phase correlation functions of
//! any even order) are functions of `(Q, R)` only.

use serde::{Deserialize, Serialize};

use crate::error::{TomoError, TomoResult};
use crate::linalg::{CMat, C64};

/// A translation-invariant continuous matrix-product state `(Q, R)` of bond
/// dimension `d`.
///
/// Construction checks shapes only; properties needed by individual
/// operations (normalisation, invertibility of `R`) are validated where they
/// are required, so that e.g. an unnormalised state can still be built,
/// inspected and then normalised.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawState", into = "RawState")]
pub struct CmpsState {
    d: usize,
    q: CMat,
    r: CMat,
}

impl CmpsState {
    /// Build a state from its generator `Q` and field operator `R`.
    ///
    /// Both must be square with equal dimensions `d ≥ 1`.
    pub fn new(q: CMat, r: CMat) -> TomoResult<Self> {
        if q.nrows() != q.ncols() || r.nrows() != r.ncols() {
            return Err(TomoError::DimensionMismatch(format!(
                "Q and R must be square, got Q {}x{}, R {}x{}",
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if q.nrows() != r.nrows() {
            return Err(TomoError::DimensionMismatch(format!(
                "Q and R must have equal dimensions, got {} and {}",
                q.nrows(),
                r.nrows()
            )));
        }
        if q.nrows() == 0 {
            return Err(TomoError::DimensionMismatch(
                "bond dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            d: q.nrows(),
            q,
            r,
        })
    }

    /// Bond dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Generator matrix `Q`.
    pub fn q(&self) -> &CMat {
        &self.q
    }

    /// Field operator `R`.
    pub fn r(&self) -> &CMat {
        &self.r
    }

    /// True when every entry of `Q` and `R` has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.q.iter().chain(self.r.iter()).all(|z| z.im == 0.0)
    }

    /// Serialise to the on-disk JSON document.
    pub fn to_json(&self) -> TomoResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse from the on-disk JSON document.
    pub fn from_json(text: &str) -> TomoResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Write the JSON document to a file.
    pub fn save(&self, path: &std::path::Path) -> TomoResult<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Read a JSON document from a file.
    pub fn load(path: &std::path::Path) -> TomoResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// On-disk JSON layout: dimensions plus row-major re/im parts of each matrix.
///
/// Numbers are written with enough digits for a bit-exact float round trip.
#[derive(Serialize, Deserialize, Clone)]
struct RawState {
    d: usize,
    #[serde(rename = "Q_re")]
    q_re: Vec<f64>,
    #[serde(rename = "Q_im")]
    q_im: Vec<f64>,
    #[serde(rename = "R_re")]
    r_re: Vec<f64>,
    #[serde(rename = "R_im")]
    r_im: Vec<f64>,
}

impl TryFrom<RawState> for CmpsState {
    type Error = TomoError;

    fn try_from(raw: RawState) -> TomoResult<Self> {
        let n = raw.d * raw.d;
        for (name, v) in [
            ("Q_re", &raw.q_re),
            ("Q_im", &raw.q_im),
            ("R_re", &raw.r_re),
            ("R_im", &raw.r_im),
        ] {
            if v.len() != n {
                return Err(TomoError::Parse {
                    context: "state JSON".into(),
                    detail: format!(
                        "field {name} has {} entries, expected d² = {n}",
                        v.len()
                    ),
                });
            }
        }
        let assemble = |re: &[f64], im: &[f64]| {
            CMat::from_fn(raw.d, raw.d, |i, j| {
                C64::new(re[i * raw.d + j], im[i * raw.d + j])
            })
        };
        CmpsState::new(
            assemble(&raw.q_re, &raw.q_im),
            assemble(&raw.r_re, &raw.r_im),
        )
    }
}

impl From<CmpsState> for RawState {
    fn from(s: CmpsState) -> Self {
        let flatten = |m: &CMat, pick: fn(&C64) -> f64| -> Vec<f64> {
            (0..s.d)
                .flat_map(|i| (0..s.d).map(move |j| (i, j)))
                .map(|(i, j)| pick(&m[(i, j)]))
                .collect()
        };
        RawState {
            d: s.d,
            q_re: flatten(&s.q, |z| z.re),
            q_im: flatten(&s.q, |z| z.im),
            r_re: flatten(&s.r, |z| z.re),
            r_im: flatten(&s.r, |z| z.im),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let q = CMat::zeros(2, 2);
        let r = CMat::zeros(3, 3);
        assert!(matches!(
            CmpsState::new(q, r),
            Err(TomoError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_square() {
        let q = CMat::zeros(2, 3);
        let r = CMat::zeros(2, 3);
        assert!(matches!(
            CmpsState::new(q, r),
            Err(TomoError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        // Awkward values: subnormal-ish, negative zero, many digits.
        let q = CMat::from_row_slice(
            2,
            2,
            &[
                c(0.1 + 0.2, -1.0 / 3.0),
                c(1e-160, 2.0_f64.sqrt()),
                c(-0.0, 3.141592653589793),
                c(6.02e23, -7.77e-12),
            ],
        );
        let r = CMat::from_row_slice(
            2,
            2,
            &[
                c(1.0, 0.0),
                c(0.3333333333333333, -0.9999999999999999),
                c(2.2250738585072014e-308, 0.0),
                c(-1.5, 1.5),
            ],
        );
        let state = CmpsState::new(q.clone(), r.clone()).unwrap();
        let json = state.to_json().unwrap();
        let back = CmpsState::from_json(&json).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(back.q()[(i, j)].re.to_bits(), q[(i, j)].re.to_bits());
                assert_eq!(back.q()[(i, j)].im.to_bits(), q[(i, j)].im.to_bits());
                assert_eq!(back.r()[(i, j)].re.to_bits(), r[(i, j)].re.to_bits());
                assert_eq!(back.r()[(i, j)].im.to_bits(), r[(i, j)].im.to_bits());
            }
        }
    }

    #[test]
    fn json_field_names_match_schema() {
        let state = CmpsState::new(CMat::zeros(1, 1), CMat::zeros(1, 1)).unwrap();
        let json = state.to_json().unwrap();
        for key in ["\"d\"", "\"Q_re\"", "\"Q_im\"", "\"R_re\"", "\"R_im\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
    }

    #[test]
    fn wrong_length_rejected_on_parse() {
        let json = r#"{"d": 2, "Q_re": [1.0], "Q_im": [], "R_re": [], "R_im": []}"#;
        assert!(matches!(
            CmpsState::from_json(json),
            Err(TomoError::Json(_)) | Err(TomoError::Parse { .. })
        ));
    }
}
