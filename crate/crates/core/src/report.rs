//! Structured verdicts for inequality checks.
//!
//! Every check in this crate reports raw margins so an acceptance threshold
//! can be re-judged by the caller; `verdict` is the check's own judgement at
//! its declared tolerance.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Outcome of a single inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Location or datum at which the worst margin was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Witness {
    /// A point index of the space.
    Point(usize),
    /// A pair of indices (edge, coupling cell, sample pair).
    Pair(usize, usize),
    /// A time on the grid of a trajectory or curve.
    Time(Margin),
    /// A scalar argument (grid value r, parameter, ...).
    Scalar(Margin),
    /// A whole field on the space.
    Field(Vec<Margin>),
    /// A scalar triple (r0, r1, t) on the unit interval.
    Triple(Margin, Margin, Margin),
}

impl Witness {
    pub fn time(t: f64) -> Self {
        Witness::Time(Margin(t))
    }
    pub fn scalar(v: f64) -> Self {
        Witness::Scalar(Margin(v))
    }
    pub fn field(v: &[f64]) -> Self {
        Witness::Field(v.iter().copied().map(Margin).collect())
    }
    pub fn triple(r0: f64, r1: f64, t: f64) -> Self {
        Witness::Triple(Margin(r0), Margin(r1), Margin(t))
    }
}

/// An `f64` that serializes as a decimal string with 17 significant digits,
/// enough to round-trip the value exactly.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Margin(pub f64);

impl Serialize for Margin {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.16e}", self.0))
    }
}

impl<'de> Deserialize<'de> for Margin {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<f64>().map(Margin).map_err(D::Error::custom)
    }
}

/// Structured verdict of an inequality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    /// Which inequality was checked.
    pub name: String,
    pub verdict: Verdict,
    /// Worst signed margin (nonnegative means the inequality held there).
    pub margin: Margin,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Per-time or per-sample residual trajectory, in grid order.
    pub residuals: Vec<Margin>,
    /// Extra key/value diagnostics (step sizes, tolerances, cross-checks).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<(String, Margin)>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, verdict: Verdict, margin: f64) -> Self {
        CheckReport {
            name: name.into(),
            verdict,
            margin: Margin(margin),
            witness: None,
            residuals: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_witness(mut self, w: Witness) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn with_residuals(mut self, r: Vec<f64>) -> Self {
        self.residuals = r.into_iter().map(Margin).collect();
        self
    }

    pub fn with_note(mut self, key: impl Into<String>, value: f64) -> Self {
        self.notes.push((key.into(), Margin(value)));
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    /// Look up a diagnostic by key.
    pub fn note(&self, key: &str) -> Option<f64> {
        self.notes.iter().find(|(k, _)| k == key).map(|(_, v)| v.0)
    }
}

/// Serialize a batch of reports to a JSON array with stable field order.
pub fn export_reports(reports: &[CheckReport]) -> crate::error::Result<String> {
    serde_json::to_string_pretty(reports)
        .map_err(|e| crate::error::Error::Parse(format!("report serialization: {e}")))
}

/// Parse a JSON document produced by [`export_reports`].
pub fn import_reports(json: &str) -> crate::error::Result<Vec<CheckReport>> {
    serde_json::from_str(json).map_err(|e| crate::error::Error::Parse(format!("report parse: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_list_is_empty_array() {
        assert_eq!(export_reports(&[]).unwrap(), "[]");
    }

    #[test]
    fn margin_string_roundtrips_exactly() {
        for &x in &[0.0, 1.0 / 3.0, -2.718281828459045e-13, 6.02e23, f64::MIN_POSITIVE] {
            let s = format!("{:.16e}", x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "failed for {x}");
        }
    }

    #[test]
    fn report_roundtrip() {
        let r = CheckReport::new("demo", Verdict::Pass, 1.0 / 3.0)
            .with_witness(Witness::Point(3))
            .with_residuals(vec![0.1, 0.25])
            .with_note("tol", 1e-10);
        let json = export_reports(std::slice::from_ref(&r)).unwrap();
        let back = import_reports(&json).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].name, "demo");
        assert_eq!(back[0].margin.0, r.margin.0);
        assert_eq!(back[0].residuals[1].0, 0.25);
        assert_eq!(back[0].note("tol"), Some(1e-10));
        assert!(json.contains("verdict"));
    }
}
