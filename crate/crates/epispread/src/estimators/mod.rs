//! Whole-population infected-count estimators working from a sub-sample.
//!
//! Four families: inverse-probability scaling of a sub-sample simulation
//! (scale), visit-density modeling (density), the first-hop graph-cut view
//! (pollspreader) and the recursive susceptible view with lower/upper
//! exponents (pollsusceptible).

mod density;
mod exponents;
mod pollspreader;
mod pollsusceptible;
mod scale;

pub use density::{density_estimate, GridModel};
pub use exponents::{compute_exponents, estimate_p_min, BoundExponents};
pub use pollspreader::pollspreader_estimate;
pub use pollsusceptible::{calc_prob_inf, calc_prob_transmission, pollsusceptible_estimate};
pub use scale::scale_estimate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which estimator produced a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Scale,
    Density,
    Pollspreader,
    PollsusLower,
    PollsusUpper,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Scale => "scale",
            Method::Density => "density",
            Method::Pollspreader => "pollspreader",
            Method::PollsusLower => "pollsus_lower",
            Method::PollsusUpper => "pollsus_upper",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimator provenance attached to a series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub p_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_u: Option<f64>,
    /// False when the upper-bound exponent was infeasible and the series is a
    /// flagged heuristic rather than a guaranteed bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasible: Option<bool>,
}

/// Estimated expected infected count per evaluation timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub method: Method,
    pub times: Vec<i64>,
    pub values: Vec<f64>,
    pub meta: SeriesMeta,
}

impl EstimateSeries {
    pub fn new(method: Method, times: Vec<i64>, values: Vec<f64>, meta: SeriesMeta) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::TimestampMismatch);
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("evaluation timestamps must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("estimates must be finite and non-negative"));
        }
        Ok(EstimateSeries { method, times, values, meta })
    }

    pub fn value_at(&self, t: i64) -> Option<f64> {
        self.times.iter().position(|&x| x == t).map(|i| self.values[i])
    }

    /// CSV rows `day,value,method,feasible`, one per timestamp.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["day", "value", "method", "feasible"])?;
        let feasible = self.meta.feasible.unwrap_or(true);
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([
                format_day(*t),
                format!("{v}"),
                self.method.as_str().to_string(),
                feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seconds to days, printed without a trailing `.0` for whole days.
pub(crate) fn format_day(t: i64) -> String {
    let day = t as f64 / 86_400.0;
    if day.fract() == 0.0 {
        format!("{}", day as i64)
    } else {
        format!("{day}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_rejects_mismatched_grids() {
        assert!(matches!(
            EstimateSeries::new(Method::Scale, vec![0, 1], vec![1.0], SeriesMeta::default()),
            Err(Error::TimestampMismatch)
        ));
    }

    #[test]
    fn series_rejects_negative_values() {
        assert!(EstimateSeries::new(
            Method::Scale,
            vec![0],
            vec![-1.0],
            SeriesMeta::default()
        )
        .is_err());
    }

    #[test]
    fn csv_has_expected_columns() {
        let s = EstimateSeries::new(
            Method::PollsusLower,
            vec![0, 86_400],
            vec![2.0, 3.5],
            SeriesMeta { p_s: 0.5, feasible: Some(true), ..Default::default() },
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("day,value,method,feasible\n"));
        assert!(text.contains("1,3.5,pollsus_lower,true"));
    }
}
