//! Small serialization helpers shared by the CSV/JSON interfaces.
//!
//! All floating-point fields are written with 17 significant digits so that
//! emitted files round-trip to the exact `f64` bit pattern and reruns of the
//! same experiment produce byte-identical output.

/// Format a float with 17 significant digits in scientific notation.
///
/// `NaN` and infinities are written literally (`nan`, `inf`, `-inf`); they
/// only appear in diagnostic columns, never in quantities under contract.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{:.16e}", x)
    }
}

/// Format an optional float, writing the empty string for `None`.
pub fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Parse one float field, reporting the CSV line number on failure.
pub fn parse_f64_field(field: &str, line: usize) -> crate::Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| crate::Error::CsvParse {
            line,
            msg: format!("bad float {field:?}: {e}"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_round_trips_doubles() {
        for &x in &[0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 1.05] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "round trip failed for {s}");
        }
    }

    #[test]
    fn fmt_handles_non_finite() {
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_opt_f64(None), "");
    }
}
