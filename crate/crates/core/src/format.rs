//! Number rendering shared by emitted code, linearized tables and QA answers.

use serde_json::Value;

/// Rounds to at most six significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    // Going through the exponent form avoids the drift of pow-based rounding.
    format!("{v:.5e}").parse().unwrap_or(v)
}

/// Shortest decimal that round-trips the six-significant-digit value.
///
/// Integral values print without a fractional part, negative zero prints as
/// `0`, and magnitudes outside `[1e-6, 1e16)` use exponent notation.
pub fn fmt_num(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        return "0".to_string();
    }
    if !r.is_finite() {
        return r.to_string();
    }
    let a = r.abs();
    if !(1e-6..1e16).contains(&a) {
        return format!("{r:e}");
    }
    format!("{r}")
}

/// JSON number for an emitted value: integral values become JSON integers.
pub fn json_num(v: f64) -> Value {
    let r = round_sig(v);
    if r.fract() == 0.0 && r.abs() < 9.0e15 {
        Value::from(r as i64)
    } else {
        serde_json::Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_trailing_zeros() {
        assert_eq!(fmt_num(3.1400000), "3.14");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-0.0), "0");
    }

    #[test]
    fn caps_significant_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_num(1234567.0), "1234570");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(-98765.4321), "-98765.4");
    }

    #[test]
    fn extreme_magnitudes_use_exponents() {
        assert_eq!(fmt_num(1.5e20), "1.5e20");
        assert_eq!(fmt_num(2.5e-9), "2.5e-9");
    }

    #[test]
    fn json_numbers() {
        assert_eq!(json_num(4.0).to_string(), "4");
        assert_eq!(json_num(0.1 + 0.2).to_string(), "0.3");
    }
}
