//! Fixed-precision decimal formatting for tabular outputs.

/// Formats `x` in plain decimal notation with `digits` significant digits.
pub fn sig_decimal(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Rounds `x` to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.max(1) - 1, x).parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(sig_decimal(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(sig_decimal(0.00150597105956789, 12), "0.00150597105957");
        assert_eq!(sig_decimal(-42.0, 12), "-42.0000000000");
        assert_eq!(sig_decimal(0.0, 12), "0");
        assert_eq!(sig_decimal(123456789012345.0, 12), "123456789012345");
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.123456789012345, 12), 0.123456789012);
        assert_eq!(round_sig(2.0, 12), 2.0);
    }
}
