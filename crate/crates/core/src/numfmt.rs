//! `%g`-style number formatting shared by the CSV writers.

/// Formats `x` with `digits` significant digits, dropping trailing zeros, and
/// switching to exponent notation outside `[1e-5, 10^digits)`. Infinities print
/// as `inf` / `-inf`.
pub fn format_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::format_sig;

    #[test]
    fn matches_printf_g() {
        assert_eq!(format_sig(0.20229639, 9), "0.20229639");
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(0.5, 9), "0.5");
        assert_eq!(
            format_sig(std::f64::consts::FRAC_1_SQRT_2, 9),
            "0.707106781"
        );
        assert_eq!(format_sig(123456789.0, 9), "123456789");
        assert_eq!(format_sig(1234567890.0, 9), "1.23456789e+09");
        assert_eq!(format_sig(1.5e-7, 9), "1.5e-07");
        assert_eq!(format_sig(-2.25, 9), "-2.25");
        assert_eq!(format_sig(f64::INFINITY, 9), "inf");
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(0.0001, 9), "0.0001");
    }
}
