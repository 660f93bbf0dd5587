//! Text formatting of reals with 17 significant digits (C `%.17g` style),
//! enough to round-trip any f64 exactly.

/// Formats `v` like C's `%.17g`: 17 significant digits, fixed or scientific
/// notation depending on the decimal exponent, trailing zeros trimmed.
pub fn g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // %.17e first, then decide presentation from the exponent.
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("valid exponent");
    if exp < -4 || exp >= 17 {
        let m = trim_zeros(mantissa);
        format!("{}e{}{:02}", m, if exp < 0 { "-" } else { "+" }, exp.abs())
    } else {
        // Fixed notation with 17 significant digits total.
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v))
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}
