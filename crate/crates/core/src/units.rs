//! Engineering-notation values used by the netlist format.
//!
//! A value token is a decimal number, optionally with an exponent, followed
//! by at most one suffix (case-insensitive):
//!
//! | suffix | scale  |   | suffix | scale |
//! |--------|--------|---|--------|-------|
//! | `f`    | 1e-15  |   | `k`    | 1e3   |
//! | `p`    | 1e-12  |   | `meg`  | 1e6   |
//! | `n`    | 1e-9   |   | `g`    | 1e9   |
//! | `u`    | 1e-6   |   | `mm`   | 1e-3  |
//! | `m`    | 1e-3   |   | `um`   | 1e-6  |
//!
//! Scaling is applied in the decimal exponent before conversion, so
//! `0.18p` yields the correctly rounded `1.8e-13` rather than `0.18 * 1e-12`.

use alloc::format;
use alloc::string::String;

/// Decimal exponent carried by a suffix, or `None` if the suffix is unknown.
pub fn suffix_exponent(suffix: &str) -> Option<i32> {
    let exp = match suffix.to_ascii_lowercase().as_str() {
        "" => 0,
        "f" => -15,
        "p" => -12,
        "n" => -9,
        "u" | "um" => -6,
        "m" | "mm" => -3,
        "k" => 3,
        "meg" => 6,
        "g" => 9,
        _ => return None,
    };
    Some(exp)
}

/// Splits `token` into (mantissa without exponent, decimal exponent, suffix).
fn split_number(token: &str) -> Option<(&str, i32, &str)> {
    let bytes = token.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    let mut digits = 0;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
        digits += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
    }
    if digits == 0 || i == digits_start {
        return None;
    }
    let mantissa_end = i;
    let mut exponent = 0i32;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits_start {
            exponent = token[i + 1..j].parse().ok()?;
            i = j;
        }
    }
    Some((&token[..mantissa_end], exponent, &token[i..]))
}

/// Parses a value token into SI base units.
pub fn parse_value(token: &str) -> Option<f64> {
    let (mantissa, exponent, suffix) = split_number(token)?;
    let scale = suffix_exponent(suffix)?;
    let text = format!("{}e{}", mantissa, exponent.checked_add(scale)?);
    let value: f64 = text.parse().ok()?;
    value.is_finite().then_some(value)
}

/// Parses an angle in degrees (optional `deg` suffix) and returns radians.
pub fn parse_angle(token: &str) -> Option<f64> {
    let lower = token.to_ascii_lowercase();
    let number = lower.strip_suffix("deg").unwrap_or(&lower);
    parse_value(number).map(f64::to_radians)
}

/// Formats a value with the shortest text that parses back to the same `f64`.
pub fn format_value(value: f64) -> String {
    let magnitude = value.abs();
    if value == 0.0 || (1e-3..1e6).contains(&magnitude) {
        format!("{}", value)
    } else {
        format!("{:e}", value)
    }
}

/// Formats an angle given in radians as degrees.
pub fn format_angle(radians: f64) -> String {
    format_value(radians.to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn suffixes_resolve() {
        assert_eq!(parse_value("14k"), Some(14000.0));
        assert_eq!(parse_value("0.18p"), Some(1.8e-13));
        assert_eq!(parse_value("230n"), Some(230e-9));
        assert_eq!(parse_value("1.6mm"), Some(1.6e-3));
        assert_eq!(parse_value("35um"), Some(35e-6));
        assert_eq!(parse_value("2MEG"), Some(2e6));
        assert_eq!(parse_value("2M"), Some(2e-3));
        assert_eq!(parse_value("3e-6"), Some(3e-6));
        assert_eq!(parse_value("1e3k"), Some(1e6));
        assert_eq!(parse_value("-2.5"), Some(-2.5));
        assert_eq!(parse_value(".5"), Some(0.5));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "k", "1x", "1.2.3", "1e", "abc", "1kk", "-", "."] {
            assert_eq!(parse_value(bad), None, "{bad}");
        }
    }

    #[test]
    fn angles_are_degrees() {
        assert_eq!(parse_angle("90"), Some(core::f64::consts::FRAC_PI_2));
        assert_eq!(parse_angle("45deg"), Some(core::f64::consts::FRAC_PI_4));
    }

    const SUFFIXES: [(&str, f64); 12] = [
        ("", 1.0),
        ("f", 1e-15),
        ("p", 1e-12),
        ("n", 1e-9),
        ("u", 1e-6),
        ("m", 1e-3),
        ("k", 1e3),
        ("meg", 1e6),
        ("g", 1e9),
        ("mm", 1e-3),
        ("um", 1e-6),
        ("K", 1e3),
    ];

    proptest! {
        #[test]
        fn suffix_scaling_is_total(mantissa in 1u32..1_000_000, frac in 0u32..1000, idx in 0usize..12) {
            let (suffix, scale) = SUFFIXES[idx];
            let token = format!("{mantissa}.{frac:03}{suffix}");
            let parsed = parse_value(&token).unwrap();
            let expected = (mantissa as f64 + frac as f64 / 1000.0) * scale;
            prop_assert!((parsed - expected).abs() <= 1e-15 * expected.abs());
        }

        #[test]
        fn formatting_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            prop_assert_eq!(parse_value(&format_value(v)), Some(v));
        }
    }
}
