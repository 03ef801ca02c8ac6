use std::cmp::Ordering;
use std::fmt;

/// Exact base-10 number: `mantissa * 10^-scale`.
#[derive(Clone, Copy, Debug)]
pub struct Decimal {
    pub mantissa: i128,
    pub scale: u32,
}

impl Decimal {
    fn rescaled(self, scale: u32) -> i128 {
        debug_assert!(scale >= self.scale);
        self.mantissa * 10i128.pow(scale - self.scale)
    }

    pub fn with_scale(self, scale: u32) -> Decimal {
        Decimal {
            mantissa: self.rescaled(scale),
            scale,
        }
    }

    /// Sum at the largest input scale.
    pub fn sum(values: &[Decimal]) -> Decimal {
        let scale = values.iter().map(|d| d.scale).max().unwrap_or(0);
        Decimal {
            mantissa: values.iter().map(|d| d.rescaled(scale)).sum(),
            scale,
        }
    }

    /// `self / n`, rounded half away from zero at the current scale.
    pub fn div_round(self, n: i128) -> Decimal {
        let q = self.mantissa / n;
        let r = self.mantissa % n;
        let mantissa = if 2 * r.abs() >= n.abs() {
            q + self.mantissa.signum() * n.signum()
        } else {
            q
        };
        Decimal {
            mantissa,
            scale: self.scale,
        }
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        self.rescaled(scale).cmp(&other.rescaled(scale))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.mantissa < 0 { "-" } else { "" };
        let digits = self.mantissa.unsigned_abs().to_string();
        if self.scale == 0 {
            return write!(f, "{sign}{digits}");
        }
        let scale = self.scale as usize;
        let padded = format!("{digits:0>width$}", width = scale + 1);
        let (int, frac) = padded.split_at(padded.len() - scale);
        write!(f, "{sign}{int}.{frac}")
    }
}

/// A leading decimal number followed by an optional unit suffix, as in
/// `"3 miles"`.
#[derive(Clone, Debug)]
pub struct Quantity {
    pub value: Decimal,
    /// Raw text after the number, including its leading whitespace.
    pub suffix: String,
}

impl Quantity {
    pub fn parse(text: &str) -> Option<Quantity> {
        let text = text.trim();
        let bytes = text.as_bytes();
        let mut i = 0;
        let negative = match bytes.first() {
            Some(b'-') => {
                i += 1;
                true
            }
            Some(b'+') => {
                i += 1;
                false
            }
            _ => false,
        };
        let mut mantissa: i128 = 0;
        let mut digits = 0usize;
        let mut scale = 0u32;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            mantissa = mantissa.checked_mul(10)?.checked_add((bytes[i] - b'0') as i128)?;
            digits += 1;
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                mantissa = mantissa.checked_mul(10)?.checked_add((bytes[i] - b'0') as i128)?;
                digits += 1;
                scale += 1;
                i += 1;
            }
        }
        if digits == 0 {
            return None;
        }
        if negative {
            mantissa = -mantissa;
        }
        Some(Quantity {
            value: Decimal { mantissa, scale },
            suffix: text[i..].to_string(),
        })
    }

    /// Unit compared case-insensitively with whitespace collapsed.
    pub fn unit(&self) -> String {
        crate::kb::normalize_ws(&self.suffix).to_lowercase()
    }

    pub fn format(value: Decimal, suffix: &str) -> String {
        format!("{value}{suffix}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_number_and_unit() {
        let q = Quantity::parse("3 miles").unwrap();
        assert_eq!(q.value, Decimal { mantissa: 3, scale: 0 });
        assert_eq!(q.unit(), "miles");
        let q = Quantity::parse("-2.50km").unwrap();
        assert_eq!(q.value.to_string(), "-2.50");
        assert_eq!(q.unit(), "km");
        assert!(Quantity::parse("miles").is_none());
        assert!(Quantity::parse("").is_none());
        assert_eq!(Quantity::parse("7").unwrap().unit(), "");
    }

    #[test]
    fn exact_arithmetic() {
        let a = Quantity::parse("1.5").unwrap().value;
        let b = Quantity::parse("2").unwrap().value;
        assert_eq!(Decimal::sum(&[a, b]).to_string(), "3.5");
        assert_eq!(Decimal::sum(&[a, b]).div_round(2).to_string(), "1.8");
        let neg = Decimal { mantissa: -5, scale: 0 };
        assert_eq!(neg.div_round(2).to_string(), "-3");
        assert_eq!(Decimal { mantissa: 5, scale: 3 }.to_string(), "0.005");
        assert!(a < b);
        assert_eq!(Decimal { mantissa: 20, scale: 1 }, b);
    }
}
