//! Thin floating-point helpers over `libm` so the crate builds without `std`.

/// Base-2 logarithm.
#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// Natural logarithm.
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Base-10 logarithm.
#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn powf(base: f64, exp: f64) -> f64 {
    libm::pow(base, exp)
}

/// Converts a decibel quantity to its linear ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    powf(10.0, db / 10.0)
}

/// Converts a linear ratio to decibels.
#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * log10(lin)
}

/// Converts dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    powf(10.0, (dbm - 30.0) / 10.0)
}

/// Relative error |a - b| / max(|a|, |b|, floor).
#[inline]
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    abs(a - b) / abs(a).max(abs(b)).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trips() {
        assert!(abs(db_to_linear(30.0) - 1000.0) < 1e-9);
        assert!(abs(linear_to_db(100.0) - 20.0) < 1e-12);
        assert!(rel_err(dbm_to_watts(22.0), 0.15848931924611134, 0.0) < 1e-14);
        assert!(rel_err(dbm_to_watts(20.0), 0.1, 0.0) < 1e-14);
    }

    #[test]
    fn log2_matches_std() {
        for &x in &[0.5, 1.0, 2.0, 1001.0, 3.7e9] {
            assert!((log2(x) - f64::log2(x)).abs() < 1e-12);
        }
    }
}
