use std::f64::consts::PI;

/// Maps an angle to `(-pi, pi]`.
pub fn normalize(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn deg(value: f64) -> f64 {
    value.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize(0.0), 0.0);
        assert_eq!(normalize(PI), PI);
        assert!((normalize(-PI) - PI).abs() < 1e-15);
        assert!((normalize(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize(-7.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        for k in -20..20 {
            let a = normalize(0.3 + k as f64 * 2.0 * PI);
            assert!((a - 0.3).abs() < 1e-12);
        }
    }
}
