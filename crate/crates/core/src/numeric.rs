//! Small scalar helpers shared by the estimators.

use statrs::distribution::{ContinuousCDF, Normal};

/// Lower/upper clip applied to every probability-scale prediction.
pub const PROB_CLIP: f64 = 1e-6;

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959964;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Clips into `[PROB_CLIP, 1 - PROB_CLIP]`.
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard normal quantile for a two-sided interval at `level` (e.g. 0.95).
/// The 95% case returns the pinned constant so default intervals are bit-stable.
pub fn z_for_level(level: f64) -> f64 {
    if level == 0.95 {
        return Z_975;
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + level / 2.0)
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_logit_inverse() {
        for &x in &[-30.0, -2.0, 0.0, 0.7, 8.0] {
            assert!((logit(expit(x)) - x).abs() < 1e-8 * (1.0 + x.abs()));
        }
        assert_eq!(expit(0.0), 0.5);
    }

    #[test]
    fn z_levels() {
        assert_eq!(z_for_level(0.95), Z_975);
        assert!((z_for_level(0.90) - 1.644854).abs() < 1e-6);
    }

    #[test]
    fn quantile_type7() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-12);
    }
}
