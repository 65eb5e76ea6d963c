use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{config_err, Result};
use crate::scalar::Real;

/// `γ(x)_i = sin(x / 10000^{i/d})` for odd `i`, `cos(...)` for even `i`, `i = 1..=d`.
pub fn sinusoidal_embed<T: Real>(x: f64, d: usize) -> Result<Vec<T>> {
    if d < 2 || !d.is_multiple_of(2) {
        return Err(config_err(format!("embedding dimension must be even and >= 2, got {d}")));
    }
    Ok((1..=d)
        .map(|i| {
            let arg = x / 10000f64.powf(i as f64 / d as f64);
            T::lit(if i % 2 == 1 { arg.sin() } else { arg.cos() })
        })
        .collect())
}

/// Scaled conditioning inputs in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioning {
    pub time: f64,
    pub coefficient: Option<f64>,
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// Maps physical time and coefficient onto `[0, 1]` using the training ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningPolicy {
    /// Physical time mapped to 1.
    pub time_scale: f64,
    /// Coefficient training range; `None` when the equation has no coefficient.
    pub coefficient_range: Option<(f64, f64)>,
}

impl ConditioningPolicy {
    /// Returns the scaled conditioning and whether any value had to be clamped.
    pub fn scale(&self, time: f64, coefficient: f64) -> (Conditioning, bool) {
        let mut clamped = false;
        let mut unit = |v: f64| {
            if !(0.0..=1.0).contains(&v) {
                clamped = true;
            }
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        };
        let time = unit(time / self.time_scale);
        let coefficient = self.coefficient_range.map(|(lo, hi)| {
            if hi > lo {
                unit((coefficient - lo) / (hi - lo))
            } else {
                0.0
            }
        });
        if clamped && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("conditioning outside the training range was clamped to [0, 1]");
        }
        (Conditioning { time, coefficient }, clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_zero() {
        let e: Vec<f64> = sinusoidal_embed(0.0, 8).unwrap();
        for (idx, v) in e.iter().enumerate() {
            let i = idx + 1;
            assert_eq!(*v, if i % 2 == 1 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn embedding_reference_value() {
        let e: Vec<f64> = sinusoidal_embed(1.0, 4).unwrap();
        // i = 2: cos(1 / 10000^{0.5}) = cos(0.01)
        assert!((e[1] - 0.01f64.cos()).abs() < 1e-15);
        assert!((e[1] - 0.99995).abs() < 1e-6);
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(sinusoidal_embed::<f64>(0.3, 5).is_err());
        assert!(sinusoidal_embed::<f64>(0.3, 0).is_err());
    }

    #[test]
    fn clamps_and_flags() {
        let p = ConditioningPolicy {
            time_scale: 2.0,
            coefficient_range: Some((0.1, 2.5)),
        };
        let (c, flag) = p.scale(1.0, 1.3);
        assert!(!flag);
        assert!((c.time - 0.5).abs() < 1e-15);
        assert!((c.coefficient.unwrap() - 0.5).abs() < 1e-12);
        let (c, flag) = p.scale(3.0, 0.0);
        assert!(flag);
        assert_eq!(c.time, 1.0);
        assert_eq!(c.coefficient, Some(0.0));
    }

    proptest::proptest! {
        #[test]
        fn embedding_components_bounded(x in -1e4f64..1e4, half in 1usize..64) {
            let e: Vec<f64> = sinusoidal_embed(x, 2 * half).unwrap();
            proptest::prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
