//! Chernoff-type interval estimates linking an observed count with its
//! expected value.
//!
//! With `beta = ln(1/eps)` and an observation `X`:
//!
//! ```text
//! lower = max(0, X - sqrt(2 beta X))
//! upper = X + beta/2 + sqrt(2 beta X + beta^2 / 4)
//! ```
//!
//! Each side fails with probability at most `eps`. No continuity correction
//! is applied.

use serde::{Deserialize, Serialize};

pub fn beta(eps: f64) -> f64 {
    (1.0 / eps).ln()
}

/// Lower bound on the expected value behind `observed`.
pub fn mean_lower(observed: f64, eps: f64) -> f64 {
    let x = observed.max(0.0);
    (x - (2.0 * beta(eps) * x).sqrt()).max(0.0)
}

/// Upper bound on the expected value behind `observed`.
pub fn mean_upper(observed: f64, eps: f64) -> f64 {
    let x = observed.max(0.0);
    let b = beta(eps);
    x + b / 2.0 + (2.0 * b * x + b * b / 4.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
}

impl BoundPair {
    pub fn new(observed: f64, eps: f64) -> Self {
        BoundPair {
            lower: mean_lower(observed, eps),
            upper: mean_upper(observed, eps),
            epsilon: eps,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Whether estimates use observed counts as-is or widen them by the bounds
/// above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatMode {
    MeanValue,
    Finite(f64),
}

impl StatMode {
    pub fn lower(self, observed: f64) -> f64 {
        match self {
            StatMode::MeanValue => observed,
            StatMode::Finite(eps) => mean_lower(observed, eps),
        }
    }

    pub fn upper(self, observed: f64) -> f64 {
        match self {
            StatMode::MeanValue => observed,
            StatMode::Finite(eps) => mean_upper(observed, eps),
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, StatMode::Finite(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    /// Smallest lambda with `exp(-(x - lambda)^2 / (x + lambda)) >= eps`, i.e.
    /// the inversion of the multiplicative Chernoff upper tail, by bisection.
    fn invert_upper_tail(x: f64, eps: f64) -> f64 {
        let target = eps.ln();
        let f = |lam: f64| -(x - lam).powi(2) / (x + lam) - target;
        let (mut lo, mut hi) = (0.0, x);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn empty_observation() {
        assert_eq!(mean_lower(0.0, 1e-10), 0.0);
        assert_eq!(mean_lower(0.0, 0.3), 0.0);
        // beta = 1: 0 + 0.5 + sqrt(0.25)
        assert_relative_eq!(mean_upper(0.0, (-1.0f64).exp()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn table_scale_bounds() {
        let eps = 1e-10;
        let l = mean_lower(53046.0, eps);
        let u = mean_upper(53046.0, eps);
        assert_relative_eq!(l, 51483.03, epsilon = 0.01);
        assert_relative_eq!(u, 54620.52, epsilon = 0.01);
        // independent inversion of the tail lands within 0.1%
        let inverted = invert_upper_tail(53046.0, eps);
        assert_relative_eq!(l, inverted, max_relative = 1e-3);
    }

    #[test]
    fn poisson_coverage_at_one_percent() {
        let lambda = 1000.0;
        let eps = 0.01;
        let trials = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pois = Poisson::new(lambda).unwrap();
        let (mut miss_lo, mut miss_hi) = (0usize, 0usize);
        for _ in 0..trials {
            let x: f64 = pois.sample(&mut rng);
            if lambda < mean_lower(x, eps) {
                miss_lo += 1;
            }
            if lambda > mean_upper(x, eps) {
                miss_hi += 1;
            }
        }
        assert!(miss_lo as f64 / trials as f64 <= 2.0 * eps, "{miss_lo}");
        assert!(miss_hi as f64 / trials as f64 <= 2.0 * eps, "{miss_hi}");
    }

    #[test]
    fn width_halves_when_count_quadruples() {
        let eps = 1e-6;
        let w = |x: f64| (x - mean_lower(x, eps)) / x;
        assert_relative_eq!(w(4.0e6) / w(1.0e6), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn mean_value_mode_is_identity() {
        assert_eq!(StatMode::MeanValue.lower(17.5), 17.5);
        assert_eq!(StatMode::MeanValue.upper(17.5), 17.5);
    }

    proptest! {
        #[test]
        fn sandwich(x in 0.0f64..1e12, eps in 1e-15f64..0.5) {
            let b = BoundPair::new(x, eps);
            prop_assert!(b.lower <= x && x <= b.upper);
            prop_assert!(b.lower >= 0.0);
        }

        #[test]
        fn monotone_in_observation(x in 0.0f64..1e9, dx in 0.0f64..1e6, eps in 1e-12f64..0.5) {
            prop_assert!(mean_lower(x + dx, eps) >= mean_lower(x, eps));
            prop_assert!(mean_upper(x + dx, eps) >= mean_upper(x, eps));
        }

        #[test]
        fn widens_as_eps_shrinks(x in 0.0f64..1e9, exp in 0.5f64..12.0, k in 1.01f64..3.0) {
            let eps = 10f64.powf(-exp);
            let tight = eps * k;
            prop_assert!(mean_lower(x, eps) <= mean_lower(x, tight));
            prop_assert!(mean_upper(x, eps) >= mean_upper(x, tight));
        }
    }
}
