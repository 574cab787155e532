//! Threshold-detector click model for two weak coherent pulses meeting at a
//! balanced beam splitter.
//!
//! With `A = eta_a mu_a`, `B = eta_b mu_b` and relative phase `delta` the
//! port intensities are `I± = (A + B ± 2V sqrt(AB) cos delta) / 2`; detector
//! `k` clicks with probability `1 - (1 - d_k) exp(-I_k eta_det_k eta_win)`.

use std::f64::consts::PI;

use crate::model::ChannelConfig;

/// Detector-side parameters of the click model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub det_eff: [f64; 2],
    pub window_eff: f64,
    /// Noise click probability per window, per detector.
    pub dark: [f64; 2],
    /// Fringe visibility of the interference.
    pub visibility: f64,
}

impl Detection {
    pub fn from_channel(ch: &ChannelConfig) -> Self {
        Detection {
            det_eff: ch.det_eff,
            window_eff: ch.window_eff,
            dark: [ch.dark_probability(0), ch.dark_probability(1)],
            visibility: ch.visibility(),
        }
    }

    /// Unit efficiency, no noise, perfect visibility.
    pub fn ideal() -> Self {
        Detection {
            det_eff: [1.0, 1.0],
            window_eff: 1.0,
            dark: [0.0, 0.0],
            visibility: 1.0,
        }
    }

    /// Probability that one photon reaching port `k` is registered.
    pub fn photon_eff(&self, k: usize) -> f64 {
        self.det_eff[k] * self.window_eff
    }
}

pub fn port_intensities(mu_a: f64, mu_b: f64, eta_a: f64, eta_b: f64, delta: f64, visibility: f64) -> [f64; 2] {
    let a = eta_a * mu_a;
    let b = eta_b * mu_b;
    let cross = visibility * (a * b).sqrt() * delta.cos();
    [(0.5 * (a + b) + cross).max(0.0), (0.5 * (a + b) - cross).max(0.0)]
}

/// Click probability of each detector, clicks of the two being independent.
pub fn click_probabilities(mu_a: f64, mu_b: f64, eta_a: f64, eta_b: f64, delta: f64, det: &Detection) -> [f64; 2] {
    let i = port_intensities(mu_a, mu_b, eta_a, eta_b, delta, det.visibility);
    [0, 1].map(|k| {
        let none = (1.0 - det.dark[k]) * (-i[k] * det.photon_eff(k)).exp();
        (1.0 - none).clamp(0.0, 1.0)
    })
}

/// Probability that only detector 0, resp. only detector 1, clicks.
pub fn herald_probabilities(click: [f64; 2]) -> [f64; 2] {
    [click[0] * (1.0 - click[1]), click[1] * (1.0 - click[0])]
}

const QUAD: usize = 64;

/// Heralding probabilities averaged over `delta` uniform on `[lo, hi]`
/// (midpoint rule).
pub fn averaged_herald(mu_a: f64, mu_b: f64, eta_a: f64, eta_b: f64, lo: f64, hi: f64, det: &Detection) -> [f64; 2] {
    let mut acc = [0.0; 2];
    let step = (hi - lo) / QUAD as f64;
    for q in 0..QUAD {
        let delta = lo + (q as f64 + 0.5) * step;
        let h = herald_probabilities(click_probabilities(mu_a, mu_b, eta_a, eta_b, delta, det));
        acc[0] += h[0];
        acc[1] += h[1];
    }
    acc.map(|x| x / QUAD as f64)
}

/// Heralding probabilities for independently phase-randomised pulses.
pub fn phase_averaged_herald(mu_a: f64, mu_b: f64, eta_a: f64, eta_b: f64, det: &Detection) -> [f64; 2] {
    averaged_herald(mu_a, mu_b, eta_a, eta_b, 0.0, 2.0 * PI, det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn destructive_port_is_dark() {
        let p = click_probabilities(0.1, 0.1, 0.01, 0.01, 0.0, &Detection::ideal());
        assert!(p[0] > 0.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn pi_swaps_ports() {
        let det = Detection {
            det_eff: [0.6, 0.6],
            window_eff: 0.65,
            dark: [1e-6, 1e-6],
            visibility: 0.94,
        };
        let a = click_probabilities(0.3, 0.2, 0.05, 0.08, 0.4, &det);
        let b = click_probabilities(0.3, 0.2, 0.05, 0.08, 0.4 + PI, &det);
        assert_relative_eq!(a[0], b[1], max_relative = 1e-12);
        assert_relative_eq!(a[1], b[0], max_relative = 1e-12);
    }

    #[test]
    fn dark_floor() {
        let det = Detection {
            dark: [3e-7, 5e-7],
            ..Detection::ideal()
        };
        let p = click_probabilities(1e-12, 1e-12, 1.0, 1.0, 1.0, &det);
        assert_relative_eq!(p[0], 3e-7, max_relative = 1e-4);
        assert_relative_eq!(p[1], 5e-7, max_relative = 1e-4);
    }

    #[test]
    fn small_mu_visibility_tracks_cosine() {
        for delta in [0.0, 0.7, 1.3, 2.2, 3.0] {
            let p = click_probabilities(1e-6, 1e-6, 1.0, 1.0, delta, &Detection::ideal());
            let v = (p[0] - p[1]) / (p[0] + p[1]);
            assert!((v - f64::cos(delta)).abs() < 1e-3, "{delta}: {v}");
        }
    }

    #[test]
    fn probabilities_bounded() {
        for &mu in &[0.0, 0.1, 10.0, 1e3] {
            let p = click_probabilities(mu, mu, 1.0, 1.0, 0.3, &Detection::ideal());
            assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn one_sided_average_is_phase_free() {
        let det = Detection::ideal();
        let avg = phase_averaged_herald(0.0, 0.4, 1.0, 0.01, &det);
        let fixed = herald_probabilities(click_probabilities(0.0, 0.4, 1.0, 0.01, 0.0, &det));
        assert_relative_eq!(avg[0], fixed[0], max_relative = 1e-12);
    }
}
