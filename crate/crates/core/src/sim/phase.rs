//! Interferometric phase drift and its dual-band estimation.
//!
//! The fibre drift is a random walk in optical path length `L`, so the two
//! wavelengths see `phi_i = 2 pi L / lambda_i`. A bright reference at
//! `lambda1` is read out in four relative-phase settings every estimation
//! window; its unwrapped phase is rescaled to `lambda2`, and the unknown
//! constant between the two bands is re-anchored from dim `lambda2`
//! reference counts once per refresh interval.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four relative phases of the reference slices.
pub const REFERENCE_PHASES: [f64; 4] = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    /// Phase diffusion at `lambda1`, rad^2/s.
    pub diffusion: f64,
    /// Deterministic phase drift at `lambda1`, rad/s.
    #[serde(default)]
    pub drift_rate: f64,
    pub lambda1_nm: f64,
    pub lambda2_nm: f64,
    pub refresh_interval_s: f64,
    /// Expected strong-reference counts per phase slice per window.
    pub reference_rate: f64,
    /// Expected dim-reference counts per phase slice per window.
    pub dim_rate: f64,
    /// Length of one estimation window, seconds.
    pub window_s: f64,
}

impl Default for PhaseModel {
    fn default() -> Self {
        PhaseModel {
            diffusion: 10.0,
            drift_rate: 0.0,
            lambda1_nm: 1548.51,
            lambda2_nm: 1550.12,
            refresh_interval_s: 0.5,
            reference_rate: 2000.0,
            dim_rate: 20.0,
            window_s: 1e-3,
        }
    }
}

impl PhaseModel {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.diffusion >= 0.0) {
            v.push(format!("diffusion must be >= 0 (got {})", self.diffusion));
        }
        if !(self.lambda1_nm > 0.0 && self.lambda2_nm > 0.0) || self.lambda1_nm == self.lambda2_nm {
            v.push(format!(
                "wavelengths must be positive and distinct (got {}, {})",
                self.lambda1_nm, self.lambda2_nm
            ));
        }
        for (name, x) in [
            ("refresh_interval_s", self.refresh_interval_s),
            ("window_s", self.window_s),
        ] {
            if !(x > 0.0) {
                v.push(format!("{name} must be > 0 (got {x})"));
            }
        }
        for (name, x) in [("reference_rate", self.reference_rate), ("dim_rate", self.dim_rate)] {
            if !(x >= 0.0) {
                v.push(format!("{name} must be >= 0 (got {x})"));
            }
        }
        if !self.drift_rate.is_finite() {
            v.push("drift_rate must be finite".into());
        }
        v
    }

    fn blocks_per_refresh(&self) -> usize {
        ((self.refresh_interval_s / self.window_s).round() as usize).max(1)
    }
}

/// Fibre phase at both wavelengths, one sample per estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub window_s: f64,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

/// Random walk in path length covering `duration_s`.
pub fn phase_walk<R: Rng>(model: &PhaseModel, duration_s: f64, rng: &mut R) -> Result<PhaseTrace> {
    if !(duration_s > 0.0) {
        return Err(Error::Domain(format!("duration must be > 0 (got {duration_s})")));
    }
    let bad = model.violations();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let blocks = ((duration_s / model.window_s).ceil() as usize).max(1);
    let dt = model.window_s;
    let to_length = model.lambda1_nm / TAU;
    let step_sd = (model.diffusion * dt).sqrt() * to_length;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut length = 0.0;
    let mut phi1 = Vec::with_capacity(blocks);
    let mut phi2 = Vec::with_capacity(blocks);
    for k in 0..blocks {
        if k > 0 {
            length += model.drift_rate * dt * to_length;
            if step_sd > 0.0 {
                length += step_sd * normal.sample(rng);
            }
        }
        phi1.push(TAU * length / model.lambda1_nm);
        phi2.push(TAU * length / model.lambda2_nm);
    }
    Ok(PhaseTrace {
        window_s: dt,
        phi1,
        phi2,
    })
}

/// Reference detections per estimation window, one count per phase slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceCounts {
    pub strong: Vec<[u64; 4]>,
    pub dim: Vec<[u64; 4]>,
}

fn fringe_counts<R: Rng>(rate: f64, phase: f64, visibility: f64, rng: &mut R) -> [u64; 4] {
    REFERENCE_PHASES.map(|theta| {
        let mean = rate * (1.0 + visibility * (phase + theta).cos());
        if mean > 0.0 {
            Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        }
    })
}

/// Draws reference counts for a trace. `offset` is the unknown constant
/// between the quantum band's phase and the rescaled reference phase.
pub fn generate_references<R: Rng>(
    trace: &PhaseTrace,
    offset: f64,
    model: &PhaseModel,
    visibility: f64,
    rng: &mut R,
) -> ReferenceCounts {
    let mut strong = Vec::with_capacity(trace.phi1.len());
    let mut dim = Vec::with_capacity(trace.phi1.len());
    for (p1, p2) in trace.phi1.iter().zip(&trace.phi2) {
        strong.push(fringe_counts(model.reference_rate, *p1, visibility, rng));
        dim.push(fringe_counts(model.dim_rate, p2 + offset, visibility, rng));
    }
    ReferenceCounts { strong, dim }
}

/// Estimated quantum-band phase per window.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    pub phi2: Vec<f64>,
    /// The window had no strong-reference counts; the previous value is held.
    pub stale: Vec<bool>,
    /// Refresh blocks with no dim-reference counts (offset held).
    pub stale_offsets: usize,
}

/// Wraps to `(-pi, pi]`.
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

pub fn estimate_phase(refs: &ReferenceCounts, model: &PhaseModel) -> PhaseEstimate {
    let n = refs.strong.len();
    let ratio = model.lambda1_nm / model.lambda2_nm;
    let mut rel2 = Vec::with_capacity(n);
    let mut stale = Vec::with_capacity(n);
    let mut unwrapped = 0.0;
    let mut prev_raw: Option<f64> = None;
    for c in &refs.strong {
        if c.iter().all(|&x| x == 0) {
            stale.push(true);
        } else {
            let raw = (c[3] as f64 - c[1] as f64).atan2(c[0] as f64 - c[2] as f64);
            unwrapped = match prev_raw {
                None => raw,
                Some(p) => unwrapped + wrap(raw - p),
            };
            prev_raw = Some(raw);
            stale.push(false);
        }
        rel2.push(unwrapped * ratio);
    }

    let per = model.blocks_per_refresh();
    let mut phi2 = vec![0.0; n];
    let mut offset = 0.0;
    let mut stale_offsets = 0;
    for start in (0..n).step_by(per) {
        let end = (start + per).min(n);
        let (mut re, mut im) = (0.0, 0.0);
        for k in start..end {
            let d = refs.dim.get(k).copied().unwrap_or([0; 4]);
            let (x, y) = (d[0] as f64 - d[2] as f64, d[3] as f64 - d[1] as f64);
            let (s, c) = rel2[k].sin_cos();
            re += x * c + y * s;
            im += y * c - x * s;
        }
        if re == 0.0 && im == 0.0 {
            stale_offsets += 1;
        } else {
            offset = im.atan2(re);
        }
        for k in start..end {
            phi2[k] = rel2[k] + offset;
        }
    }
    PhaseEstimate {
        phi2,
        stale,
        stale_offsets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub rms: f64,
    pub max_abs: f64,
    /// `(1 - cos rms) / 2 + misalignment`.
    pub implied_qber: f64,
}

/// Compares an estimate with the true quantum-band phase.
pub fn residual_report(estimate: &[f64], truth: &[f64], misalignment: f64) -> ResidualReport {
    let n = estimate.len().min(truth.len()).max(1);
    let mut sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for (e, t) in estimate.iter().zip(truth) {
        let r = wrap(t - e);
        sq += r * r;
        max_abs = max_abs.max(r.abs());
    }
    let rms = (sq / n as f64).sqrt();
    ResidualReport {
        rms,
        max_abs,
        implied_qber: (1.0 - rms.cos()) / 2.0 + misalignment,
    }
}

/// Everything the session needs from the phase pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRun {
    /// True quantum-band phase (fibre phase plus band offset) per window.
    pub truth: Vec<f64>,
    pub estimate: PhaseEstimate,
    pub report: ResidualReport,
}

impl PhaseRun {
    /// Residual `truth - estimate` in window `k`; the last window is reused
    /// past the end.
    pub fn residual(&self, k: usize) -> f64 {
        let k = k.min(self.truth.len() - 1);
        wrap(self.truth[k] - self.estimate.phi2[k])
    }
}

pub fn run_phase_pipeline<R: Rng>(
    model: &PhaseModel,
    duration_s: f64,
    visibility: f64,
    misalignment: f64,
    rng: &mut R,
) -> Result<PhaseRun> {
    let trace = phase_walk(model, duration_s, rng)?;
    let offset = rng.random_range(-PI..PI);
    let refs = generate_references(&trace, offset, model, visibility, rng);
    let estimate = estimate_phase(&refs, model);
    let truth: Vec<f64> = trace.phi2.iter().map(|p| p + offset).collect();
    let report = residual_report(&estimate.phi2, &truth, misalignment);
    Ok(PhaseRun {
        truth,
        estimate,
        report,
    })
}

/// Time-multiplexed frame layout: an outer period split into reference and
/// quantum parts, each quantum part made of inner periods that again carry a
/// reference head and a quantum tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub system_clock_hz: f64,
    pub outer_period_s: f64,
    pub outer_quantum_s: f64,
    pub inner_period_s: f64,
    pub inner_quantum_s: f64,
    /// Share of quantum slots kept after dropping detections near the strong
    /// reference edges.
    pub guard_fraction: f64,
}

impl Schedule {
    /// 40 ms dim reference / 60 ms quantum per 100 ms; 400 ns / 600 ns per
    /// 1 us; 351 MHz effective.
    pub fn long_distance() -> Self {
        Schedule {
            system_clock_hz: 1e9,
            outer_period_s: 0.1,
            outer_quantum_s: 0.06,
            inner_period_s: 1e-6,
            inner_quantum_s: 600e-9,
            guard_fraction: 0.975,
        }
    }

    /// Dim reference merged into the quantum stream; 100 ns strong reference
    /// per 1 us; 900 MHz effective.
    pub fn short_distance() -> Self {
        Schedule {
            system_clock_hz: 1e9,
            outer_period_s: 0.1,
            outer_quantum_s: 0.1,
            inner_period_s: 1e-6,
            inner_quantum_s: 900e-9,
            guard_fraction: 1.0,
        }
    }

    pub fn duty_cycle(&self) -> f64 {
        (self.outer_quantum_s / self.outer_period_s)
            * (self.inner_quantum_s / self.inner_period_s)
            * self.guard_fraction
    }

    pub fn effective_clock_hz(&self) -> f64 {
        self.system_clock_hz * self.duty_cycle()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.system_clock_hz > 0.0) {
            v.push(format!("system clock must be > 0 (got {})", self.system_clock_hz));
        }
        for (name, part, whole) in [
            ("outer", self.outer_quantum_s, self.outer_period_s),
            ("inner", self.inner_quantum_s, self.inner_period_s),
            ("guard", self.guard_fraction, 1.0),
        ] {
            let f = part / whole;
            if !(f > 0.0 && f <= 1.0) {
                v.push(format!("{name} quantum fraction must lie in (0,1] (got {f})"));
            }
        }
        v
    }
}
