//! Shared domain types: source settings, the security budget, the optical
//! channel, and the raw tallies an SNS session produces.
//!
//! Everything here is an immutable value once built. Cross-field checks are
//! reported through [`Verdict`] rather than by panicking, so callers can print
//! every violated invariant at once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three sources each party can fire in a time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Vacuum = 0,
    Decoy = 1,
    Signal = 2,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Vacuum, Source::Decoy, Source::Signal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Source> {
        Source::ALL.get(i).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            Source::Vacuum => 'v',
            Source::Decoy => 'x',
            Source::Signal => 'y',
        }
    }
}

/// Intensities and firing probabilities of the vacuum/decoy/signal sources.
///
/// Both parties use the same settings. The vacuum intensity is fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub mu_x: f64,
    pub mu_y: f64,
    pub p_v: f64,
    pub p_x: f64,
    pub p_y: f64,
}

impl SourceParams {
    pub const MU_V: f64 = 0.0;

    /// Long-haul operating point ("Parameter #1").
    pub fn parameter_set_1() -> Self {
        SourceParams {
            mu_x: 0.08,
            mu_y: 0.445,
            p_v: 0.52,
            p_x: 0.28,
            p_y: 0.20,
        }
    }

    /// Metropolitan operating point ("Parameter #2").
    pub fn parameter_set_2() -> Self {
        SourceParams {
            mu_x: 0.05,
            mu_y: 0.482,
            p_v: 0.68,
            p_x: 0.04,
            p_y: 0.28,
        }
    }

    /// Looks up a preset by its label (`"#1"`, `"1"`, `"#2"`, `"2"`).
    pub fn preset(label: &str) -> Option<Self> {
        match label.trim().trim_start_matches('#') {
            "1" => Some(Self::parameter_set_1()),
            "2" => Some(Self::parameter_set_2()),
            _ => None,
        }
    }

    pub fn intensity(&self, s: Source) -> f64 {
        match s {
            Source::Vacuum => Self::MU_V,
            Source::Decoy => self.mu_x,
            Source::Signal => self.mu_y,
        }
    }

    pub fn probability(&self, s: Source) -> f64 {
        match s {
            Source::Vacuum => self.p_v,
            Source::Decoy => self.p_x,
            Source::Signal => self.p_y,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.mu_x > 0.0) {
            v.push(format!("mu_x must be > mu_v = 0 (got {})", self.mu_x));
        }
        if !(self.mu_x < self.mu_y) {
            v.push(format!(
                "mu_x < mu_y violated (mu_x = {}, mu_y = {})",
                self.mu_x, self.mu_y
            ));
        }
        for (name, p) in [("p_v", self.p_v), ("p_x", self.p_x), ("p_y", self.p_y)] {
            if !(p > 0.0 && p < 1.0) {
                v.push(format!("{name} must lie in (0,1) (got {p})"));
            }
        }
        let sum = self.p_v + self.p_x + self.p_y;
        if (sum - 1.0).abs() > 1e-12 {
            v.push(format!("probabilities sum to {sum}, expected 1"));
        }
        v
    }
}

/// The failure-probability budget and error-correction inefficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecurityParams {
    pub eps_chernoff: f64,
    pub eps_cor: f64,
    pub eps_pa: f64,
    pub eps_hat: f64,
    pub f: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            eps_chernoff: 1e-10,
            eps_cor: 1e-10,
            eps_pa: 1e-10,
            eps_hat: 1e-10,
            f: 1.16,
        }
    }
}

impl SecurityParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, e) in [
            ("eps_chernoff", self.eps_chernoff),
            ("eps_cor", self.eps_cor),
            ("eps_pa", self.eps_pa),
            ("eps_hat", self.eps_hat),
        ] {
            if !(e > 0.0 && e < 1.0) {
                v.push(format!("{name} must lie in (0,1) (got {e})"));
            }
        }
        if !(self.f >= 1.0) {
            v.push(format!("error-correction inefficiency f must be >= 1 (got {})", self.f));
        }
        v
    }
}

/// Which stretch of fibre a transmittance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Alice to the measurement node.
    A,
    /// Bob to the measurement node.
    B,
    /// Both arms end to end (what a PLOB comparison uses).
    Total,
}

/// Optical channel and detection setup at the measurement node.
///
/// Detector index 0 is the constructive-interference port for zero relative
/// phase ("Det1"), index 1 the other port ("Det2").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub length_a_km: f64,
    pub length_b_km: f64,
    pub atten_db_per_km: f64,
    /// Loss inside the measurement node, per arm (A, B).
    pub extra_loss_db: [f64; 2],
    pub det_eff: [f64; 2],
    /// Working noise per detector (dark counts plus residual scattering), Hz.
    pub dark_hz: [f64; 2],
    /// Fraction of signal kept by the coincidence window.
    pub window_eff: f64,
    /// Duration of the coincidence window, seconds.
    pub gate_s: f64,
    /// Effective signal frequency after reference multiplexing.
    pub clock_hz: f64,
    /// Baseline interference error (reduces fringe visibility to `1 - 2m`).
    pub misalignment: f64,
}

impl ChannelConfig {
    /// Long-haul setup: ultra-low-noise detectors, 200 ps window, 351 MHz.
    pub fn long_distance(length_a_km: f64, length_b_km: f64) -> Self {
        ChannelConfig {
            length_a_km,
            length_b_km,
            atten_db_per_km: 0.1562,
            extra_loss_db: [1.4, 1.4],
            det_eff: [0.60, 0.55],
            dark_hz: [0.019, 0.035],
            window_eff: 0.65,
            gate_s: 200e-12,
            clock_hz: 351e6,
            misalignment: 0.03,
        }
    }

    /// Metropolitan setup: high-efficiency detectors, 500 ps window, 900 MHz.
    pub fn short_distance(total_km: f64) -> Self {
        ChannelConfig {
            length_a_km: total_km / 2.0,
            length_b_km: total_km / 2.0,
            atten_db_per_km: 0.1562,
            extra_loss_db: [1.4, 1.4],
            det_eff: [0.80, 0.80],
            dark_hz: [10.0, 10.0],
            window_eff: 0.98,
            gate_s: 500e-12,
            clock_hz: 900e6,
            misalignment: 0.03,
        }
    }

    /// Same detection setup with a different total length, split evenly.
    pub fn with_total_length(mut self, total_km: f64) -> Self {
        self.length_a_km = total_km / 2.0;
        self.length_b_km = total_km / 2.0;
        self
    }

    pub fn total_length_km(&self) -> f64 {
        self.length_a_km + self.length_b_km
    }

    /// Fibre loss in dB for the requested stretch.
    pub fn fibre_loss_db(&self, side: Side) -> f64 {
        match side {
            Side::A => self.length_a_km * self.atten_db_per_km,
            Side::B => self.length_b_km * self.atten_db_per_km,
            Side::Total => self.total_length_km() * self.atten_db_per_km,
        }
    }

    /// Fibre transmittance `10^(-dB/10)`.
    pub fn transmittance(&self, side: Side) -> f64 {
        db_to_transmittance(self.fibre_loss_db(side))
    }

    /// Transmittance of one arm up to the beam splitter, including the node's
    /// internal loss for that arm.
    pub fn arm_transmittance(&self, side: Side) -> f64 {
        match side {
            Side::A => db_to_transmittance(self.fibre_loss_db(Side::A) + self.extra_loss_db[0]),
            Side::B => db_to_transmittance(self.fibre_loss_db(Side::B) + self.extra_loss_db[1]),
            Side::Total => self.arm_transmittance(Side::A) * self.arm_transmittance(Side::B),
        }
    }

    /// Probability that detector `i` fires on noise alone in one window.
    pub fn dark_probability(&self, i: usize) -> f64 {
        (self.dark_hz[i] * self.gate_s).min(1.0)
    }

    pub fn visibility(&self) -> f64 {
        1.0 - 2.0 * self.misalignment
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("length_a_km", self.length_a_km),
            ("length_b_km", self.length_b_km),
            ("atten_db_per_km", self.atten_db_per_km),
            ("extra_loss_db[0]", self.extra_loss_db[0]),
            ("extra_loss_db[1]", self.extra_loss_db[1]),
            ("dark_hz[0]", self.dark_hz[0]),
            ("dark_hz[1]", self.dark_hz[1]),
            ("gate_s", self.gate_s),
        ] {
            if !(x >= 0.0) || !x.is_finite() {
                v.push(format!("{name} must be a finite value >= 0 (got {x})"));
            }
        }
        for (name, x) in [
            ("det_eff[0]", self.det_eff[0]),
            ("det_eff[1]", self.det_eff[1]),
            ("window_eff", self.window_eff),
        ] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("{name} must lie in [0,1] (got {x})"));
            }
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            v.push(format!("misalignment must lie in [0,0.5] (got {})", self.misalignment));
        }
        if !(self.clock_hz > 0.0) {
            v.push(format!("clock_hz must be > 0 (got {})", self.clock_hz));
        }
        v
    }
}

pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn transmittance_to_db(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

/// Raw counts of one session, indexed `[alice][bob]` by [`Source::index`].
///
/// Counts only; rates are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TallyRecord {
    pub sent: [[u64; 3]; 3],
    pub detected: [[u64; 3]; 3],
    pub valid_det1: u64,
    pub valid_det2: u64,
    /// Heralded decoy-decoy windows whose relative phase fell in the slice.
    pub ds_total: u64,
    /// ... of which the expected detector clicked.
    pub ds_correct: u64,
    pub n_total: u64,
}

impl TallyRecord {
    pub fn sent(&self, a: Source, b: Source) -> u64 {
        self.sent[a.index()][b.index()]
    }

    pub fn detected(&self, a: Source, b: Source) -> u64 {
        self.detected[a.index()][b.index()]
    }

    pub fn sent_sum(&self) -> u64 {
        self.sent.iter().flatten().sum()
    }

    pub fn detected_sum(&self) -> u64 {
        self.detected.iter().flatten().sum()
    }

    /// Raw key count with Alice on vacuum and Bob on signal.
    pub fn n_vy(&self) -> u64 {
        self.detected(Source::Vacuum, Source::Signal)
    }

    pub fn n_yv(&self) -> u64 {
        self.detected(Source::Signal, Source::Vacuum)
    }

    /// Heralded windows where both chose vacuum or signal (the key-generating
    /// windows), regardless of correctness.
    pub fn z_window_total(&self) -> u64 {
        let (v, y) = (Source::Vacuum, Source::Signal);
        self.detected(v, v) + self.detected(v, y) + self.detected(y, v) + self.detected(y, y)
    }

    /// Raw X-basis error rate over the phase slice.
    pub fn x_error_rate(&self) -> Option<f64> {
        (self.ds_total > 0).then(|| (self.ds_total - self.ds_correct) as f64 / self.ds_total as f64)
    }

    /// Adds another shard's counts. Associative and commutative.
    pub fn merge(&self, other: &TallyRecord) -> TallyRecord {
        let mut out = *self;
        for a in 0..3 {
            for b in 0..3 {
                out.sent[a][b] += other.sent[a][b];
                out.detected[a][b] += other.detected[a][b];
            }
        }
        out.valid_det1 += other.valid_det1;
        out.valid_det2 += other.valid_det2;
        out.ds_total += other.ds_total;
        out.ds_correct += other.ds_correct;
        out.n_total += other.n_total;
        out
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for a in Source::ALL {
            for b in Source::ALL {
                if self.detected(a, b) > self.sent(a, b) {
                    v.push(format!(
                        "detected_{}{} = {} exceeds sent_{}{} = {}",
                        a.index(),
                        b.index(),
                        self.detected(a, b),
                        a.index(),
                        b.index(),
                        self.sent(a, b)
                    ));
                }
            }
        }
        if self.sent_sum() != self.n_total {
            v.push(format!(
                "sent counts sum to {} but n_total is {}",
                self.sent_sum(),
                self.n_total
            ));
        }
        if self.ds_correct > self.ds_total {
            v.push(format!(
                "correct_11_ds = {} exceeds detected_11_ds = {}",
                self.ds_correct, self.ds_total
            ));
        }
        if self.ds_total > self.detected(Source::Decoy, Source::Decoy) {
            v.push(format!(
                "detected_11_ds = {} exceeds detected_11 = {}",
                self.ds_total,
                self.detected(Source::Decoy, Source::Decoy)
            ));
        }
        if self.valid_det1 + self.valid_det2 != self.detected_sum() {
            v.push(format!(
                "valid detections {} + {} differ from the detected total {}",
                self.valid_det1,
                self.valid_det2,
                self.detected_sum()
            ));
        }
        v
    }

    pub fn check(&self) -> Result<()> {
        into_result(self.violations())
    }
}

/// Outcome of [`validate`]: empty means pass.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Verdict {
    pub violations: Vec<String>,
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        into_result(self.violations)
    }
}

fn into_result(violations: Vec<String>) -> Result<()> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Checks every invariant of the three parameter groups.
pub fn validate(params: &SourceParams, sec: &SecurityParams, ch: &ChannelConfig) -> Verdict {
    let mut violations = params.violations();
    violations.extend(sec.violations());
    violations.extend(ch.violations());
    Verdict { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parameter_set_1_passes() {
        let ch = ChannelConfig::long_distance(500.0, 502.0);
        let v = validate(&SourceParams::parameter_set_1(), &SecurityParams::default(), &ch);
        assert!(v.is_pass(), "{:?}", v);
        let v = validate(&SourceParams::parameter_set_2(), &SecurityParams::default(), &ch);
        assert!(v.is_pass(), "{:?}", v);
    }

    #[test]
    fn unnormalised_probabilities_fail() {
        let p = SourceParams {
            p_v: 0.5,
            p_x: 0.5,
            p_y: 0.5,
            ..SourceParams::parameter_set_1()
        };
        let v = validate(&p, &SecurityParams::default(), &ChannelConfig::short_distance(0.0));
        assert!(!v.is_pass());
        assert!(v.violations.iter().any(|m| m.contains("sum to 1.5")), "{:?}", v);
    }

    #[test]
    fn intensity_ordering_fails() {
        let p = SourceParams {
            mu_x: 0.5,
            mu_y: 0.4,
            ..SourceParams::parameter_set_1()
        };
        let v = validate(&p, &SecurityParams::default(), &ChannelConfig::short_distance(0.0));
        assert_eq!(v.violations.len(), 1);
        assert!(v.violations[0].contains("mu_x < mu_y"));
    }

    #[test]
    fn security_domain_guard() {
        let sec = SecurityParams {
            eps_cor: 2.0,
            f: 0.9,
            ..SecurityParams::default()
        };
        let v = sec.violations();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn validate_is_pure() {
        let p = SourceParams::parameter_set_1();
        let sec = SecurityParams::default();
        let ch = ChannelConfig::long_distance(500.0, 502.0);
        let a = validate(&p, &sec, &ch);
        let b = validate(&p, &sec, &ch);
        assert_eq!(a, b);
        assert_eq!(p, SourceParams::parameter_set_1());
    }

    #[test]
    fn transmittance_matches_table_losses() {
        let ch = ChannelConfig::long_distance(500.0, 502.0);
        assert_relative_eq!(ch.fibre_loss_db(Side::Total), 156.5124, epsilon = 1e-9);
        // 156.5 dB -> 2.24e-16
        let eta = db_to_transmittance(156.5);
        assert_relative_eq!(eta, 2.2387e-16, max_relative = 1e-4);
        assert_relative_eq!(ch.transmittance(Side::Total), 2.2323e-16, max_relative = 1e-3);

        let short = ChannelConfig {
            atten_db_per_km: 31.6 / 202.0,
            ..ChannelConfig::short_distance(202.0)
        };
        assert_relative_eq!(short.transmittance(Side::Total), 6.918e-4, max_relative = 1e-3);

        let zero = ChannelConfig::short_distance(0.0);
        assert_eq!(zero.transmittance(Side::Total), 1.0);
    }

    #[test]
    fn split_segments_multiply() {
        let ch = ChannelConfig::long_distance(500.0, 502.0);
        assert_relative_eq!(
            ch.transmittance(Side::Total),
            ch.transmittance(Side::A) * ch.transmittance(Side::B),
            max_relative = 1e-12
        );
    }

    #[test]
    fn tally_merge_adds() {
        let mut a = TallyRecord::default();
        a.sent[0][1] = 10;
        a.detected[0][1] = 2;
        a.valid_det1 = 2;
        a.n_total = 10;
        let b = a.merge(&a);
        assert_eq!(b.sent[0][1], 20);
        assert_eq!(b.valid_det1, 4);
        assert!(b.check().is_ok());
    }

    #[test]
    fn tally_detects_breaches() {
        let mut t = TallyRecord::default();
        t.sent[2][2] = 5;
        t.detected[2][2] = 6;
        t.valid_det1 = 6;
        t.n_total = 5;
        let v = t.violations();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("detected_22"));
    }
}
