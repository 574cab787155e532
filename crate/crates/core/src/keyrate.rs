//! Secure key rate per sent pulse pair, the finite-key overhead term, the
//! repeaterless (PLOB) capacity, and the end-to-end tally pipeline.
//!
//! ```text
//! R = (1/N) { n1 [1 - H(e1ph)] - f n_t H(E_t) } - R_tail
//! R_tail = (1/N) [ 2 log2(2/eps_cor) + 4 log2(1/(sqrt2 eps_PA eps_hat))
//!                  + 2 log2(n_vy + n_yv) ]
//! ```

use serde::{Deserialize, Serialize};

use crate::aopp::{estimate_after_aopp, AoppInput, AoppResult};
use crate::decoy::{self, N1Split, SliceAcceptance, Y1Bounds};
use crate::error::{Error, Result};
use crate::model::{ChannelConfig, SecurityParams, Side, SourceParams, TallyRecord};
use crate::stat::StatMode;

/// Shannon entropy of a biased coin, in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy needs x in [0,1] (got {x})")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Finite-key overhead per pulse pair.
pub fn r_tail(n_total: u64, n_vy: u64, n_yv: u64, sec: &SecurityParams) -> Result<f64> {
    let raw = n_vy + n_yv;
    if raw == 0 {
        return Err(Error::Domain(
            "n_vy + n_yv = 0: the overhead logarithm is undefined".into(),
        ));
    }
    if n_total == 0 {
        return Err(Error::Domain("N = 0 pulse pairs".into()));
    }
    Ok(r_tail_bits(raw, sec) / n_total as f64)
}

fn r_tail_bits(raw: u64, sec: &SecurityParams) -> f64 {
    2.0 * (2.0 / sec.eps_cor).log2()
        + 4.0 * (1.0 / (std::f64::consts::SQRT_2 * sec.eps_pa * sec.eps_hat)).log2()
        + 2.0 * (raw.max(1) as f64).log2()
}

/// Repeaterless secret-key capacity `-log2(1 - eta)` in bits per pulse.
pub fn plob(eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Domain(format!("PLOB needs transmittance in [0,1) (got {eta})")));
    }
    Ok(-(-eta).ln_1p() / std::f64::consts::LN_2)
}

/// Everything the rate formula consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInput {
    pub n_total: u64,
    pub n1: f64,
    pub e1ph: f64,
    pub n_t: f64,
    pub e_t: f64,
    pub n_vy: u64,
    pub n_yv: u64,
    pub sec: SecurityParams,
    pub clock_hz: f64,
    /// End-to-end fibre transmittance, for the PLOB comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl KeyRateInput {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.sec.violations();
        for (name, x) in [("e1ph", self.e1ph), ("e_t", self.e_t)] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("{name} must lie in [0,1] (got {x})"));
            }
        }
        if !(self.n1 >= 0.0) || !(self.n_t >= 0.0) {
            v.push("counts must be non-negative".into());
        }
        if self.n1 > self.n_t {
            v.push(format!("n1 = {} exceeds n_t = {}", self.n1, self.n_t));
        }
        if self.n_t > self.n_total as f64 {
            v.push(format!("n_t = {} exceeds N = {}", self.n_t, self.n_total));
        }
        if self.n_total == 0 {
            v.push("N must be >= 1".into());
        }
        if self.n_vy + self.n_yv == 0 {
            v.push("n_vy + n_yv must be >= 1".into());
        }
        if !(self.clock_hz > 0.0) {
            v.push(format!("clock_hz must be > 0 (got {})", self.clock_hz));
        }
        if let Some(eta) = self.eta {
            if !(0.0..1.0).contains(&eta) {
                v.push(format!("eta must lie in [0,1) (got {eta})"));
            }
        }
        v
    }
}

/// Intermediate quantities of [`analyze`], kept for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineAudit {
    pub y1: Y1Bounds,
    pub n1_pre: N1Split,
    pub n1_pre_total: f64,
    pub e1ph_pre: f64,
    pub e_x: Option<f64>,
    pub n_t_pre: f64,
    pub e_t_pre: f64,
    pub aopp: AoppResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub r_per_pulse: f64,
    /// Before clamping at zero; negative past the distance limit.
    pub r_unclamped: f64,
    pub r_bps: f64,
    pub r_tail: f64,
    pub total_secure_bits: u64,
    pub plob_bound: Option<f64>,
    /// `r_per_pulse / plob_bound`; above 1 beats the repeaterless limit.
    pub plob_margin: Option<f64>,
    pub inputs: KeyRateInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<PipelineAudit>,
    #[serde(default)]
    pub vacuous: bool,
}

impl KeyRateReport {
    pub fn above_plob(&self) -> bool {
        self.plob_margin.is_some_and(|m| m > 1.0)
    }
}

/// Evaluates the rate formula on validated inputs.
pub fn secure_key_rate(input: &KeyRateInput) -> Result<KeyRateReport> {
    let bad = input.violations();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let n = input.n_total as f64;
    let tail = r_tail(input.n_total, input.n_vy, input.n_yv, &input.sec)?;
    let gain = input.n1 * (1.0 - binary_entropy(input.e1ph)?);
    let leak = input.sec.f * input.n_t * binary_entropy(input.e_t)?;
    let r_unclamped = (gain - leak) / n - tail;
    let r = r_unclamped.max(0.0);
    let plob_bound = input.eta.map(plob).transpose()?;
    Ok(KeyRateReport {
        r_per_pulse: r,
        r_unclamped,
        r_bps: r * input.clock_hz,
        r_tail: tail,
        total_secure_bits: (r * n).floor() as u64,
        plob_bound,
        plob_margin: plob_bound.filter(|&p| p > 0.0).map(|p| r / p),
        inputs: *input,
        audit: None,
        vacuous: false,
    })
}

/// Options for [`analyze_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    /// Apply finite-size bounds at the Chernoff epsilon.
    pub finite: bool,
    pub slice: SliceAcceptance,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            finite: true,
            slice: SliceAcceptance::Inferred,
        }
    }
}

/// Tally to report with finite-size bounds and an inferred phase slice.
pub fn analyze(
    tally: &TallyRecord,
    params: &SourceParams,
    sec: &SecurityParams,
    ch: &ChannelConfig,
) -> Result<KeyRateReport> {
    analyze_with(tally, params, sec, ch, &AnalysisOptions::default())
}

/// Decoy estimation, then AOPP in estimate mode, then the rate formula.
pub fn analyze_with(
    tally: &TallyRecord,
    params: &SourceParams,
    sec: &SecurityParams,
    ch: &ChannelConfig,
    opts: &AnalysisOptions,
) -> Result<KeyRateReport> {
    let mut bad = params.violations();
    bad.extend(sec.violations());
    bad.extend(tally.violations());
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let mode = if opts.finite {
        StatMode::Finite(sec.eps_chernoff)
    } else {
        StatMode::MeanValue
    };
    let eta = ch.transmittance(Side::Total);
    let dec = decoy::estimate(tally, params, opts.slice, mode)?;
    let aopp_in = AoppInput::from_tally(tally, dec.n1_pre, dec.e1ph_pre);
    let post = if dec.vacuous {
        AoppResult {
            kept_pairs: 0.0,
            n_t_post: 0.0,
            e_t_post: 0.0,
            n1_post: 0.0,
            e1ph_post: 0.5,
        }
    } else {
        estimate_after_aopp(&aopp_in, mode)?
    };
    let input = KeyRateInput {
        n_total: tally.n_total,
        n1: post.n1_post,
        e1ph: post.e1ph_post,
        n_t: post.n_t_post,
        e_t: post.e_t_post,
        n_vy: tally.n_vy(),
        n_yv: tally.n_yv(),
        sec: *sec,
        clock_hz: ch.clock_hz,
        eta: (eta < 1.0).then_some(eta),
    };
    let audit = PipelineAudit {
        y1: dec.y1,
        n1_pre: dec.n1_pre,
        n1_pre_total: dec.n1_pre.total(),
        e1ph_pre: dec.e1ph_pre,
        e_x: dec.ex,
        n_t_pre: aopp_in.n_t(),
        e_t_pre: aopp_in.e_t(),
        aopp: post,
    };

    if dec.vacuous {
        if tally.n_total == 0 {
            return Err(Error::InsufficientData("tally contains no pulse pairs".into()));
        }
        let tail = r_tail_bits(tally.n_vy() + tally.n_yv(), sec) / tally.n_total as f64;
        let plob_bound = input.eta.map(plob).transpose()?;
        return Ok(KeyRateReport {
            r_per_pulse: 0.0,
            r_unclamped: -tail,
            r_bps: 0.0,
            r_tail: tail,
            total_secure_bits: 0,
            plob_bound,
            plob_margin: plob_bound.filter(|&p| p > 0.0).map(|_| 0.0),
            inputs: input,
            audit: Some(audit),
            vacuous: true,
        });
    }

    let mut report = secure_key_rate(&input)?;
    report.audit = Some(audit);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_input_1002() -> KeyRateInput {
        KeyRateInput {
            n_total: 1_000_000_000_000_000,
            n1: 39454.0,
            e1ph: 0.1705,
            n_t: 111671.0,
            e_t: 9.44e-3,
            n_vy: 199663,
            n_yv: 198424,
            sec: SecurityParams::default(),
            clock_hz: 351e6,
            eta: None,
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_relative_eq!(binary_entropy(0.1705).unwrap(), 0.6588, epsilon = 1e-4);
        assert!(binary_entropy(1.2).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn tail_terms() {
        let sec = SecurityParams::default();
        let n = 1_000_000_000_000_000;
        let bits = r_tail(n, 199663, 198424, &sec).unwrap() * n as f64;
        assert_relative_eq!(bits, 68.44 + 263.75 + 37.21, epsilon = 0.05);
        let one = r_tail(1, 1, 0, &sec).unwrap();
        assert_relative_eq!(
            one,
            2.0 * (2e10f64).log2() + 4.0 * (1e20 / 2f64.sqrt()).log2(),
            epsilon = 1e-9
        );
        assert!(r_tail(n, 0, 0, &sec).is_err());
    }

    #[test]
    fn plob_values() {
        assert_eq!(plob(0.0).unwrap(), 0.0);
        assert_relative_eq!(plob(0.5).unwrap(), 1.0, epsilon = 1e-15);
        let p = plob(10f64.powf(-6.29)).unwrap();
        assert_relative_eq!(p, 7.40e-7, max_relative = 2e-3);
        assert!(3.11e-6 > p);
        assert!(plob(1.0).is_err());
    }

    #[test]
    fn table_rate_1002km() {
        let r = secure_key_rate(&table_input_1002()).unwrap();
        assert_relative_eq!(r.r_per_pulse, 3.11e-12, max_relative = 0.01);
        assert!(
            (r.total_secure_bits as i64 - 3112).abs() <= 10,
            "{}",
            r.total_secure_bits
        );
    }

    #[test]
    fn table_rate_202km() {
        let input = KeyRateInput {
            n_total: 3_240_000_000_000,
            n1: 7.92e8,
            e1ph: 0.1024,
            n_t: 2.17e9,
            e_t: 3.88e-4,
            n_vy: 1,
            n_yv: 0,
            sec: SecurityParams::default(),
            clock_hz: 900e6,
            eta: Some(10f64.powf(-3.16)),
        };
        let r = secure_key_rate(&input).unwrap();
        assert_relative_eq!(r.r_per_pulse, 1.24e-4, max_relative = 0.01);
        assert!((r.r_bps - 111_735.0).abs() / 111_735.0 < 0.01, "{}", r.r_bps);
    }

    #[test]
    fn zero_untagged_clamps() {
        let input = KeyRateInput {
            n1: 0.0,
            ..table_input_1002()
        };
        let r = secure_key_rate(&input).unwrap();
        assert_eq!(r.r_per_pulse, 0.0);
        assert!(r.r_unclamped < 0.0);
        assert_eq!(r.total_secure_bits, 0);
    }

    #[test]
    fn audit_identity() {
        let inp = table_input_1002();
        let r = secure_key_rate(&inp).unwrap();
        let n = inp.n_total as f64;
        let lhs = r.r_per_pulse * n + r.r_tail * n + inp.sec.f * inp.n_t * binary_entropy(inp.e_t).unwrap();
        let rhs = inp.n1 * (1.0 - binary_entropy(inp.e1ph).unwrap());
        assert_relative_eq!(lhs, rhs, max_relative = 1e-6);
    }

    #[test]
    fn all_zero_tally_is_vacuous() {
        let mut t = TallyRecord::default();
        for row in t.sent.iter_mut() {
            for s in row.iter_mut() {
                *s = 1_000_000;
            }
        }
        t.n_total = 9_000_000;
        let r = analyze(
            &t,
            &SourceParams::parameter_set_1(),
            &SecurityParams::default(),
            &ChannelConfig::long_distance(500.0, 502.0),
        )
        .unwrap();
        assert!(r.vacuous);
        assert_eq!(r.r_per_pulse, 0.0);
    }

    proptest! {
        #[test]
        fn entropy_symmetry(x in 0.0f64..=1.0) {
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_errors(e1 in 0.0f64..0.5, de in 0.0f64..0.1, et in 0.0f64..0.5) {
            let base = KeyRateInput { e1ph: e1, e_t: et, ..table_input_1002() };
            let r0 = secure_key_rate(&base).unwrap().r_unclamped;
            let worse_ph = KeyRateInput { e1ph: (e1 + de).min(0.5), ..base };
            let worse_t = KeyRateInput { e_t: (et + de).min(0.5), ..base };
            prop_assert!(secure_key_rate(&worse_ph).unwrap().r_unclamped <= r0);
            prop_assert!(secure_key_rate(&worse_t).unwrap().r_unclamped <= r0);
        }

        #[test]
        fn monotone_in_n1_and_f(n1 in 0.0f64..1e5, dn in 0.0f64..1e4, f in 1.0f64..2.0, df in 0.0f64..0.5) {
            let base = KeyRateInput { n1, ..table_input_1002() };
            let more = KeyRateInput { n1: (n1 + dn).min(base.n_t), ..base };
            prop_assert!(secure_key_rate(&more).unwrap().r_unclamped >= secure_key_rate(&base).unwrap().r_unclamped);
            let mut a = base;
            a.sec.f = f;
            let mut b = base;
            b.sec.f = f + df;
            prop_assert!(secure_key_rate(&b).unwrap().r_unclamped <= secure_key_rate(&a).unwrap().r_unclamped);
        }
    }
}
