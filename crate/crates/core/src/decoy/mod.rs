//! Decoy-state estimation: from raw tallies to a lower bound on untagged
//! (single-photon) key bits and an upper bound on their phase-flip rate.
//!
//! The single-photon yield uses the vacuum + two-intensity bound. Writing
//! `S_0`, `S_x`, `S_y` for the counting rates when the other party sends
//! vacuum and this party fires vacuum/decoy/signal,
//!
//! ```text
//!        mu_y^2 e^{mu_x} S_x - mu_x^2 e^{mu_y} S_y - (mu_y^2 - mu_x^2) S_0
//! Y_1 >= -----------------------------------------------------------------
//!                       mu_x mu_y (mu_y - mu_x)
//! ```
//!
//! In finite-size mode each count is first moved to its adverse side: the
//! positive term to its lower bound, the subtracted terms to their upper
//! bounds. Yields are estimated separately for each sending direction.

mod lp;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Source, SourceParams, TallyRecord};
use crate::stat::StatMode;

pub use lp::{lp_oracle, LpBound};

/// Per-pair counting rates `detected/sent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTable {
    rates: [[Option<f64>; 3]; 3],
}

pub fn counting_rates(tally: &TallyRecord) -> RateTable {
    let mut rates = [[None; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let sent = tally.sent[a][b];
            if sent > 0 {
                rates[a][b] = Some(tally.detected[a][b] as f64 / sent as f64);
            }
        }
    }
    RateTable { rates }
}

impl RateTable {
    pub fn get(&self, a: Source, b: Source) -> Result<f64> {
        self.rates[a.index()][b.index()].ok_or_else(|| Error::ZeroSent {
            pair: format!("({},{})", a.symbol(), b.symbol()),
        })
    }
}

fn pair_name(a: Source, b: Source) -> String {
    format!("({},{})", a.symbol(), b.symbol())
}

/// Which party emitted the single photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Alice,
    Bob,
}

impl Direction {
    /// Ordered (alice, bob) source pair with this party on `s` and the other
    /// on vacuum.
    fn pair(self, s: Source) -> (Source, Source) {
        match self {
            Direction::Alice => (s, Source::Vacuum),
            Direction::Bob => (Source::Vacuum, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldBound {
    pub value: f64,
    /// The bound collapsed to zero after adjustment.
    pub vacuous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Y1Bounds {
    pub alice: YieldBound,
    pub bob: YieldBound,
}

impl Y1Bounds {
    /// Yield of the one-photon state in decoy-decoy windows, where the photon
    /// is equally likely to come from either side.
    pub fn combined(&self) -> f64 {
        0.5 * (self.alice.value + self.bob.value)
    }

    pub fn vacuous(&self) -> bool {
        self.alice.vacuous && self.bob.vacuous
    }
}

/// Unclamped mean-value single-photon yield bound from rates.
pub fn y1_mean_value(s0: f64, sx: f64, sy: f64, mu_x: f64, mu_y: f64) -> f64 {
    let num = mu_y * mu_y * mu_x.exp() * sx - mu_x * mu_x * mu_y.exp() * sy - (mu_y * mu_y - mu_x * mu_x) * s0;
    num / (mu_x * mu_y * (mu_y - mu_x))
}

fn adjusted_rate(tally: &TallyRecord, pair: (Source, Source), bound: impl Fn(f64) -> f64) -> Result<f64> {
    let sent = tally.sent(pair.0, pair.1);
    if sent == 0 {
        return Err(Error::ZeroSent {
            pair: pair_name(pair.0, pair.1),
        });
    }
    Ok(bound(tally.detected(pair.0, pair.1) as f64) / sent as f64)
}

fn y1_direction(tally: &TallyRecord, dir: Direction, mu_x: f64, mu_y: f64, mode: StatMode) -> Result<YieldBound> {
    let s0 = adjusted_rate(tally, (Source::Vacuum, Source::Vacuum), |c| mode.upper(c))?;
    let sx = adjusted_rate(tally, dir.pair(Source::Decoy), |c| mode.lower(c))?;
    let sy = adjusted_rate(tally, dir.pair(Source::Signal), |c| mode.upper(c))?;
    let y = y1_mean_value(s0, sx, sy, mu_x, mu_y);
    Ok(if y > 0.0 {
        YieldBound {
            value: y.min(1.0),
            vacuous: false,
        }
    } else {
        YieldBound {
            value: 0.0,
            vacuous: true,
        }
    })
}

/// Single-photon yield lower bounds for both sending directions.
pub fn y1_lower_bound(tally: &TallyRecord, mu_x: f64, mu_y: f64, mode: StatMode) -> Result<Y1Bounds> {
    if !(0.0 < mu_x && mu_x < mu_y) {
        return Err(Error::Domain(format!("need 0 < mu_x < mu_y (got {mu_x}, {mu_y})")));
    }
    Ok(Y1Bounds {
        alice: y1_direction(tally, Direction::Alice, mu_x, mu_y, mode)?,
        bob: y1_direction(tally, Direction::Bob, mu_x, mu_y, mode)?,
    })
}

/// Untagged-bit counts split by the party that sent the photon.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct N1Split {
    /// From (signal, vacuum) windows.
    pub alice: f64,
    /// From (vacuum, signal) windows.
    pub bob: f64,
}

impl N1Split {
    pub fn even(total: f64) -> Self {
        N1Split {
            alice: total / 2.0,
            bob: total / 2.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.alice + self.bob
    }
}

/// Lower bound on untagged bits before error rejection.
pub fn n1_pre_aopp(y1: &Y1Bounds, tally: &TallyRecord, mu_y: f64) -> N1Split {
    let single = mu_y * (-mu_y).exp();
    N1Split {
        alice: tally.sent(Source::Signal, Source::Vacuum) as f64 * single * y1.alice.value,
        bob: tally.sent(Source::Vacuum, Source::Signal) as f64 * single * y1.bob.value,
    }
}

/// How many decoy-decoy pulse pairs are taken to fall inside the phase slice.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceAcceptance {
    /// Accept relative phases within `width/2` of 0 or of pi: a fraction
    /// `width/pi` of uniformly random pairs.
    Width(f64),
    /// Take the fraction from the tally itself as
    /// `detected_11_ds / detected_11`; the heralding probability of decoy
    /// pairs does not depend on their relative phase. The numerator is
    /// lowered to its adverse bound in finite-size mode.
    #[default]
    Inferred,
}

impl SliceAcceptance {
    /// Estimated number of decoy-decoy pulse pairs inside the slice.
    pub fn pairs_in_slice(&self, tally: &TallyRecord, mode: StatMode) -> Result<f64> {
        let sent_xx = tally.sent(Source::Decoy, Source::Decoy) as f64;
        match *self {
            SliceAcceptance::Width(w) => {
                if !(w > 0.0 && w <= PI) {
                    return Err(Error::Domain(format!("slice width must lie in (0, pi] (got {w})")));
                }
                Ok(sent_xx * w / PI)
            }
            SliceAcceptance::Inferred => {
                let det_xx = tally.detected(Source::Decoy, Source::Decoy);
                if det_xx == 0 {
                    return Err(Error::InsufficientData(
                        "no decoy-decoy detections to infer the slice fraction from".into(),
                    ));
                }
                Ok(sent_xx * mode.lower(tally.ds_total as f64) / det_xx as f64)
            }
        }
    }
}

/// Upper bound on the phase-flip error rate of untagged bits, clamped to
/// `[0, 0.5]`.
///
/// `y1_lower` is the yield of the one-photon component in decoy-decoy
/// windows (see [`Y1Bounds::combined`]).
pub fn e1ph_upper_bound(
    tally: &TallyRecord,
    mu_x: f64,
    y1_lower: f64,
    slice: SliceAcceptance,
    mode: StatMode,
) -> Result<f64> {
    if tally.ds_total == 0 {
        return Err(Error::InsufficientData(
            "no heralded decoy-decoy windows inside the phase slice".into(),
        ));
    }
    if !(y1_lower > 0.0) {
        return Err(Error::VacuousBound("single-photon yield bound is zero".into()));
    }
    let in_slice = slice.pairs_in_slice(tally, mode)?;
    if !(in_slice > 0.0) {
        return Err(Error::InsufficientData(
            "no decoy-decoy pairs inside the phase slice".into(),
        ));
    }
    let errors = (tally.ds_total - tally.ds_correct) as f64;
    let error_rate = mode.upper(errors) / in_slice;
    let vac = adjusted_rate(tally, (Source::Vacuum, Source::Vacuum), |c| mode.lower(c))?;
    let damp = (-2.0 * mu_x).exp();
    let e = (error_rate - 0.5 * damp * vac) / (2.0 * mu_x * damp * y1_lower);
    Ok(e.clamp(0.0, 0.5))
}

/// Everything the decoy stage hands to error rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyOutcome {
    pub y1: Y1Bounds,
    pub y1_lower: f64,
    pub n1_pre: N1Split,
    pub e1ph_pre: f64,
    /// Raw X-basis error rate over the slice, when any slice events exist.
    pub ex: Option<f64>,
    pub vacuous: bool,
}

/// Runs the decoy stage end to end on one tally.
pub fn estimate(
    tally: &TallyRecord,
    source: &SourceParams,
    slice: SliceAcceptance,
    mode: StatMode,
) -> Result<DecoyOutcome> {
    let y1 = y1_lower_bound(tally, source.mu_x, source.mu_y, mode)?;
    let n1_pre = n1_pre_aopp(&y1, tally, source.mu_y);
    let y1_lower = y1.combined();
    let ex = tally.x_error_rate();
    if y1.vacuous() {
        return Ok(DecoyOutcome {
            y1,
            y1_lower,
            n1_pre,
            e1ph_pre: 0.5,
            ex,
            vacuous: true,
        });
    }
    let e1ph_pre = e1ph_upper_bound(tally, source.mu_x, y1_lower, slice, mode)?;
    Ok(DecoyOutcome {
        y1,
        y1_lower,
        n1_pre,
        e1ph_pre,
        ex,
        vacuous: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_1002() -> TallyRecord {
        TallyRecord {
            sent: [
                [271885442400000, 145295046000000, 103877607600000],
                [145629057600000, 78993743400000, 55946943000000],
                [103543596000000, 56280954600000, 40582409400000],
            ],
            detected: [[2404, 53046, 199663], [52550, 56925, 129903], [198424, 130966, 157133]],
            valid_det1: 591668,
            valid_det2: 389346,
            ds_total: 9858,
            ds_correct: 9444,
            n_total: 1002034800000000,
        }
    }

    #[test]
    fn rates_by_long_division() {
        let r = counting_rates(&table_1002());
        assert_relative_eq!(
            r.get(Source::Vacuum, Source::Decoy).unwrap(),
            3.6509e-10,
            max_relative = 1e-4
        );
        let mut t = table_1002();
        t.detected[2][2] = 0;
        assert_eq!(counting_rates(&t).get(Source::Signal, Source::Signal).unwrap(), 0.0);
        t.sent[1][2] = 0;
        let err = counting_rates(&t).get(Source::Decoy, Source::Signal).unwrap_err();
        assert!(err.to_string().contains("(x,y)"), "{err}");
    }

    #[test]
    fn mean_value_yield_at_1002km() {
        let (s0, sx, sy) = (8.84e-12, 3.651e-10, 1.922e-9);
        assert_relative_eq!(y1_mean_value(s0, sx, sy, 0.08, 0.445), 4.42e-9, max_relative = 2e-3);
        let y = y1_lower_bound(&table_1002(), 0.08, 0.445, StatMode::MeanValue).unwrap();
        assert_relative_eq!(y.bob.value, 4.4199e-9, max_relative = 1e-3);
    }

    #[test]
    fn single_photon_channel_is_exact() {
        let (mu_x, mu_y, y1): (f64, f64, f64) = (0.1, 0.5, 2.5e-3);
        let sx = (-mu_x).exp() * mu_x * y1;
        let sy = (-mu_y).exp() * mu_y * y1;
        assert_relative_eq!(y1_mean_value(0.0, sx, sy, mu_x, mu_y), y1, max_relative = 1e-12);
    }

    #[test]
    fn dark_floor_rates_are_vacuous() {
        let mut t = TallyRecord::default();
        for a in 0..3 {
            for b in 0..3 {
                t.sent[a][b] = 100_000_000_000_000;
                t.detected[a][b] = 2400;
            }
        }
        let y = y1_lower_bound(&t, 0.08, 0.445, StatMode::Finite(1e-10)).unwrap();
        assert!(y.alice.vacuous && y.bob.vacuous);
        assert_eq!(y.combined(), 0.0);
    }

    #[test]
    fn n1_mean_value_and_linearity() {
        let t = table_1002();
        let y = y1_lower_bound(&t, 0.08, 0.445, StatMode::MeanValue).unwrap();
        let n1 = n1_pre_aopp(&y, &t, 0.445);
        assert!((2.5e5..2.7e5).contains(&n1.total()), "{}", n1.total());

        let mut doubled = t;
        doubled.sent[0][2] *= 2;
        doubled.sent[2][0] *= 2;
        doubled.detected[0][2] *= 2;
        doubled.detected[2][0] *= 2;
        let y2 = y1_lower_bound(&doubled, 0.08, 0.445, StatMode::MeanValue).unwrap();
        let n2 = n1_pre_aopp(&y2, &doubled, 0.445);
        assert_relative_eq!(n2.total(), 2.0 * n1.total(), max_relative = 1e-12);

        let zero = Y1Bounds {
            alice: YieldBound {
                value: 0.0,
                vacuous: true,
            },
            bob: YieldBound {
                value: 0.0,
                vacuous: true,
            },
        };
        assert_eq!(n1_pre_aopp(&zero, &t, 0.445).total(), 0.0);
    }

    #[test]
    fn finite_n1_close_to_table() {
        let t = table_1002();
        let y = y1_lower_bound(&t, 0.08, 0.445, StatMode::Finite(1e-10)).unwrap();
        let n1 = n1_pre_aopp(&y, &t, 0.445).total();
        assert!((n1 - 244481.0).abs() / 244481.0 < 0.10, "{n1}");
    }

    #[test]
    fn raw_x_error_rate() {
        assert_relative_eq!(table_1002().x_error_rate().unwrap(), 0.0420, epsilon = 5e-5);
    }

    #[test]
    fn e1ph_zero_errors_zero_vacuum() {
        let mut t = table_1002();
        t.ds_correct = t.ds_total;
        t.detected[0][0] = 0;
        t.valid_det1 -= 2404;
        let e = e1ph_upper_bound(&t, 0.08, 4e-9, SliceAcceptance::Width(PI / 8.0), StatMode::MeanValue).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn e1ph_error_paths() {
        let mut t = table_1002();
        t.ds_total = 0;
        t.ds_correct = 0;
        let err = e1ph_upper_bound(&t, 0.08, 4e-9, SliceAcceptance::Inferred, StatMode::MeanValue);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
        let err = e1ph_upper_bound(&table_1002(), 0.08, 0.0, SliceAcceptance::Inferred, StatMode::MeanValue);
        assert!(matches!(err, Err(Error::VacuousBound(_))));
    }

    #[test]
    fn estimate_pre_aopp_at_1002km() {
        let out = estimate(
            &table_1002(),
            &SourceParams::parameter_set_1(),
            SliceAcceptance::Inferred,
            StatMode::Finite(1e-10),
        )
        .unwrap();
        assert!(!out.vacuous);
        assert!((out.e1ph_pre - 0.0696).abs() <= 0.015, "{}", out.e1ph_pre);
    }

    #[test]
    fn analytic_bound_never_exceeds_lp() {
        let t = table_1002();
        let r = counting_rates(&t);
        let (v, x, y) = (Source::Vacuum, Source::Decoy, Source::Signal);
        let s0 = r.get(v, v).unwrap();
        for (sx, sy) in [
            (r.get(v, x).unwrap(), r.get(v, y).unwrap()),
            (r.get(x, v).unwrap(), r.get(y, v).unwrap()),
        ] {
            let analytic = y1_mean_value(s0, sx, sy, 0.08, 0.445);
            let lp = lp_oracle(s0, sx, sy, 0.08, 0.445, 10).unwrap();
            assert!(analytic <= lp.y1 * (1.0 + 1e-9), "{analytic} vs {}", lp.y1);
        }
    }
}
