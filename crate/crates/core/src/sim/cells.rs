//! Per-source-pair outcome probabilities, and the two consumers that need
//! nothing finer: a count-level sampler for very long sessions and the
//! expected tally used by the optimiser.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::clicks::{averaged_herald, phase_averaged_herald, Detection};
use crate::error::{Error, Result};
use crate::model::{ChannelConfig, Side, Source, SourceParams, TallyRecord};

/// Decoy-decoy pairs split by whether their corrected relative phase falls in
/// the slice around 0 (target detector 0) or pi (target detector 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceModel {
    pub width: f64,
    /// Share of decoy-decoy pairs inside the slice, `width / pi`.
    pub fraction: f64,
    /// `[target][detector]` heralding probabilities inside the slice.
    pub in_target: [[f64; 2]; 2],
    /// Heralding probabilities outside the slice.
    pub out: [f64; 2],
}

/// Probabilities, per window of a one-sided signal pair, that exactly one
/// photon was emitted and the window was heralded, split by cause.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UntaggedModel {
    pub photon: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellModel {
    pub sent_prob: [[f64; 3]; 3],
    /// `[alice][bob][detector]` phase-averaged heralding probabilities.
    pub herald: [[[f64; 2]; 3]; 3],
    pub slice: SliceModel,
    /// Index 0: Alice sends (signal, vacuum); index 1: Bob sends.
    pub untagged: [UntaggedModel; 2],
    /// Conjugate-basis error of a heralded single photon.
    pub e_opt: f64,
}

impl CellModel {
    /// `residual_sigma` is the RMS phase-tracking error, folded into the
    /// visibility as `exp(-sigma^2 / 2)`.
    pub fn new(source: &SourceParams, ch: &ChannelConfig, slice_width: f64, residual_sigma: f64) -> Result<Self> {
        let mut bad = source.violations();
        bad.extend(ch.violations());
        if !(slice_width > 0.0 && slice_width <= PI) {
            bad.push(format!("slice width must lie in (0, pi] (got {slice_width})"));
        }
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        let det = Detection::from_channel(ch);
        let eta_a = ch.arm_transmittance(Side::A);
        let eta_b = ch.arm_transmittance(Side::B);

        let mut sent_prob = [[0.0; 3]; 3];
        let mut herald = [[[0.0; 2]; 3]; 3];
        for a in Source::ALL {
            for b in Source::ALL {
                let (i, j) = (a.index(), b.index());
                sent_prob[i][j] = source.probability(a) * source.probability(b);
                herald[i][j] = phase_averaged_herald(source.intensity(a), source.intensity(b), eta_a, eta_b, &det);
            }
        }

        let damped = Detection {
            visibility: det.visibility * (-0.5 * residual_sigma * residual_sigma).exp(),
            ..det
        };
        let mx = source.mu_x;
        let half = 0.5 * slice_width;
        let in0 = averaged_herald(mx, mx, eta_a, eta_b, -half, half, &damped);
        let in1 = averaged_herald(mx, mx, eta_a, eta_b, PI - half, PI + half, &damped);
        let fraction = slice_width / PI;
        let avg = herald[1][1];
        let out = if fraction < 1.0 {
            [0, 1].map(|k| ((avg[k] - fraction * 0.5 * (in0[k] + in1[k])) / (1.0 - fraction)).max(0.0))
        } else {
            [0.0, 0.0]
        };

        let one_sided = |mu: f64, eta: f64| {
            let t = [0, 1].map(|k| 0.5 * eta * det.photon_eff(k));
            let d = det.dark;
            let p1 = mu * (-mu).exp();
            UntaggedModel {
                photon: p1 * (t[0] * (1.0 - d[1]) + t[1] * (1.0 - d[0])),
                noise: p1 * (1.0 - t[0] - t[1]) * (d[0] * (1.0 - d[1]) + d[1] * (1.0 - d[0])),
            }
        };
        let sinc = if half > 0.0 { half.sin() / half } else { 1.0 };
        Ok(CellModel {
            sent_prob,
            herald,
            slice: SliceModel {
                width: slice_width,
                fraction,
                in_target: [in0, in1],
                out,
            },
            untagged: [one_sided(source.mu_y, eta_a), one_sided(source.mu_y, eta_b)],
            e_opt: 0.5 * (1.0 - damped.visibility * sinc),
        })
    }

    /// Expected fraction of untagged bits that carry a phase flip.
    pub fn expected_phase_error(&self, side: usize) -> f64 {
        let u = self.untagged[side];
        (u.photon * self.e_opt + 0.5 * u.noise) / (u.photon + u.noise)
    }
}

/// Simulation-truth counts attached to a sampled tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TallyTruth {
    /// Untagged bits from (signal, vacuum) windows.
    pub untagged_alice: u64,
    /// Untagged bits from (vacuum, signal) windows.
    pub untagged_bob: u64,
    /// Untagged bits whose conjugate-basis outcome would be wrong.
    pub phase_flips: u64,
}

impl TallyTruth {
    pub fn untagged(&self) -> u64 {
        self.untagged_alice + self.untagged_bob
    }

    pub fn phase_error_rate(&self) -> Option<f64> {
        (self.untagged() > 0).then(|| self.phase_flips as f64 / self.untagged() as f64)
    }

    pub fn merge(&self, other: &TallyTruth) -> TallyTruth {
        TallyTruth {
            untagged_alice: self.untagged_alice + other.untagged_alice,
            untagged_bob: self.untagged_bob + other.untagged_bob,
            phase_flips: self.phase_flips + other.phase_flips,
        }
    }
}

fn binom<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("binomial parameters checked").sample(rng)
    }
}

/// Splits `n` trials over outcomes with the given probabilities; the
/// remainder is "nothing happened".
fn multinomial<R: Rng, const K: usize>(rng: &mut R, n: u64, probs: [f64; K]) -> [u64; K] {
    let mut out = [0u64; K];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..K {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let x = binom(rng, left, (probs[k] / mass).min(1.0));
        out[k] = x;
        left -= x;
        mass -= probs[k];
    }
    out
}

/// Draws a whole session's counts directly from the cell probabilities.
///
/// Equivalent in distribution to simulating every window with a fixed phase
/// residual spread, at a cost independent of `n_pairs`.
pub fn sample_tally<R: Rng>(model: &CellModel, n_pairs: u64, rng: &mut R) -> (TallyRecord, TallyTruth) {
    let mut t = TallyRecord {
        n_total: n_pairs,
        ..TallyRecord::default()
    };
    let flat: [f64; 9] = std::array::from_fn(|c| model.sent_prob[c / 3][c % 3]);
    let sent = multinomial(rng, n_pairs, flat);
    for (c, &s) in sent.iter().enumerate() {
        t.sent[c / 3][c % 3] = s;
    }

    for a in 0..3 {
        for b in 0..3 {
            let s = t.sent[a][b];
            let k = if a == 1 && b == 1 {
                let sl = &model.slice;
                let inside = binom(rng, s, sl.fraction);
                let near_zero = binom(rng, inside, 0.5);
                let mut k = [0u64; 2];
                for (target, n) in [(0usize, near_zero), (1, inside - near_zero)] {
                    let h = multinomial(rng, n, sl.in_target[target]);
                    t.ds_total += h[0] + h[1];
                    t.ds_correct += h[target];
                    k[0] += h[0];
                    k[1] += h[1];
                }
                let h = multinomial(rng, s - inside, sl.out);
                [k[0] + h[0], k[1] + h[1]]
            } else {
                multinomial(rng, s, model.herald[a][b])
            };
            t.detected[a][b] = k[0] + k[1];
            t.valid_det1 += k[0];
            t.valid_det2 += k[1];
        }
    }

    let mut truth = TallyTruth::default();
    for (side, (a, b)) in [(2usize, 0usize), (0, 2)].into_iter().enumerate() {
        let det = t.detected[a][b];
        let p_h = model.herald[a][b][0] + model.herald[a][b][1];
        if p_h <= 0.0 {
            continue;
        }
        let u = model.untagged[side];
        let [photon, noise] = multinomial(rng, det, [(u.photon / p_h).min(1.0), (u.noise / p_h).min(1.0)]);
        let flips = binom(rng, photon, model.e_opt) + binom(rng, noise, 0.5);
        if side == 0 {
            truth.untagged_alice = photon + noise;
        } else {
            truth.untagged_bob = photon + noise;
        }
        truth.phase_flips += flips;
    }
    (t, truth)
}

/// Expected counts for `n_pairs` windows, rounded to integers.
pub fn expected_tally(model: &CellModel, n_pairs: f64) -> TallyRecord {
    let mut t = TallyRecord::default();
    for a in 0..3 {
        for b in 0..3 {
            let s = (n_pairs * model.sent_prob[a][b]).round();
            let k = model.herald[a][b].map(|p| (s * p).round() as u64);
            t.sent[a][b] = s as u64;
            t.detected[a][b] = k[0] + k[1];
            t.valid_det1 += k[0];
            t.valid_det2 += k[1];
        }
    }
    let sl = &model.slice;
    let inside = t.sent[1][1] as f64 * sl.fraction;
    let per_target = 0.5 * inside;
    let total = per_target * (sl.in_target[0][0] + sl.in_target[0][1] + sl.in_target[1][0] + sl.in_target[1][1]);
    let correct = per_target * (sl.in_target[0][0] + sl.in_target[1][1]);
    t.ds_total = (total.round() as u64).min(t.detected[1][1]);
    t.ds_correct = (correct.round() as u64).min(t.ds_total);
    t.n_total = t.sent_sum();
    t
}
