#![allow(dead_code)]

use std::path::PathBuf;

use rayon::prelude::*;
use sns_qkd::aopp::{apply_aopp, estimate_after_aopp, pair_bits, AoppInput};
use sns_qkd::decoy::{self, SliceAcceptance};
use sns_qkd::io::{parse_tally, RunConfig, TallyFile};
use sns_qkd::sim::{simulate_session, SessionConfig};
use sns_qkd::stat::StatMode;

pub const DISTANCES: [u32; 5] = [202, 303, 404, 505, 1002];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn tally_path(km: u32) -> PathBuf {
    data_dir().join("tallies").join(format!("{km}km.json"))
}

pub fn config_path(name: &str) -> PathBuf {
    data_dir().join("configs").join(name)
}

pub fn fixture(km: u32) -> TallyFile {
    parse_tally(&tally_path(km)).unwrap()
}

pub fn keyrate_config(km: u32) -> RunConfig {
    RunConfig::load(&config_path(&format!("keyrate_{km}km.json"))).unwrap()
}

/// Simulated session used by the statistical checks.
pub fn session(seed: u64, total_km: f64, n_pairs: u64) -> SessionConfig {
    SessionConfig::short_distance(total_km, n_pairs, seed)
}

/// Standardised discrepancy between simulated AOPP outcomes and the
/// mean-value predictions, pooled over sessions.
#[derive(Debug, Clone, Copy)]
pub struct AoppComparison {
    pub sessions: usize,
    pub z_bit_errors: f64,
    pub z_phase_flips: f64,
    pub z_untagged_pairs: f64,
}

pub fn aopp_monte_carlo(sessions: u64, total_km: f64, n_pairs: u64) -> AoppComparison {
    let parts: Vec<[f64; 6]> = (0..sessions)
        .into_par_iter()
        .map(|seed| {
            let s = simulate_session(&session(seed, total_km, n_pairs)).unwrap();
            let truth = s.truth;
            let n1 = decoy::N1Split {
                alice: truth.untagged_alice as f64,
                bob: truth.untagged_bob as f64,
            };
            let e = truth.phase_error_rate().unwrap_or(0.0);
            let input = AoppInput::from_tally(&s.tally, n1, e);
            let pred = estimate_after_aopp(&input, StatMode::MeanValue).unwrap();
            let (mc, _) = apply_aopp(&s.raw_keys, &pair_bits(&s.raw_keys.bob_bits, seed)).unwrap();

            let p = pred.e_t_post;
            let bit = [
                mc.e_t_post * mc.kept_pairs - p * mc.kept_pairs,
                mc.kept_pairs * p * (1.0 - p),
            ];
            let q = pred.e1ph_post;
            let phase = [mc.e1ph_post * mc.n1_post - q * mc.n1_post, mc.n1_post * q * (1.0 - q)];
            // untagged pairs: hypergeometric-like spread, bounded by the binomial one
            let r = if mc.kept_pairs > 0.0 {
                pred.n1_post / mc.kept_pairs.max(1.0)
            } else {
                0.0
            };
            let pairs = [mc.n1_post - pred.n1_post, (mc.kept_pairs * r * (1.0 - r)).max(1.0)];
            [bit[0], bit[1], phase[0], phase[1], pairs[0], pairs[1]]
        })
        .collect();
    let sum = |i: usize| parts.iter().map(|p| p[i]).sum::<f64>();
    AoppComparison {
        sessions: parts.len(),
        z_bit_errors: sum(0) / sum(1).sqrt(),
        z_phase_flips: sum(2) / sum(3).sqrt(),
        z_untagged_pairs: sum(4) / sum(5).sqrt(),
    }
}

/// Sessions in which every finite-size bound held against simulation truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct Soundness {
    pub sessions: usize,
    pub sound: usize,
    pub vacuous: usize,
    pub n1_pre_fail: usize,
    pub e1ph_pre_fail: usize,
    pub n1_post_fail: usize,
    pub e1ph_post_fail: usize,
}

pub fn soundness(sessions: u64, total_km: f64, n_pairs: u64, eps: f64) -> Soundness {
    let mode = StatMode::Finite(eps);
    let per: Vec<[bool; 5]> = (0..sessions)
        .into_par_iter()
        .map(|seed| {
            let cfg = session(1000 + seed, total_km, n_pairs);
            let s = simulate_session(&cfg).unwrap();
            let dec = match decoy::estimate(&s.tally, &cfg.source, SliceAcceptance::Width(cfg.delta_slice), mode) {
                Ok(d) if !d.vacuous => d,
                _ => return [true, true, true, true, true],
            };
            let truth = s.truth;
            let n1_ok = dec.n1_pre.total() <= truth.untagged() as f64;
            let e_ok = truth.phase_error_rate().is_none_or(|e| dec.e1ph_pre >= e);
            let post = estimate_after_aopp(&AoppInput::from_tally(&s.tally, dec.n1_pre, dec.e1ph_pre), mode).unwrap();
            let (mc, _) = apply_aopp(&s.raw_keys, &pair_bits(&s.raw_keys.bob_bits, cfg.seed)).unwrap();
            let n1_post_ok = post.n1_post <= mc.n1_post;
            let e_post_ok = mc.n1_post == 0.0 || post.e1ph_post >= mc.e1ph_post;
            [false, n1_ok, e_ok, n1_post_ok, e_post_ok]
        })
        .collect();
    let mut out = Soundness {
        sessions: per.len(),
        ..Soundness::default()
    };
    for [vacuous, a, b, c, d] in per {
        out.vacuous += vacuous as usize;
        out.n1_pre_fail += !a as usize;
        out.e1ph_pre_fail += !b as usize;
        out.n1_post_fail += !c as usize;
        out.e1ph_post_fail += !d as usize;
        out.sound += (a && b && c && d) as usize;
    }
    out
}
