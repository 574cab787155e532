//! Source-parameter search maximising the expected key rate.
//!
//! The five source parameters live on a constrained set (a probability
//! simplex and `0 < mu_x < mu_y`), so the search runs over four free
//! coordinates: two softmax logits for `(p_v, p_x)` against `p_y`, a bounded
//! sigmoid for `mu_y`, and a bounded sigmoid for `mu_x` below `mu_y`.

pub mod nelder_mead;
pub mod scan;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoy::SliceAcceptance;
use crate::error::{Error, Result};
use crate::keyrate::{analyze_with, AnalysisOptions, KeyRateReport};
use crate::model::{ChannelConfig, SecurityParams, SourceParams};
use crate::sim::cells::{expected_tally, CellModel};
use nelder_mead::{minimize, NelderMeadOptions};

pub use scan::{plob_crossing, scan, scan_distances, ScanAxis, ScanRow};

/// Phase-slice width assumed by the expected-rate model.
pub const DEFAULT_SLICE: f64 = PI / 8.0;

/// Objective value for points the rate model cannot evaluate.
const PENALTY: f64 = -1.0;

/// Expected-value report: expected tallies analysed with finite-size bounds
/// applied to the expected counts.
pub fn expected_report(
    params: &SourceParams,
    ch: &ChannelConfig,
    n_total: f64,
    sec: &SecurityParams,
) -> Result<KeyRateReport> {
    let model = CellModel::new(params, ch, DEFAULT_SLICE, 0.0)?;
    let tally = expected_tally(&model, n_total);
    let opts = AnalysisOptions {
        finite: true,
        slice: SliceAcceptance::Width(DEFAULT_SLICE),
    };
    analyze_with(&tally, params, sec, ch, &opts)
}

/// Unclamped expected rate; insufficient or vacuous data count as zero.
fn expected_unclamped(params: &SourceParams, ch: &ChannelConfig, n_total: f64, sec: &SecurityParams) -> Result<f64> {
    match expected_report(params, ch, n_total, sec) {
        Ok(r) => Ok(r.r_unclamped),
        Err(e) if matches!(e.kind(), "insufficient-data" | "vacuous-bound") => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Expected key rate per pulse pair, clamped at zero.
pub fn expected_rate(params: &SourceParams, ch: &ChannelConfig, n_total: f64, sec: &SecurityParams) -> Result<f64> {
    Ok(expected_unclamped(params, ch, n_total, sec)?.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub mu_x: (f64, f64),
    pub mu_y: (f64, f64),
    pub p_v: (f64, f64),
    pub p_x: (f64, f64),
    pub p_y: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            mu_x: (0.005, 0.3),
            mu_y: (0.05, 1.0),
            p_v: (0.05, 0.95),
            p_x: (0.01, 0.9),
            p_y: (0.01, 0.9),
        }
    }
}

impl Bounds {
    fn pairs(&self) -> [(&'static str, (f64, f64)); 5] {
        [
            ("mu_x", self.mu_x),
            ("mu_y", self.mu_y),
            ("p_v", self.p_v),
            ("p_x", self.p_x),
            ("p_y", self.p_y),
        ]
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, (lo, hi)) in self.pairs() {
            if !(lo > 0.0 && lo < hi) {
                v.push(format!("bounds for {name} must satisfy 0 < lo < hi (got {lo}, {hi})"));
            }
        }
        for (name, (_, hi)) in &self.pairs()[2..] {
            if *hi > 1.0 {
                v.push(format!("upper bound for {name} exceeds 1"));
            }
        }
        let (p_lo, p_hi) = (
            self.p_v.0 + self.p_x.0 + self.p_y.0,
            self.p_v.1 + self.p_x.1 + self.p_y.1,
        );
        if p_lo > 1.0 || p_hi < 1.0 {
            v.push(format!(
                "probability bounds admit no point on the simplex (sum of lows {p_lo}, highs {p_hi})"
            ));
        }
        if self.mu_x.0 >= self.mu_y.1 {
            v.push("no intensities satisfy mu_x < mu_y within the bounds".into());
        }
        v
    }

    pub fn contains(&self, p: &SourceParams) -> bool {
        let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        inside(p.mu_x, self.mu_x)
            && inside(p.mu_y, self.mu_y)
            && inside(p.p_v, self.p_v)
            && inside(p.p_x, self.p_x)
            && inside(p.p_y, self.p_y)
            && p.mu_x < p.mu_y
    }

    /// Maps free coordinates to source parameters.
    pub fn decode(&self, z: &[f64]) -> SourceParams {
        let m = z[0].max(z[1]).max(0.0);
        let (ev, ex, ey) = ((z[0] - m).exp(), (z[1] - m).exp(), (-m).exp());
        let s = ev + ex + ey;
        let (p_v, p_x) = (ev / s, ex / s);
        let mu_y = self.mu_y.0 + (self.mu_y.1 - self.mu_y.0) * sigmoid(z[2]);
        let top = self.mu_x.1.min(mu_y);
        let mu_x = self.mu_x.0 + (top - self.mu_x.0) * sigmoid(z[3]);
        SourceParams {
            mu_x,
            mu_y,
            p_v,
            p_x,
            p_y: 1.0 - p_v - p_x,
        }
    }

    /// Inverse of [`Bounds::decode`] for points strictly inside the bounds.
    pub fn encode(&self, p: &SourceParams) -> Vec<f64> {
        let top = self.mu_x.1.min(p.mu_y);
        vec![
            (p.p_v / p.p_y).ln(),
            (p.p_x / p.p_y).ln(),
            logit((p.mu_y - self.mu_y.0) / (self.mu_y.1 - self.mu_y.0)),
            logit((p.mu_x - self.mu_x.0) / (top - self.mu_x.0)),
        ]
    }

    fn random_point<R: Rng>(&self, rng: &mut R) -> SourceParams {
        loop {
            let mu_y = rng.random_range(self.mu_y.0..self.mu_y.1);
            let top = self.mu_x.1.min(mu_y);
            if top <= self.mu_x.0 {
                continue;
            }
            let mu_x = rng.random_range(self.mu_x.0..top);
            let p_v = rng.random_range(self.p_v.0..self.p_v.1);
            let p_x = rng.random_range(self.p_x.0..self.p_x.1);
            let p = SourceParams {
                mu_x,
                mu_y,
                p_v,
                p_x,
                p_y: 1.0 - p_v - p_x,
            };
            if self.contains(&p) {
                return p;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub bounds: Bounds,
    /// Number of local searches, warm starts included.
    pub restarts: usize,
    /// Relative spread of rates at which a local search stops.
    pub tolerance: f64,
    /// Evaluation budget per local search.
    pub max_evals: usize,
    pub seed: u64,
    pub warm_starts: Vec<SourceParams>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            bounds: Bounds::default(),
            restarts: 8,
            tolerance: 1e-6,
            max_evals: 600,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub params: SourceParams,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub best_params: SourceParams,
    pub best_rate: f64,
    pub eval_count: usize,
    /// Every in-bounds evaluation, in search order.
    pub trace: Vec<TracePoint>,
}

struct LocalRun {
    best: Option<(SourceParams, f64)>,
    trace: Vec<TracePoint>,
    evals: usize,
}

fn local_search(
    start: SourceParams,
    cfg: &OptimizerConfig,
    ch: &ChannelConfig,
    n_total: f64,
    sec: &SecurityParams,
) -> Result<LocalRun> {
    let bounds = cfg.bounds;
    let mut trace = Vec::new();
    let mut best: Option<(SourceParams, f64)> = None;
    let mut failure: Option<Error> = None;

    let mut record = |p: SourceParams, r: f64, trace: &mut Vec<TracePoint>| {
        trace.push(TracePoint {
            params: p,
            rate: r.max(0.0),
        });
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((p, r));
        }
    };

    // the start itself is always probed exactly as given
    let r0 = expected_unclamped(&start, ch, n_total, sec)?;
    record(start, r0, &mut trace);

    let opts = NelderMeadOptions {
        step: 0.5,
        tolerance: cfg.tolerance,
        max_evals: cfg.max_evals,
    };
    let m = minimize(
        |z| {
            let p = bounds.decode(z);
            if !bounds.contains(&p) || !p.violations().is_empty() {
                return -PENALTY;
            }
            match expected_unclamped(&p, ch, n_total, sec) {
                Ok(r) => {
                    record(p, r, &mut trace);
                    -r
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    -PENALTY
                }
            }
        },
        &bounds.encode(&start),
        &opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(LocalRun {
        best,
        trace,
        evals: m.evals + 1,
    })
}

/// Multi-start downhill simplex. Warm starts come first; the remaining
/// starts are drawn uniformly inside the bounds from the seed.
pub fn optimize(cfg: &OptimizerConfig, ch: &ChannelConfig, n_total: f64, sec: &SecurityParams) -> Result<Optimum> {
    let mut bad = cfg.bounds.violations();
    if cfg.restarts == 0 {
        bad.push("restarts must be >= 1".into());
    }
    if !(cfg.tolerance > 0.0) {
        bad.push(format!("tolerance must be > 0 (got {})", cfg.tolerance));
    }
    if !(n_total >= 1.0) {
        bad.push(format!("n_total must be >= 1 (got {n_total})"));
    }
    bad.extend(ch.violations());
    bad.extend(sec.violations());
    for w in &cfg.warm_starts {
        if !cfg.bounds.contains(w) || !w.violations().is_empty() {
            bad.push(format!("warm start {w:?} lies outside the bounds"));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = cfg.warm_starts.clone();
    while starts.len() < cfg.restarts {
        starts.push(cfg.bounds.random_point(&mut rng));
    }
    let runs: Vec<Result<LocalRun>> = starts
        .par_iter()
        .map(|s| local_search(*s, cfg, ch, n_total, sec))
        .collect();

    let mut trace = Vec::new();
    let mut eval_count = 0;
    let mut best: Option<(SourceParams, f64)> = None;
    for run in runs {
        let run = run?;
        eval_count += run.evals;
        trace.extend(run.trace);
        if let Some((p, r)) = run.best {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((p, r));
            }
        }
    }
    let (best_params, best_unclamped) =
        best.ok_or_else(|| Error::InsufficientData("no start could be evaluated".into()))?;
    Ok(Optimum {
        best_params,
        best_rate: best_unclamped.max(0.0),
        eval_count,
        trace,
    })
}
