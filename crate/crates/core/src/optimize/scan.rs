//! Grid evaluation of the expected rate over one or two parameters.

use serde::{Deserialize, Serialize};

use super::expected_rate;
use crate::error::{Error, Result};
use crate::keyrate::plob;
use crate::model::{ChannelConfig, SecurityParams, Side, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    /// Total fibre length, split evenly between the arms.
    Distance,
    MuX,
    MuY,
    /// Vacuum probability; `p_y` absorbs the change.
    Pv,
}

/// One CSV row of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub distance_km: f64,
    pub eta_db: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub p_v: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub r_per_pulse: f64,
    pub r_bps: f64,
    pub plob: f64,
    pub above_plob: bool,
}

fn apply(axis: ScanAxis, value: f64, params: &mut SourceParams, ch: &mut ChannelConfig) {
    match axis {
        ScanAxis::Distance => *ch = ch.with_total_length(value),
        ScanAxis::MuX => params.mu_x = value,
        ScanAxis::MuY => params.mu_y = value,
        ScanAxis::Pv => {
            params.p_y = 1.0 - value - params.p_x;
            params.p_v = value;
        }
    }
}

fn row(params: &SourceParams, ch: &ChannelConfig, n_total: f64, sec: &SecurityParams) -> Result<ScanRow> {
    let r = expected_rate(params, ch, n_total, sec)?;
    let bound = plob(ch.transmittance(Side::Total))?;
    Ok(ScanRow {
        distance_km: ch.total_length_km(),
        eta_db: ch.fibre_loss_db(Side::Total),
        mu_x: params.mu_x,
        mu_y: params.mu_y,
        p_v: params.p_v,
        p_x: params.p_x,
        p_y: params.p_y,
        r_per_pulse: r,
        r_bps: r * ch.clock_hz,
        plob: bound,
        above_plob: r > bound,
    })
}

/// Evaluates every point of the cartesian product of up to two axes; the
/// last axis varies fastest.
pub fn scan(
    axes: &[(ScanAxis, Vec<f64>)],
    params: &SourceParams,
    ch: &ChannelConfig,
    n_total: f64,
    sec: &SecurityParams,
) -> Result<Vec<ScanRow>> {
    if axes.is_empty() || axes.len() > 2 || axes.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Usage("a scan needs one or two non-empty axes".into()));
    }
    let mut rows = Vec::new();
    let second: &[f64] = axes.get(1).map(|(_, v)| v.as_slice()).unwrap_or(&[f64::NAN]);
    for &x in &axes[0].1 {
        for &y in second {
            let (mut p, mut c) = (*params, *ch);
            apply(axes[0].0, x, &mut p, &mut c);
            if let Some((axis, _)) = axes.get(1) {
                apply(*axis, y, &mut p, &mut c);
            }
            rows.push(row(&p, &c, n_total, sec)?);
        }
    }
    Ok(rows)
}

pub fn scan_distances(
    distances: &[f64],
    params: &SourceParams,
    ch: &ChannelConfig,
    n_total: f64,
    sec: &SecurityParams,
) -> Result<Vec<ScanRow>> {
    scan(&[(ScanAxis::Distance, distances.to_vec())], params, ch, n_total, sec)
}

/// First distance from which the rate stays above the PLOB bound for every
/// later row with a positive rate.
pub fn plob_crossing(rows: &[ScanRow]) -> Option<f64> {
    let mut crossing = None;
    for r in rows {
        if r.above_plob {
            crossing.get_or_insert(r.distance_km);
        } else if r.r_per_pulse > 0.0 {
            crossing = None;
        }
    }
    crossing
}
