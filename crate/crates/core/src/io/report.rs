//! Report serialisation. JSON carries the full report; CSV carries one flat
//! row per report or scan point.
//!
//! Report CSV columns, in order: `r_per_pulse, r_unclamped, r_bps, r_tail,
//! total_secure_bits, plob_bound, plob_margin, above_plob, vacuous, n_total,
//! n1, e1ph, n_t, e_t, n_vy, n_yv, clock_hz, eta`. Scan CSV columns:
//! `distance_km, eta_db, mu_x, mu_y, p_v, p_x, p_y, r_per_pulse, r_bps, plob,
//! above_plob`. Empty cells are absent optional values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::KeyRateReport;
use crate::optimize::scan::ScanRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Scientific notation with at least six significant digits; exact, since
/// the shortest round-trip digits are kept when there are more.
pub fn render_float(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let digits = mantissa.chars().filter(char::is_ascii_digit).count();
    if digits >= 6 {
        return s;
    }
    let mut m = mantissa.to_string();
    if !m.contains('.') {
        m.push('.');
    }
    m.extend(std::iter::repeat_n('0', 6 - digits));
    format!("{m}e{exp}")
}

fn render_opt(x: Option<f64>) -> String {
    x.map(render_float).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn into_text(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("ascii csv")
}

pub fn report_to_json(report: &KeyRateReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<KeyRateReport> {
    serde_json::from_str(text).map_err(Error::from_json)
}

/// Flat view of a report, one CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub r_per_pulse: f64,
    pub r_unclamped: f64,
    pub r_bps: f64,
    pub r_tail: f64,
    pub total_secure_bits: u64,
    pub plob_bound: Option<f64>,
    pub plob_margin: Option<f64>,
    pub above_plob: bool,
    pub vacuous: bool,
    pub n_total: u64,
    pub n1: f64,
    pub e1ph: f64,
    pub n_t: f64,
    pub e_t: f64,
    pub n_vy: u64,
    pub n_yv: u64,
    pub clock_hz: f64,
    pub eta: Option<f64>,
}

impl From<&KeyRateReport> for ReportRow {
    fn from(r: &KeyRateReport) -> Self {
        let i = &r.inputs;
        ReportRow {
            r_per_pulse: r.r_per_pulse,
            r_unclamped: r.r_unclamped,
            r_bps: r.r_bps,
            r_tail: r.r_tail,
            total_secure_bits: r.total_secure_bits,
            plob_bound: r.plob_bound,
            plob_margin: r.plob_margin,
            above_plob: r.above_plob(),
            vacuous: r.vacuous,
            n_total: i.n_total,
            n1: i.n1,
            e1ph: i.e1ph,
            n_t: i.n_t,
            e_t: i.e_t,
            n_vy: i.n_vy,
            n_yv: i.n_yv,
            clock_hz: i.clock_hz,
            eta: i.eta,
        }
    }
}

const REPORT_COLUMNS: [&str; 18] = [
    "r_per_pulse",
    "r_unclamped",
    "r_bps",
    "r_tail",
    "total_secure_bits",
    "plob_bound",
    "plob_margin",
    "above_plob",
    "vacuous",
    "n_total",
    "n1",
    "e1ph",
    "n_t",
    "e_t",
    "n_vy",
    "n_yv",
    "clock_hz",
    "eta",
];

pub fn report_to_csv(report: &KeyRateReport) -> String {
    let r = ReportRow::from(report);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    w.write_record([
        render_float(r.r_per_pulse),
        render_float(r.r_unclamped),
        render_float(r.r_bps),
        render_float(r.r_tail),
        r.total_secure_bits.to_string(),
        render_opt(r.plob_bound),
        render_opt(r.plob_margin),
        r.above_plob.to_string(),
        r.vacuous.to_string(),
        r.n_total.to_string(),
        render_float(r.n1),
        render_float(r.e1ph),
        render_float(r.n_t),
        render_float(r.e_t),
        r.n_vy.to_string(),
        r.n_yv.to_string(),
        render_float(r.clock_hz),
        render_opt(r.eta),
    ])
    .expect("in-memory write");
    into_text(w)
}

pub fn report_rows_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

pub fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "distance_km",
        "eta_db",
        "mu_x",
        "mu_y",
        "p_v",
        "p_x",
        "p_y",
        "r_per_pulse",
        "r_bps",
        "plob",
        "above_plob",
    ])
    .expect("in-memory write");
    for r in rows {
        let mut rec: Vec<String> = [
            r.distance_km,
            r.eta_db,
            r.mu_x,
            r.mu_y,
            r.p_v,
            r.p_x,
            r.p_y,
            r.r_per_pulse,
            r.r_bps,
            r.plob,
        ]
        .into_iter()
        .map(render_float)
        .collect();
        rec.push(r.above_plob.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    into_text(w)
}

pub fn scan_from_csv(text: &str) -> Result<Vec<ScanRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrate::{secure_key_rate, KeyRateInput};
    use crate::model::SecurityParams;
    use proptest::prelude::*;

    #[test]
    fn rendering_keeps_six_digits() {
        assert_eq!(render_float(0.5), "5.00000e-1");
        assert_eq!(render_float(111735.0), "1.11735e5");
        assert_eq!(render_float(-3.0), "-3.00000e0");
        let x = 0.1 + 0.2;
        assert_eq!(render_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn json_has_schema_keys() {
        let input = KeyRateInput {
            n_total: 1_000_000_000_000_000,
            n1: 39454.0,
            e1ph: 0.1705,
            n_t: 111671.0,
            e_t: 9.44e-3,
            n_vy: 199663,
            n_yv: 198424,
            sec: SecurityParams::default(),
            clock_hz: 351e6,
            eta: Some(10f64.powf(-15.65)),
        };
        let r = secure_key_rate(&input).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report_to_json(&r)).unwrap();
        for key in ["r_per_pulse", "r_bps", "r_tail", "plob_bound"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    fn arb_report() -> impl Strategy<Value = KeyRateReport> {
        (
            1u64..u64::MAX / 4,
            0.0..1e9f64,
            0.0..0.5f64,
            0.0..1e9f64,
            0.0..0.5f64,
            0u64..1_000_000,
            0u64..1_000_000,
            1e6..1e10f64,
            prop::option::of(1e-20..1.0f64),
        )
            .prop_filter_map("valid input", |(n, n1, e1, nt, et, vy, yv, clock, eta)| {
                let input = KeyRateInput {
                    n_total: n,
                    n1: n1.min(n as f64),
                    e1ph: e1,
                    n_t: nt.min(n as f64),
                    e_t: et,
                    n_vy: vy,
                    n_yv: yv,
                    sec: SecurityParams::default(),
                    clock_hz: clock,
                    eta,
                };
                secure_key_rate(&input).ok()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn json_round_trip(r in arb_report()) {
            prop_assert_eq!(report_from_json(&report_to_json(&r)).unwrap(), r);
        }

        #[test]
        fn csv_round_trip(r in arb_report()) {
            let rows = report_rows_from_csv(&report_to_csv(&r)).unwrap();
            prop_assert_eq!(rows, vec![ReportRow::from(&r)]);
        }
    }

    #[test]
    fn scan_csv_round_trip() {
        let rows = vec![ScanRow {
            distance_km: 202.0,
            eta_db: 31.6,
            mu_x: 0.1,
            mu_y: 0.5,
            p_v: 0.7,
            p_x: 0.2,
            p_y: 0.1,
            r_per_pulse: 1.24e-4,
            r_bps: 111735.0,
            plob: 1e-3,
            above_plob: false,
        }];
        assert_eq!(scan_from_csv(&scan_to_csv(&rows)).unwrap(), rows);
    }
}
