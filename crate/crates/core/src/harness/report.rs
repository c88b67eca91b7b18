use super::RateReport;
use crate::error::{Error, Result};
use serde_json::{json, Value};
use std::io::Write;

fn io<E: Into<Error>>(e: E) -> Error {
    e.into()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per n: n, gamma_n, delta, normalized, cert, argmax_x, tail_gap, flag.
pub fn write_csv<W: Write>(report: &RateReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "gamma_n", "delta", "normalized", "cert", "argmax_x", "tail_gap", "flag"]).map_err(io)?;
    for (r, z) in report.rows.iter().zip(&report.normalized) {
        let flag = match (r.inconclusive, r.window_limited()) {
            (true, true) => "inconclusive;window",
            (true, false) => "inconclusive",
            (false, true) => "window",
            (false, false) => "",
        };
        w.write_record([r.n.to_string(), num(r.gamma_n), num(r.value), num(*z), num(r.value_error_bound), num(r.argmax_x), num(r.tail_gap), flag.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json(report: &RateReport) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .zip(&report.normalized)
        .map(|(r, z)| {
            json!({
                "n": r.n,
                "gamma_n": r.gamma_n,
                "value": r.value,
                "normalized": z,
                "cert": r.value_error_bound,
                "argmax_x": if r.argmax_x.is_finite() { json!(r.argmax_x) } else { Value::Null },
                "x_window": r.x_window,
                "tail_gap": r.tail_gap,
                "m_hat": r.m_hat,
                "inconclusive": r.inconclusive,
                "window_limited": r.window_limited(),
            })
        })
        .collect();
    let s = &report.summary;
    json!({
        "params": { "alpha": report.alpha, "p": report.p },
        "ell": report.ell,
        "kind": report.kind.name(),
        "mode": report.mode.name(),
        "normalizer": { "rate": report.normalizer.rate, "log_power": report.normalizer.log_power },
        "rows": rows,
        "summary": {
            "max_norm": s.max_norm,
            "median_norm": s.median_norm,
            "max_over_median": s.ratio(),
            "spearman": s.spearman,
            "bounded": s.bounded(),
        },
    })
}
