//! CSV rows for campaign results. Floats use six significant digits in the
//! style of C's `%g`, independent of locale.

use std::fmt::Write as _;

use crate::evacuation::{EvacuationRow, VnTimeline};
use crate::svne_sim::CampaignResult;

/// `%.6g`-style rendering: six significant digits, trailing zeros trimmed,
/// exponent form below 1e-4 or from 1e6 up.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g6).unwrap_or_else(|| "NA".into())
}

pub const SVNE_HEADER: &str = "scheme,K,H,load_erlang,seed,counted,accepted,blocked,vbr,abr,agc,asc,avg_working_paths";

pub fn svne_row(r: &CampaignResult) -> String {
    let m = &r.metrics;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.cell.scheme.scheme,
        r.cell.scheme.k,
        r.cell.scheme.h,
        fmt_g6(r.cell.load),
        r.cell.seed,
        r.counters.counted,
        r.counters.accepted,
        r.counters.blocked,
        fmt_g6(m.vbr),
        opt(m.abr),
        opt(m.agc),
        opt(m.asc),
        opt(m.avg_working_paths),
    )
}

pub fn svne_csv(results: &[CampaignResult]) -> String {
    let mut out = String::from(SVNE_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&svne_row(r));
        out.push('\n');
    }
    out
}

pub const EVAC_HEADER: &str = "scheme,topology,link_capacity_gbps,basic_bw_gbps,seed,n_dual_vns,tet_s,aet_s";

pub fn evacuation_csv(rows: &[EvacuationRow]) -> String {
    let mut out = String::from(EVAC_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme,
            r.topology,
            fmt_g6(r.link_capacity_gbps),
            fmt_g6(r.basic_bw_gbps),
            r.seed,
            r.n_dual_vns,
            opt(r.tet_s),
            opt(r.aet_s),
        );
    }
    out
}

pub const TIMELINE_HEADER: &str = "vn_id,admit_t,sync_t,done_t";

pub fn timeline_csv(timeline: &[VnTimeline]) -> String {
    let mut out = String::from(TIMELINE_HEADER);
    out.push('\n');
    for t in timeline {
        let _ = writeln!(out, "{},{},{},{}", t.vn_id, fmt_g6(t.admit_t), opt(t.sync_t), fmt_g6(t.done_t));
    }
    out
}
