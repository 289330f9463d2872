//! CSV assembly. All floats print as `{:.8e}` (9 significant digits) so
//! reruns are byte-comparable; optional cells print empty. Each writer
//! builds the whole file in memory and hands back (name, bytes), keeping
//! output assembly single-writer.

use qme_core::{oracle, TrajectoryResult, Window};

pub const SERIES_HEADER: &str =
    "t_us,cycle_index,window,sx,sy,sz,pout_norm,pin_norm,gain_minus_1,p_excess_aw";
pub const CYCLES_HEADER: &str =
    "cycle_index,outcome_frequencies,work_j,work_normalized,cycle_gain_minus_1";
pub const SWEEP_HEADER: &str = "omega_hz,t_r_us,theta_rad,gain_minus_1,work_normalized,\
     ideal_gain_minus_1,ideal_work_normalized,t2_gain_minus_1,t2_work_normalized";
pub const WORK_VS_CYCLE_HEADER: &str =
    "cycle_index,outcome_frequencies,work_j,work_normalized,work_ratio,ideal_ratio";
pub const MAP_HEADER: &str = "theta_rad,cycle_index,work_normalized,work_ratio,ideal_ratio";

pub fn fmt(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn window_label(w: Window) -> &'static str {
    match w {
        Window::Drive => "drive",
        Window::Dead => "dead",
    }
}

/// One completed output file.
pub struct NamedOutput {
    pub name: String,
    pub data: String,
}

impl NamedOutput {
    fn new(name: &str, header: &str, rows: Vec<String>) -> NamedOutput {
        let mut data = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
        data.push_str(header);
        data.push('\n');
        for r in rows {
            data.push_str(&r);
            data.push('\n');
        }
        NamedOutput { name: name.into(), data }
    }
}

/// Time-resolved engine record; one row per sample.
pub fn series_csv(tr: &TrajectoryResult) -> NamedOutput {
    let f = &tr.field;
    assert_eq!(tr.states.len(), f.len(), "state and field series must be row-aligned");
    let mut rows = Vec::with_capacity(f.len());
    for i in 0..f.len() {
        let s = tr.states[i].state;
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{}",
            fmt(f.t[i] * 1e6),
            f.cycle_index[i],
            window_label(f.window[i]),
            fmt(s.x()),
            fmt(s.y()),
            fmt(s.z()),
            fmt(f.p_out_norm[i]),
            fmt(f.p_in_norm[i]),
            fmt_opt(f.gain[i].map(|g| g - 1.0)),
            fmt(f.p_excess[i] * 1e18),
        ));
    }
    NamedOutput::new("series.csv", SERIES_HEADER, rows)
}

/// Per-cycle summary; `outcome_frequencies` is the mean probability of
/// reporting the aligned (+x) outcome.
pub fn cycles_csv(tr: &TrajectoryResult) -> NamedOutput {
    let rows = tr
        .records
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.cycle_index,
                fmt(r.p_plus),
                fmt(r.work),
                fmt(r.work_normalized),
                fmt_opt(r.cycle_gain.map(|g| g - 1.0)),
            )
        })
        .collect();
    NamedOutput::new("cycles.csv", CYCLES_HEADER, rows)
}

/// One sweep grid point, plus the closed-form overlays at its angle.
pub struct SweepRow {
    pub omega_hz: f64,
    pub t_r_us: f64,
    pub theta: f64,
    pub gain_minus_1: Option<f64>,
    pub work_normalized: f64,
    pub ideal_gain_minus_1: f64,
    pub ideal_work_normalized: f64,
    pub t2_gain_minus_1: f64,
    pub t2_work_normalized: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> NamedOutput {
    let out = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                fmt(r.omega_hz),
                fmt(r.t_r_us),
                fmt(r.theta),
                fmt_opt(r.gain_minus_1),
                fmt(r.work_normalized),
                fmt(r.ideal_gain_minus_1),
                fmt(r.ideal_work_normalized),
                fmt(r.t2_gain_minus_1),
                fmt(r.t2_work_normalized),
            )
        })
        .collect();
    NamedOutput::new("sweep.csv", SWEEP_HEADER, out)
}

/// Per-cycle work decay with the feedback-free closed form as overlay.
/// Ratios are relative to cycle 1 and left empty if that reference is zero.
pub fn work_vs_cycle_csv(tr: &TrajectoryResult, theta: f64) -> NamedOutput {
    let w1 = tr.records.first().map_or(0.0, |r| r.work_normalized);
    let rows = tr
        .records
        .iter()
        .map(|r| {
            let ratio = (w1 != 0.0).then(|| r.work_normalized / w1);
            format!(
                "{},{},{},{},{},{}",
                r.cycle_index,
                fmt(r.p_plus),
                fmt(r.work),
                fmt(r.work_normalized),
                fmt_opt(ratio),
                fmt(oracle::open_loop_decay(r.cycle_index - 1, theta)),
            )
        })
        .collect();
    NamedOutput::new("work_vs_cycle.csv", WORK_VS_CYCLE_HEADER, rows)
}

/// One decay-map row per (theta, cycle).
pub struct MapRow {
    pub theta: f64,
    pub cycle_index: u32,
    pub work_normalized: f64,
    pub work_ratio: Option<f64>,
}

pub fn map_csv(rows: &[MapRow]) -> NamedOutput {
    let out = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                fmt(r.theta),
                r.cycle_index,
                fmt(r.work_normalized),
                fmt_opt(r.work_ratio),
                fmt(oracle::open_loop_decay(r.cycle_index - 1, r.theta)),
            )
        })
        .collect();
    NamedOutput::new("map.csv", MAP_HEADER, out)
}
