//! CSV and text rendering for run outputs. Floats are written with 17
//! significant digits ('.' decimal, 'e' exponent) and lines end with '\n'
//! so identical runs produce byte-identical files on any platform.
//!
//! Wall-clock times never enter the deterministic outputs; they go to a
//! separate timings table callers opt into.

use crate::harness::run::{CurveRow, ResultRow, SweepTrend, TraceRow};

pub const RESULTS_HEADER: &str =
    "method,seed,steps,nfe,terminal_mse,background_mse,target_loglik,eta,flags";
pub const CURVE_HEADER: &str = "method,seed,t,sigma,error";
pub const TRACE_HEADER: &str = "method,seed,t,sigma,offset_norm,noise_step_norm";
pub const TIMINGS_HEADER: &str = "method,seed,flags,eta,wall_time_ms";

/// Shortest-nothing, fixed-width float form: one digit before the point,
/// 16 after, explicit exponent. 17 significant digits round-trip f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.seed,
            r.steps,
            r.nfe,
            fmt_opt(r.terminal_mse),
            fmt_opt(r.background_mse),
            fmt_opt(r.target_loglik),
            fmt_opt(r.eta),
            r.flags,
        ));
    }
    out
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method,
            r.seed,
            r.t,
            fmt_float(r.sigma),
            fmt_float(r.error),
        ));
    }
    out
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            r.seed,
            r.t,
            fmt_float(r.sigma),
            fmt_float(r.offset_norm),
            fmt_float(r.noise_step_norm),
        ));
    }
    out
}

pub fn timings_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(TIMINGS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method,
            r.seed,
            r.flags,
            fmt_opt(r.eta),
            fmt_opt(r.wall_time_ms),
        ));
    }
    out
}

/// Human-readable sweep digest: group means per eta plus the trend flags.
pub fn sweep_summary(trend: &SweepTrend) -> String {
    let mut out = String::from("eta,background_mse_mean,target_loglik_mean\n");
    for i in 0..trend.etas.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            trend.etas[i],
            fmt_float(trend.background_means[i]),
            fmt_float(trend.loglik_means[i]),
        ));
    }
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };
    out.push_str(&format!(
        "background trend (non-increasing as eta decreases): {}\n",
        verdict(trend.background_non_increasing)
    ));
    out.push_str(&format!(
        "target loglik trend (non-increasing as eta decreases): {}\n",
        verdict(trend.loglik_non_increasing)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ResultRow {
        ResultRow {
            method: "dna".into(),
            seed: 3,
            steps: 8,
            nfe: 16,
            terminal_mse: Some(0.125),
            background_mse: None,
            target_loglik: None,
            eta: None,
            flags: String::new(),
            wall_time_ms: Some(1.5),
        }
    }

    #[test]
    fn float_format_round_trips_to_the_bit() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            -2.5e-17,
            1e300,
            4.9e-324,
            0.0,
            123456.789,
        ] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn results_rows_leave_absent_metrics_empty() {
        let text = results_csv(&[sample_row()]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row, format!("dna,3,8,16,{},,,,", fmt_float(0.125)));
        assert!(lines.next().is_none());
        assert!(text.ends_with('\n'));
        // Wall time never leaks into the deterministic table.
        assert!(!text.contains(&fmt_float(1.5)));
    }

    #[test]
    fn timings_sidecar_carries_wall_time() {
        let text = timings_csv(&[sample_row()]);
        assert!(text.contains(&fmt_float(1.5)));
        assert!(text.starts_with(TIMINGS_HEADER));
    }

    #[test]
    fn curve_and_trace_rows_render_every_field() {
        let curve = CurveRow {
            method: "vanilla".into(),
            seed: 0,
            t: 2,
            sigma: 0.25,
            error: 1e-3,
        };
        let text = curves_csv(&[curve]);
        assert_eq!(
            text,
            format!(
                "{CURVE_HEADER}\nvanilla,0,2,{},{}\n",
                fmt_float(0.25),
                fmt_float(1e-3)
            )
        );
        let trace = TraceRow {
            method: "dna".into(),
            seed: 1,
            t: 0,
            sigma: 0.0,
            offset_norm: 0.5,
            noise_step_norm: 0.25,
        };
        let text = trace_csv(&[trace]);
        assert!(text.starts_with(TRACE_HEADER));
        assert!(text.contains(&fmt_float(0.5)));
    }

    #[test]
    fn sweep_summary_reports_means_and_verdicts() {
        let trend = SweepTrend {
            etas: vec![1.0, 0.8],
            background_means: vec![0.02, 0.01],
            loglik_means: vec![-3.0, -2.0],
            background_non_increasing: true,
            loglik_non_increasing: false,
        };
        let text = sweep_summary(&trend);
        assert!(text.contains("background trend (non-increasing as eta decreases): pass"));
        assert!(text.contains("target loglik trend (non-increasing as eta decreases): fail"));
        assert!(text.contains(&fmt_float(0.01)));
    }
}
