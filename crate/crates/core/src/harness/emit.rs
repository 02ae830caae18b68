use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::matrix::{CellSummary, RunRecord};
use super::sim::TraceRecord;

pub const SUMMARY_HEADER: &str =
    "scenario,size_bytes,variant,rep,seed,fct_us,lost_pkts,retx_bytes,inflation,fairness,timeout";
pub const TABLE_HEADER: &str = "scenario,size_bytes,variant,n,timeouts,fct_mean_ms,fct_factor,fct_delta_ms,fct_ci_lo_ms,fct_ci_hi_ms,fct_significant,loss_mean,loss_factor,loss_delta,loss_ci_lo,loss_ci_hi,loss_significant,anova_f,anova_p,inflation_mean,fairness_median";
pub const TRACE_HEADER: &str = "time_us,flow_id,event,pkt_num,seq,len";

#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn summary_csv(rows: &[RunRecord]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let res = &r.result;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.6},{},{}",
            r.scenario,
            r.size_bytes,
            r.variant,
            r.rep,
            res.seed,
            res.fct.map_or_else(String::new, |t| t.as_micros().to_string()),
            res.lost_pkts,
            res.retransmitted_bytes,
            res.inflation_ratio,
            opt(res.fairness_ratio),
            res.timeout,
        );
    }
    s
}

pub fn table_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for c in cells {
        let _ = write!(s, "{},{},{},", c.scenario, c.size_bytes, c.variant);
        match &c.stats {
            Some(st) => {
                let _ = writeln!(
                    s,
                    "{},{},{:.3},{:.4},{:.3},{:.3},{:.3},{},{:.3},{},{:.3},{:.3},{:.3},{},{:.4},{:.6},{:.6},{}",
                    st.n,
                    st.timeouts,
                    st.fct.variant_mean,
                    st.mean_fct_factor,
                    st.fct.delta,
                    st.fct.ci95.lo,
                    st.fct.ci95.hi,
                    st.fct.significant,
                    st.loss.variant_mean,
                    st.mean_loss_factor.map_or_else(String::new, |f| format!("{f:.4}")),
                    st.loss.delta,
                    st.loss.ci95.lo,
                    st.loss.ci95.hi,
                    st.loss.significant,
                    st.fct.anova.f,
                    st.fct.anova.p,
                    st.mean_inflation,
                    opt(st.median_fairness),
                );
            }
            None => {
                let _ = writeln!(s, "{},{}{}", c.n, c.timeouts, ",".repeat(16));
            }
        }
    }
    s
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in records {
        let _ =
            writeln!(s, "{},{},{},{},{},{}", r.time.as_micros(), r.flow_id, r.event.name(), r.pkt_num, r.seq, r.len);
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), EmitError> {
    let err = |source| EmitError { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    fs::write(path, contents).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_give_headers() {
        assert_eq!(summary_csv(&[]), format!("{SUMMARY_HEADER}\n"));
        assert_eq!(table_csv(&[]), format!("{TABLE_HEADER}\n"));
        assert_eq!(trace_csv(&[]), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn column_counts_agree() {
        assert_eq!(SUMMARY_HEADER.split(',').count(), 11);
        let blank = CellSummary {
            scenario: "x".into(),
            size_bytes: 1,
            variant: "baseline".into(),
            n: 0,
            timeouts: 0,
            stats: None,
        };
        let t = table_csv(&[blank]);
        let row = t.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), TABLE_HEADER.split(',').count());
    }

    #[test]
    fn unwritable_path_reports_path() {
        let err = write_file(Path::new("/proc/definitely/not/here.csv"), "x").unwrap_err();
        assert!(err.to_string().contains("/proc/definitely"));
    }
}
