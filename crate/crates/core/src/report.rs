//! Fixed-width leaderboard tables.

use crate::metrics::{round1, EvaluationReport};

const LABEL_WIDTH: usize = 24;
const COLUMNS: [&str; 4] = ["J&F", "N-acc", "T-acc", "Final"];

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:>8.1}", round1(v)),
        None => format!("{:>8}", "-"),
    }
}

fn clip_label(label: &str) -> String {
    if label.chars().count() <= LABEL_WIDTH {
        label.to_string()
    } else {
        let mut s: String = label.chars().take(LABEL_WIDTH - 1).collect();
        s.push('~');
        s
    }
}

/// One row per labelled report, columns in leaderboard order.
pub fn render_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a EvaluationReport)>) -> String {
    let mut out = format!("{:<LABEL_WIDTH$}", "Run");
    for c in COLUMNS {
        out.push_str(&format!("{c:>8}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(LABEL_WIDTH + 8 * COLUMNS.len()));
    out.push('\n');
    for (label, r) in rows {
        out.push_str(&format!("{:<LABEL_WIDTH$}", clip_label(label)));
        for v in [r.jf_mean, r.n_acc, r.t_acc, Some(r.final_score)] {
            out.push_str(&cell(v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report(jf: f64, n: Option<f64>, t: f64, final_score: f64) -> EvaluationReport {
        EvaluationReport {
            jf_mean: Some(jf),
            j_mean: None,
            f_mean: None,
            n_acc: n,
            t_acc: Some(t),
            final_score,
            target_queries: 0,
            no_target_queries: 0,
            per_query: BTreeMap::new(),
        }
    }

    #[test]
    fn fixed_width_rows() {
        let a = report(63.9, Some(83.3), 94.9, (63.9 + 83.3 + 94.9) / 3.0);
        let b = report(100.0, None, 100.0, 100.0);
        let table = render_table([("HNU-VPAI", &a), ("a-very-long-configuration-label", &b)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "Run                          J&F   N-acc   T-acc   Final");
        assert_eq!(lines[2], "HNU-VPAI                    63.9    83.3    94.9    80.7");
        assert_eq!(lines[3], "a-very-long-configurati~   100.0       -   100.0   100.0");
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
    }
}
