//! Plain-text tables for stdout and report files.

use std::fmt::Write as _;

use fluency_core::probe::ProbeOutcome;
use fluency_core::trainer::{CvReport, TrainReport};

pub fn fold_table(rows: &[(usize, usize, usize, f64)]) -> String {
    let mut s = String::from("fold  speakers  recordings  mean_z\n");
    for (fold, speakers, recs, mean) in rows {
        writeln!(s, "{fold:>4}  {speakers:>8}  {recs:>10}  {mean:>+7.4}").unwrap();
    }
    s
}

pub fn train_table(report: &TrainReport) -> String {
    let mut s = String::from("epoch  train_ccl  val_ccc  val_pearson\n");
    for e in &report.epochs {
        let p = e.val_pearson.map_or("-".to_string(), |p| format!("{p:.4}"));
        let mark = if e.epoch == report.best_epoch { " *" } else { "" };
        writeln!(s, "{:>5}  {:>9.4}  {:>7.4}  {:>11}{mark}", e.epoch, e.train_ccl, e.val_ccc, p)
            .unwrap();
    }
    writeln!(
        s,
        "best epoch {} with validation CCC {:.4}",
        report.best_epoch, report.best_val_ccc
    )
    .unwrap();
    s
}

pub fn cv_table(report: &CvReport) -> String {
    let mut s = String::from("fold   val  n_train  n_val  n_test  best_epoch     CCC  Pearson\n");
    for f in &report.folds {
        writeln!(
            s,
            "{:>4}  {:>4}  {:>7}  {:>5}  {:>6}  {:>10}  {:>6.4}  {:>7.4}",
            f.test_fold, f.val_fold, f.n_train, f.n_val, f.n_test, f.best_epoch, f.test.ccc, f.test.pearson
        )
        .unwrap();
    }
    writeln!(
        s,
        "pooled ({} recordings): CCC {:.4}  Pearson {:.4}",
        report.pooled.n, report.pooled.ccc, report.pooled.pearson
    )
    .unwrap();
    s
}

/// Ratio-sorted probe table; features that could not be probed are listed
/// last with the reason.
pub fn probe_table(outcomes: &[ProbeOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.feature.len()).max().unwrap_or(0).max(7);
    let mut s = format!(
        "{:<width$}  {:>5}  {:>8}  {:>5}  {:>8}  {:>8}\n",
        "feature", "k_c", "P_c", "k_b", "P_b", "P_b/P_c"
    );
    for o in outcomes {
        match &o.result {
            Ok(r) => {
                let flag = if r.unstable { "  (unstable: |P_c| small)" } else { "" };
                writeln!(
                    s,
                    "{:<width$}  {:>5}  {:>8.4}  {:>5}  {:>8.4}  {:>8.3}{flag}",
                    r.feature, r.k_c, r.p_c, r.k_b, r.p_b, r.ratio
                )
                .unwrap();
            }
            Err(e) => writeln!(s, "{:<width$}  skipped: {e}", o.feature).unwrap(),
        }
    }
    s
}
