//! Aggregation of evaluation records into a per-mode comparison table.

use bivo_planner::PlannerMode;
use serde::{Deserialize, Serialize};

use crate::replay::{EvalRecord, LoopKind};
use crate::SimError;

/// One mode's mean hindsight cost over three record buckets: all open-loop
/// records, the open-loop records from critical scenes, and closed-loop
/// records. Deltas are percentages relative to the Oracle's mean in the
/// same bucket, absent when the Oracle has no records there or its mean
/// is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: PlannerMode,
    pub open_records: usize,
    pub open_mean: Option<f64>,
    pub open_delta_pct: Option<f64>,
    pub critical_records: usize,
    pub critical_mean: Option<f64>,
    pub critical_delta_pct: Option<f64>,
    pub closed_records: usize,
    pub closed_mean: Option<f64>,
    pub closed_delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ModeRow>,
}

fn bucket_mean<'a>(records: impl Iterator<Item = &'a EvalRecord>) -> (usize, Option<f64>) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for r in records {
        n += 1;
        sum += r.hindsight.total;
    }
    (n, (n > 0).then(|| sum / n as f64))
}

fn delta_pct(mean: Option<f64>, oracle: Option<f64>) -> Option<f64> {
    match (mean, oracle) {
        (Some(m), Some(o)) if o != 0.0 => Some((m - o) / o * 100.0),
        _ => None,
    }
}

/// Aggregate evaluation records, per mode in canonical mode order. Modes
/// with no records are dropped rather than rendered as empty rows.
pub fn aggregate_report(records: &[EvalRecord]) -> Result<Report, SimError> {
    if records.is_empty() {
        return Err(SimError::EmptyRecords);
    }
    let means = |mode: PlannerMode| {
        let of_mode = records.iter().filter(move |r| r.mode == mode);
        let (open_n, open) = bucket_mean(of_mode.clone().filter(|r| r.loop_kind == LoopKind::Open));
        let (crit_n, crit) = bucket_mean(
            of_mode
                .clone()
                .filter(|r| r.loop_kind == LoopKind::Open && r.critical),
        );
        let (closed_n, closed) = bucket_mean(of_mode.filter(|r| r.loop_kind == LoopKind::Closed));
        (open_n, open, crit_n, crit, closed_n, closed)
    };
    let (_, oracle_open, _, oracle_crit, _, oracle_closed) = means(PlannerMode::Oracle);
    let mut rows = Vec::new();
    for mode in PlannerMode::ALL {
        let (open_n, open, crit_n, crit, closed_n, closed) = means(mode);
        if open_n + crit_n + closed_n == 0 {
            continue;
        }
        rows.push(ModeRow {
            mode,
            open_records: open_n,
            open_mean: open,
            open_delta_pct: delta_pct(open, oracle_open),
            critical_records: crit_n,
            critical_mean: crit,
            critical_delta_pct: delta_pct(crit, oracle_crit),
            closed_records: closed_n,
            closed_mean: closed,
            closed_delta_pct: delta_pct(closed, oracle_closed),
        });
    }
    Ok(Report { rows })
}

fn cell(mean: Option<f64>, delta: Option<f64>, n: usize) -> String {
    match mean {
        None => "-".to_string(),
        Some(m) => {
            let d = delta
                .map(|d| format!(" ({d:+.1}%)"))
                .unwrap_or_default();
            format!("{m:.3}{d} [n={n}]")
        }
    }
}

impl Report {
    /// Plain-text table, one row per mode.
    pub fn render(&self) -> String {
        let mut lines = Vec::with_capacity(self.rows.len() + 1);
        let header = format!(
            "{:<24} | {:<28} | {:<28} | {:<28}",
            "mode", "open (all)", "open (critical)", "closed"
        );
        let rule = "-".repeat(header.len());
        lines.push(header);
        lines.push(rule);
        for row in &self.rows {
            lines.push(format!(
                "{:<24} | {:<28} | {:<28} | {:<28}",
                row.mode.as_str(),
                cell(row.open_mean, row.open_delta_pct, row.open_records),
                cell(row.critical_mean, row.critical_delta_pct, row.critical_records),
                cell(row.closed_mean, row.closed_delta_pct, row.closed_records),
            ));
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bivo_planner::CostBreakdown;

    fn record(mode: PlannerMode, total: f64, loop_kind: LoopKind, critical: bool) -> EvalRecord {
        let cost = CostBreakdown::assemble(total, 0.0, 0.0, 0.0, 0.0);
        EvalRecord {
            scene_id: "s".into(),
            step: 0,
            mode,
            loop_kind,
            planned: cost,
            hindsight: cost,
            critical,
            emergency: false,
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(aggregate_report(&[]), Err(SimError::EmptyRecords)));
    }

    #[test]
    fn oracle_delta_is_zero_against_itself() {
        let records = vec![
            record(PlannerMode::Oracle, 2.0, LoopKind::Open, false),
            record(PlannerMode::Oracle, 4.0, LoopKind::Open, false),
        ];
        let report = aggregate_report(&records).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.open_records, 2);
        assert_eq!(row.open_mean, Some(3.0));
        assert_eq!(row.open_delta_pct, Some(0.0));
        assert_eq!(row.critical_records, 0);
        assert_eq!(row.critical_mean, None);
    }

    #[test]
    fn buckets_and_deltas_recompute_independently() {
        // NoReasoning: open means 6 overall, 8 on the critical slice;
        // Oracle: 4 overall, 4 on the critical slice. Closed loop only the
        // NoReasoning mode ran, so its closed delta is absent.
        let records = vec![
            record(PlannerMode::NoReasoning, 4.0, LoopKind::Open, false),
            record(PlannerMode::NoReasoning, 8.0, LoopKind::Open, true),
            record(PlannerMode::NoReasoning, 5.0, LoopKind::Closed, true),
            record(PlannerMode::Oracle, 4.0, LoopKind::Open, false),
            record(PlannerMode::Oracle, 4.0, LoopKind::Open, true),
        ];
        let report = aggregate_report(&records).unwrap();
        assert_eq!(report.rows.len(), 2);
        let nr = &report.rows[0];
        assert_eq!(nr.mode, PlannerMode::NoReasoning);
        assert!((nr.open_mean.unwrap() - 6.0).abs() < 1e-9);
        assert!((nr.open_delta_pct.unwrap() - 50.0).abs() < 1e-9);
        assert!((nr.critical_mean.unwrap() - 8.0).abs() < 1e-9);
        assert!((nr.critical_delta_pct.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(nr.closed_records, 1);
        assert_eq!(nr.closed_mean, Some(5.0));
        assert_eq!(nr.closed_delta_pct, None, "oracle never ran closed loop");
        let or = &report.rows[1];
        assert_eq!(or.mode, PlannerMode::Oracle);
        assert_eq!(or.open_delta_pct, Some(0.0));
    }

    #[test]
    fn rows_follow_canonical_mode_order() {
        let records = vec![
            record(PlannerMode::Oracle, 1.0, LoopKind::Open, false),
            record(PlannerMode::Bivo, 1.0, LoopKind::Open, false),
            record(PlannerMode::NoReasoning, 1.0, LoopKind::Open, false),
        ];
        let report = aggregate_report(&records).unwrap();
        let modes: Vec<PlannerMode> = report.rows.iter().map(|r| r.mode).collect();
        assert_eq!(
            modes,
            vec![PlannerMode::Bivo, PlannerMode::NoReasoning, PlannerMode::Oracle]
        );
    }

    #[test]
    fn render_produces_one_line_per_mode() {
        let records = vec![
            record(PlannerMode::Oracle, 1.5, LoopKind::Open, false),
            record(PlannerMode::NoReasoning, 3.0, LoopKind::Open, false),
        ];
        let text = aggregate_report(&records).unwrap().render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4, "header, rule, two mode rows");
        assert!(lines[2].starts_with("no_reasoning"));
        assert!(lines[2].contains("+100.0%"));
        assert!(lines[3].starts_with("oracle"));
    }
}
