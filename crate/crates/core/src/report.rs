//! Tables and plots built from a results file and its metadata sidecar.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::config::StageKind;
use crate::results::{ResultsRecord, RunMetadata};
use crate::schedule::CheckpointKind;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("record for stage {0} has no matching stage in the metadata")]
    UnknownStage(usize),
    #[error("stage {0} has an empty train pool")]
    EmptyPool(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(format!("unknown report format '{other}' (valid: csv, svg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub algorithm: String,
    pub stage: usize,
    pub stage_kind: StageKind,
    pub checkpoint: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

/// `"<n>-shot"` for seed checkpoints, `"<r>N"` (ratio to the pool, two
/// decimals) for label checkpoints.
pub fn checkpoint_label(kind: CheckpointKind, cumulative_target: usize, pool_size: usize) -> String {
    match kind {
        CheckpointKind::Seed => format!("{cumulative_target}-shot"),
        CheckpointKind::Label => format!("{:.2}N", cumulative_target as f64 / pool_size as f64),
    }
}

pub fn build_report(records: &[ResultsRecord], meta: &RunMetadata) -> Result<ReportTable, ReportError> {
    let algorithm = meta.algorithm.to_string();
    let rows = records
        .iter()
        .map(|r| {
            let stage = meta
                .stages
                .iter()
                .find(|s| s.stage_index == r.stage_index)
                .ok_or(ReportError::UnknownStage(r.stage_index))?;
            if r.checkpoint_kind == CheckpointKind::Label && stage.pool_size == 0 {
                return Err(ReportError::EmptyPool(r.stage_index));
            }
            Ok(ReportRow {
                algorithm: algorithm.clone(),
                stage: r.stage_index,
                stage_kind: r.stage_kind,
                checkpoint: checkpoint_label(r.checkpoint_kind, r.cumulative_target, stage.pool_size),
                accuracy: r.top1_accuracy,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(ReportTable { rows })
}

fn kind_name(kind: StageKind) -> &'static str {
    match kind {
        StageKind::Base => "base",
        StageKind::Adapt => "adapt",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl ReportTable {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Svg => self.to_svg(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,stage,checkpoint,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{}:{},{},{:.4}", r.algorithm, r.stage, kind_name(r.stage_kind), r.checkpoint, r.accuracy);
        }
        out
    }

    fn stages(&self) -> Vec<(usize, StageKind, Vec<&ReportRow>)> {
        let mut stages: Vec<(usize, StageKind, Vec<&ReportRow>)> = Vec::new();
        for r in &self.rows {
            match stages.iter_mut().find(|s| s.0 == r.stage) {
                Some(s) => s.2.push(r),
                None => stages.push((r.stage, r.stage_kind, vec![r])),
            }
        }
        stages
    }

    /// Accuracy against checkpoint position, one polyline per stage.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const LEFT: f64 = 60.0;
        const RIGHT: f64 = 150.0;
        const TOP: f64 = 30.0;
        const BOTTOM: f64 = 60.0;
        let stages = self.stages();
        let slots = stages.iter().map(|s| s.2.len()).max().unwrap_or(1).max(2);
        let plot_w = W - LEFT - RIGHT;
        let plot_h = H - TOP - BOTTOM;
        let x = |i: usize| LEFT + plot_w * i as f64 / (slots - 1) as f64;
        let y = |a: f64| TOP + plot_h * (1.0 - a.clamp(0.0, 1.0));

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let title = self.rows.first().map(|r| r.algorithm.as_str()).unwrap_or("");
        let _ = writeln!(s, r#"<text x="{LEFT}" y="18">top-1 accuracy ({})</text>"#, escape(title));
        for tick in 0..=5 {
            let a = tick as f64 / 5.0;
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{x2:.2}" y2="{yy:.2}" stroke="#dddddd"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{a:.1}</text>"##,
                yy = y(a),
                x2 = LEFT + plot_w,
                tx = LEFT - 6.0,
                ty = y(a) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{yb:.2}" stroke="black"/><line x1="{LEFT}" y1="{yb:.2}" x2="{xr:.2}" y2="{yb:.2}" stroke="black"/>"#,
            yb = TOP + plot_h,
            xr = LEFT + plot_w
        );
        if let Some((_, _, rows)) = stages.iter().max_by_key(|s| s.2.len()) {
            for (i, r) in rows.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    x(i),
                    TOP + plot_h + 16.0,
                    escape(&r.checkpoint)
                );
            }
        }
        for (n, (stage, kind, rows)) in stages.iter().enumerate() {
            let color = PALETTE[n % PALETTE.len()];
            let points: Vec<String> = rows.iter().enumerate().map(|(i, r)| format!("{:.2},{:.2}", x(i), y(r.accuracy))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
            for (i, r) in rows.iter().enumerate() {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(i), y(r.accuracy));
            }
            let ly = TOP + 14.0 + 18.0 * n as f64;
            let lx = LEFT + plot_w + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">stage {stage} ({})</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                kind_name(*kind)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
