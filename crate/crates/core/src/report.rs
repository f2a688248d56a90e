//! Presentation artifacts: metric tables, persona×target grids with SVG
//! heatmaps, the reward/penalty decomposition, response proportions and
//! BAmt/accuracy scatter data.
//!
//! Every emitter is a pure function from reports to text, so re-emission is
//! byte-identical. [`write_bundle`] places the files under one directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_iterations, AggregateError, AggregatedReport, MeanStd};
use crate::exact::{self, int, Exact};
use crate::metrics::{self, MetricsReport, ScenarioKey};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed decomposition row: {0}")]
    Parse(String),
}

/// Two decimals, ties to even, leading zero dropped: `0.15 -> ".15"`,
/// `-0.05 -> "-.05"`, `1.32 -> "1.32"`.
pub fn short_decimal(value: f64) -> String {
    let text = match exact::from_f64_decimal(value) {
        Some(v) => exact::format_fixed(&v, 2),
        None => return value.to_string(),
    };
    if let Some(rest) = text.strip_prefix("-0.") {
        format!("-.{rest}")
    } else if let Some(rest) = text.strip_prefix("0.") {
        format!(".{rest}")
    } else {
        text
    }
}

/// `mean (std)` cell, e.g. `.15 (.02)`.
pub fn table_cell(value: &MeanStd) -> String {
    format!("{} ({})", short_decimal(value.mean), short_decimal(value.std))
}

fn fixed(value: f64, places: u32) -> String {
    exact::from_f64_decimal(value)
        .map(|v| exact::format_fixed(&v, places))
        .unwrap_or_else(|| value.to_string())
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row)?;
    }
    let bytes = writer.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// File-name stem for a scenario.
pub fn scenario_slug(key: &ScenarioKey) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect::<String>()
    };
    format!(
        "{}__{}__{}",
        clean(&key.model_id),
        clean(key.domain.as_str()),
        key.condition.as_str().to_ascii_lowercase()
    )
}

/// One row per (domain, model, condition): default-persona TB(p0→T),
/// BAmt(p0→T), scenario PB, default-persona BS and accuracy, each as
/// `mean (std)`. A missing value prints `-`.
pub fn emit_tables(reports: &[AggregatedReport]) -> Result<String, ReportError> {
    let mut sorted: Vec<&AggregatedReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (&a.domain, &a.model_id, a.condition).cmp(&(&b.domain, &b.model_id, b.condition)));
    let mut rows = vec![["domain", "model", "condition", "TB", "BAmt", "PB", "BS", "Acc"]
        .map(String::from)
        .to_vec()];
    for r in sorted {
        let d = r.default_persona();
        let cell = |f: &dyn Fn(&crate::aggregate::AggregatedPersona) -> MeanStd| {
            d.map(|p| table_cell(&f(p))).unwrap_or_else(|| "-".into())
        };
        rows.push(vec![
            r.domain.to_string(),
            r.model_id.clone(),
            r.condition.to_string(),
            cell(&|p| p.tb_overall),
            cell(&|p| p.bamt_overall),
            r.pb.as_ref().map(table_cell).unwrap_or_else(|| "-".into()),
            cell(&|p| p.bias_score),
            cell(&|p| p.accuracy),
        ]);
    }
    csv_string(rows)
}

/// Unrounded companion of [`emit_tables`] with one column per mean and std.
pub fn emit_raw_table(reports: &[AggregatedReport]) -> Result<String, ReportError> {
    let mut rows = vec![[
        "domain",
        "model",
        "condition",
        "persona",
        "iterations",
        "tb_mean",
        "tb_std",
        "bamt_mean",
        "bamt_std",
        "pb_mean",
        "pb_std",
        "bs_mean",
        "bs_std",
        "acc_mean",
        "acc_std",
    ]
    .map(String::from)
    .to_vec()];
    for r in reports {
        for p in &r.personas {
            let (pb_mean, pb_std) = match p.pb {
                Some(v) => (v.mean.to_string(), v.std.to_string()),
                None => (String::new(), String::new()),
            };
            rows.push(vec![
                r.domain.to_string(),
                r.model_id.clone(),
                r.condition.to_string(),
                p.persona_id.clone(),
                r.iterations.len().to_string(),
                p.tb_overall.mean.to_string(),
                p.tb_overall.std.to_string(),
                p.bamt_overall.mean.to_string(),
                p.bamt_overall.std.to_string(),
                pb_mean,
                pb_std,
                p.bias_score.mean.to_string(),
                p.bias_score.std.to_string(),
                p.accuracy.mean.to_string(),
                p.accuracy.std.to_string(),
            ]);
        }
    }
    csv_string(rows)
}

/// Persona×target grid of mean TB(p→t), followed by TB(p→T), BAmt(p→T) and
/// PB(p). Values are multiplied by 100 and printed with one decimal.
pub fn emit_matrix(report: &AggregatedReport) -> Result<String, ReportError> {
    let targets = target_order(report);
    let mut header = vec!["persona".to_string()];
    header.extend(targets.iter().cloned());
    header.extend(["TB_T", "BAmt_T", "PB"].map(String::from));
    let mut rows = vec![header];
    for p in &report.personas {
        let mut row = vec![p.persona_id.clone()];
        row.extend(targets.iter().map(|t| fixed(p.targets[t].tb.mean * 100.0, 1)));
        row.push(fixed(p.tb_overall.mean * 100.0, 1));
        row.push(fixed(p.bamt_overall.mean * 100.0, 1));
        row.push(p.pb.map(|v| fixed(v.mean * 100.0, 1)).unwrap_or_else(|| "-".into()));
        rows.push(row);
    }
    csv_string(rows)
}

fn target_order(report: &AggregatedReport) -> Vec<String> {
    report
        .personas
        .first()
        .map(|p| p.targets.keys().cloned().collect())
        .unwrap_or_default()
}

const LIGHTEST: (f64, f64, f64) = (247.0, 247.0, 247.0);
const BLUE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const RED: (f64, f64, f64) = (178.0, 24.0, 43.0);

/// Fill colour for a cell: blue for positive, red for negative, darker as
/// `|value| / max_abs` grows (clipped to 1).
pub fn shade(value: f64, max_abs: f64) -> String {
    let t = if max_abs > 0.0 {
        (value.abs() / max_abs).min(1.0)
    } else {
        0.0
    };
    let end = if value >= 0.0 { BLUE } else { RED };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(LIGHTEST.0, end.0),
        mix(LIGHTEST.1, end.1),
        mix(LIGHTEST.2, end.2)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Self-contained SVG heatmap of the grid from [`emit_matrix`]. Only the
/// target cells are shaded; summary columns are printed on white.
pub fn emit_heatmap_svg(report: &AggregatedReport) -> String {
    const CELL_W: usize = 64;
    const CELL_H: usize = 28;
    const LABEL_W: usize = 150;
    const HEADER_H: usize = 64;
    let targets = target_order(report);
    let max_abs = report
        .personas
        .iter()
        .flat_map(|p| p.targets.values().map(|t| (t.tb.mean * 100.0).abs()))
        .fold(0.0_f64, f64::max);
    let columns = targets.len() + 3;
    let width = LABEL_W + columns * CELL_W + 10;
    let height = HEADER_H + report.personas.len() * CELL_H + 10;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<title>{} / {} / {}: TB x100</title>"#,
        xml_escape(&report.model_id),
        xml_escape(report.domain.as_str()),
        report.condition
    );
    let headers = targets.iter().map(String::as_str).chain(["TB_T", "BAmt_T", "PB"]);
    for (c, name) in headers.enumerate() {
        let x = LABEL_W + c * CELL_W + CELL_W / 2;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="start" transform="rotate(-35 {x} {})">{}</text>"#,
            HEADER_H - 6,
            HEADER_H - 6,
            xml_escape(name)
        );
    }
    for (r, p) in report.personas.iter().enumerate() {
        let y = HEADER_H + r * CELL_H;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL_W - 6,
            y + CELL_H / 2 + 4,
            xml_escape(&p.persona_id)
        );
        let mut cells: Vec<(f64, Option<String>)> = targets
            .iter()
            .map(|t| {
                let v = p.targets[t].tb.mean * 100.0;
                (v, Some(shade(v, max_abs)))
            })
            .collect();
        cells.push((p.tb_overall.mean * 100.0, None));
        cells.push((p.bamt_overall.mean * 100.0, None));
        for (c, (value, fill)) in cells.into_iter().enumerate() {
            let x = LABEL_W + c * CELL_W;
            let fill = fill.unwrap_or_else(|| "#ffffff".into());
            let _ = writeln!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#cccccc"/>"##
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4,
                fixed(value, 1)
            );
        }
        let x = LABEL_W + (columns - 1) * CELL_W;
        let pb = p.pb.map(|v| fixed(v.mean * 100.0, 1)).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="#ffffff" stroke="#cccccc"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{pb}</text>"#,
            x + CELL_W / 2,
            y + CELL_H / 2 + 4
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One decomposition row. `blue` is the mean positive score per appearance,
/// `red` the magnitude of the mean negative score, so `blue - red = tb` and
/// `blue + |red| = bamt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionRow {
    pub persona_id: String,
    pub target_id: String,
    pub n_appearances: u64,
    pub blue: Exact,
    pub red: Exact,
    pub tb: Exact,
    pub bamt: Exact,
}

impl DecompositionRow {
    pub fn identities_hold(&self) -> bool {
        !self.red.is_negative() && &self.blue - &self.red == self.tb && &self.blue + self.red.abs() == self.bamt
    }
}

/// Exact decomposition for one scenario, averaged over its iterations.
pub fn decomposition_rows(reports: &[&MetricsReport]) -> Vec<DecompositionRow> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    let k = int(reports.len() as i64);
    let mut rows = Vec::new();
    for (idx, persona) in first.personas.iter().enumerate() {
        for (target, cell) in &persona.targets {
            let n = cell.n_appearances;
            let denom = &k * int(n as i64);
            let total = |f: &dyn Fn(&metrics::TargetMetrics) -> Exact| -> Exact {
                if n == 0 {
                    return int(0);
                }
                reports
                    .iter()
                    .map(|r| f(&r.personas[idx].targets[target]))
                    .sum::<Exact>()
                    / &denom
            };
            rows.push(DecompositionRow {
                persona_id: persona.persona_id.clone(),
                target_id: target.clone(),
                n_appearances: n,
                blue: total(&|c| c.sum_positive_score.0.clone()),
                red: total(&|c| c.sum_negative_score.0.abs()),
                tb: total(&|c| c.sum_score.0.clone()),
                bamt: total(&|c| c.sum_abs_score.0.clone()),
            });
        }
    }
    rows
}

const DECOMPOSITION_HEADER: [&str; 12] = [
    "persona",
    "target",
    "n_appearances",
    "blue",
    "red",
    "abs_tb",
    "bamt",
    "tb",
    "blue_exact",
    "red_exact",
    "tb_exact",
    "bamt_exact",
];

/// Per (persona, target): decimal columns for reading plus exact fraction
/// columns for checking the identities.
pub fn emit_decomposition(reports: &[&MetricsReport]) -> Result<String, ReportError> {
    let mut rows = vec![DECOMPOSITION_HEADER.map(String::from).to_vec()];
    for row in decomposition_rows(reports) {
        rows.push(vec![
            row.persona_id.clone(),
            row.target_id.clone(),
            row.n_appearances.to_string(),
            exact::format_fixed(&row.blue, 4),
            exact::format_fixed(&row.red, 4),
            exact::format_fixed(&row.tb.abs(), 4),
            exact::format_fixed(&row.bamt, 4),
            exact::format_fixed(&row.tb, 4),
            row.blue.to_string(),
            row.red.to_string(),
            row.tb.to_string(),
            row.bamt.to_string(),
        ]);
    }
    csv_string(rows)
}

/// Reads back the exact columns of [`emit_decomposition`] output.
pub fn parse_decomposition(text: &str) -> Result<Vec<DecompositionRow>, ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| ReportError::Parse(format!("missing column {i}")))
        };
        let exact_at = |i: usize| -> Result<Exact, ReportError> {
            exact::parse(field(i)?).map_err(|e| ReportError::Parse(e.to_string()))
        };
        out.push(DecompositionRow {
            persona_id: field(0)?.to_string(),
            target_id: field(1)?.to_string(),
            n_appearances: field(2)?.parse().map_err(|e| ReportError::Parse(format!("{e}")))?,
            blue: exact_at(8)?,
            red: exact_at(9)?,
            tb: exact_at(10)?,
            bamt: exact_at(11)?,
        });
    }
    Ok(out)
}

/// Share of appearances in which each target was picked as the wrong answer
/// to a positive question, to a negative question, or neither.
pub fn emit_proportions(report: &AggregatedReport) -> Result<String, ReportError> {
    let mut rows = vec![["persona", "target", "positive", "neutral", "negative"]
        .map(String::from)
        .to_vec()];
    for p in &report.personas {
        for (t, cell) in &p.targets {
            rows.push(vec![
                p.persona_id.clone(),
                t.clone(),
                fixed(cell.positive_frac.mean, 4),
                fixed(cell.neutral_frac.mean, 4),
                fixed(cell.negative_frac.mean, 4),
            ]);
        }
    }
    csv_string(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model_id: String,
    pub domain: String,
    pub condition: String,
    pub bamt: f64,
    pub accuracy: f64,
}

/// Default-persona (BAmt(p0→T), accuracy) per scenario.
pub fn scatter_points(reports: &[AggregatedReport]) -> Vec<ScatterPoint> {
    reports
        .iter()
        .filter_map(|r| {
            r.default_persona().map(|d| ScatterPoint {
                model_id: r.model_id.clone(),
                domain: r.domain.to_string(),
                condition: r.condition.to_string(),
                bamt: d.bamt_overall.mean,
                accuracy: d.accuracy.mean,
            })
        })
        .collect()
}

pub fn emit_scatter(points: &[ScatterPoint]) -> Result<String, ReportError> {
    let mut rows = vec![["model", "domain", "condition", "bamt", "accuracy"]
        .map(String::from)
        .to_vec()];
    for p in points {
        rows.push(vec![
            p.model_id.clone(),
            p.domain.clone(),
            p.condition.clone(),
            p.bamt.to_string(),
            p.accuracy.to_string(),
        ]);
    }
    csv_string(rows)
}

/// Pearson r over the scatter points; the `pearson_r` cell is empty and
/// `note` explains why when r is undefined.
pub fn emit_correlation(points: &[ScatterPoint]) -> Result<String, ReportError> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.bamt, p.accuracy)).collect();
    let (r, note) = match metrics::correlation_bamt_accuracy(&pairs) {
        Ok(r) => (r.to_string(), String::new()),
        Err(e) => (String::new(), e.to_string()),
    };
    csv_string(vec![
        ["n_points", "pearson_r", "note"].map(String::from).to_vec(),
        vec![pairs.len().to_string(), r, note],
    ])
}

/// Every artifact for a set of per-iteration reports, keyed by relative path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
}

pub fn emit_bundle(reports: &[MetricsReport]) -> Result<ReportBundle, ReportError> {
    let aggregated = aggregate_iterations(reports)?;
    let mut files = BTreeMap::new();
    files.insert("tables.csv".to_string(), emit_tables(&aggregated)?);
    files.insert("tables_raw.csv".to_string(), emit_raw_table(&aggregated)?);
    let points = scatter_points(&aggregated);
    files.insert("scatter.csv".to_string(), emit_scatter(&points)?);
    files.insert("correlation.csv".to_string(), emit_correlation(&points)?);
    files.insert(
        "aggregated.json".to_string(),
        serde_json::to_string_pretty(&aggregated).expect("aggregates serialize") + "\n",
    );
    let mut by_scenario: BTreeMap<ScenarioKey, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        by_scenario.entry(r.scenario()).or_default().push(r);
    }
    for agg in &aggregated {
        let key = agg.scenario();
        let slug = scenario_slug(&key);
        files.insert(format!("matrix/{slug}.csv"), emit_matrix(agg)?);
        files.insert(format!("matrix/{slug}.svg"), emit_heatmap_svg(agg));
        files.insert(format!("proportions/{slug}.csv"), emit_proportions(agg)?);
        let group = &by_scenario[&key];
        files.insert(format!("decomposition/{slug}.csv"), emit_decomposition(group)?);
    }
    Ok(ReportBundle { files })
}

pub fn write_bundle(bundle: &ReportBundle, dir: &Path) -> Result<(), ReportError> {
    for (rel, content) in &bundle.files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, content)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{ratio, ExactValue};
    use crate::metrics::{PersonaMetrics, TargetMetrics};
    use crate::types::{ContextCondition, Domain};

    fn ms(mean: f64, std: f64) -> MeanStd {
        MeanStd { mean, std }
    }

    #[test]
    fn short_decimals() {
        assert_eq!(short_decimal(0.15), ".15");
        assert_eq!(short_decimal(0.0), ".00");
        assert_eq!(short_decimal(1.32), "1.32");
        assert_eq!(short_decimal(-0.05), "-.05");
        assert_eq!(short_decimal(0.125), ".12");
        assert_eq!(short_decimal(-0.001), ".00");
        assert_eq!(table_cell(&ms(0.15, 0.02)), ".15 (.02)");
        assert_eq!(table_cell(&ms(0.0, 0.0)), ".00 (.00)");
    }

    fn target(sums: [i64; 4], n: u64) -> TargetMetrics {
        let [s, pos, neg, abs] = sums;
        let f = |v: i64| v as f64 / n as f64;
        TargetMetrics {
            n_appearances: n,
            sum_score: ExactValue(int(s)),
            sum_positive_score: ExactValue(int(pos)),
            sum_negative_score: ExactValue(int(neg)),
            sum_abs_score: ExactValue(int(abs)),
            tb: f(s),
            bamt: f(abs),
            positive: f(pos),
            negative: f(neg),
            positive_frac: 0.0,
            neutral_frac: 1.0,
            negative_frac: 0.0,
        }
    }

    fn report(iteration: u32, t: TargetMetrics, u: TargetMetrics) -> MetricsReport {
        MetricsReport {
            model_id: "m/1".into(),
            domain: Domain::Age,
            condition: ContextCondition::Ambiguous,
            iteration,
            personas: vec![PersonaMetrics {
                persona_id: "default".into(),
                is_default: true,
                tb_overall: (t.tb.abs() + u.tb.abs()) / 2.0,
                bamt_overall: (t.bamt + u.bamt) / 2.0,
                targets: BTreeMap::from([("nonOld".to_string(), t), ("Old".to_string(), u)]),
                pb: None,
                accuracy: 0.5,
                bias_score: 0.0,
                n_questions: 3,
                n_correct: 1,
                n_non_unknown_outputs: 2,
                n_biased_answers: 1,
            }],
            pb: None,
        }
    }

    #[test]
    fn decomposition_hand_sum() {
        // Events {+2, +2, -1} over three appearances.
        let r = report(0, target([3, 4, -1, 5], 3), target([0, 0, 0, 0], 3));
        let rows = decomposition_rows(&[&r]);
        let row = rows.iter().find(|r| r.target_id == "nonOld").unwrap();
        assert_eq!(row.blue, ratio(4, 3));
        assert_eq!(row.red, ratio(1, 3));
        assert_eq!(row.tb, int(1));
        assert_eq!(row.bamt, ratio(5, 3));
        let zero = rows.iter().find(|r| r.target_id == "Old").unwrap();
        assert_eq!(
            (zero.blue.clone(), zero.red.clone(), zero.tb.clone(), zero.bamt.clone()),
            (int(0), int(0), int(0), int(0))
        );
        assert!(rows.iter().all(DecompositionRow::identities_hold));

        let text = emit_decomposition(&[&r]).unwrap();
        assert!(text.contains("default,nonOld,3,1.3333,0.3333,1.0000,1.6667,1.0000,4/3,1/3,1,5/3"));
        assert_eq!(parse_decomposition(&text).unwrap(), rows);
    }

    #[test]
    fn decomposition_averages_iterations_exactly() {
        let a = report(0, target([3, 4, -1, 5], 3), target([0, 0, 0, 0], 3));
        let b = report(1, target([-2, 0, -2, 2], 3), target([1, 2, -1, 3], 3));
        let rows = decomposition_rows(&[&a, &b]);
        let row = rows.iter().find(|r| r.target_id == "nonOld").unwrap();
        assert_eq!(row.tb, ratio(1, 6));
        assert_eq!(row.bamt, ratio(7, 6));
        assert!(rows.iter().all(DecompositionRow::identities_hold));
    }

    #[test]
    fn matrix_scales_by_100() {
        let r = report(0, target([57, 57, 0, 57], 300), target([-33, 0, -33, 33], 300));
        let agg = aggregate_iterations(&[r]).unwrap();
        let grid = emit_matrix(&agg[0]).unwrap();
        let mut lines = grid.lines();
        assert_eq!(lines.next().unwrap(), "persona,Old,nonOld,TB_T,BAmt_T,PB");
        assert_eq!(lines.next().unwrap(), "default,-11.0,19.0,15.0,15.0,-");
    }

    #[test]
    fn shading() {
        assert_eq!(shade(0.0, 0.0), "#f7f7f7");
        assert_eq!(shade(5.0, 5.0), "#2166ac");
        assert_eq!(shade(-5.0, 5.0), "#b2182b");
        assert_eq!(shade(-50.0, 5.0), shade(-5.0, 5.0));
        let r = report(0, target([0, 0, 0, 0], 3), target([0, 0, 0, 0], 3));
        let agg = aggregate_iterations(&[r]).unwrap();
        let svg = emit_heatmap_svg(&agg[0]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("fill=\"#f7f7f7\"").count(), 2);
    }

    #[test]
    fn bundle_is_deterministic() {
        let reports = vec![
            report(0, target([3, 4, -1, 5], 3), target([0, 0, 0, 0], 3)),
            report(1, target([1, 2, -1, 3], 3), target([0, 0, 0, 0], 3)),
        ];
        let a = emit_bundle(&reports).unwrap();
        let b = emit_bundle(&reports).unwrap();
        assert_eq!(a, b);
        assert!(a.files.contains_key("matrix/m_1__Age__ambiguous.svg"));
        let tables = &a.files["tables.csv"];
        assert_eq!(
            tables.lines().nth(1).unwrap(),
            "Age,m/1,AMBIGUOUS,.33 (.24),.67 (.24),-,.00 (.00),.50 (.00)"
        );
        assert!(a.files["correlation.csv"].contains("1,,"));
    }
}
