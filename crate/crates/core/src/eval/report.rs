//! Per-case score aggregation into batch reports, and the trend artifacts
//! (a fixed-header CSV plus one deterministic SVG line chart per metric).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REPORT_SCHEMA: &str = "metric-report/v1";

/// Fixed header of the trend table; documented bit-exact in `docs/formats.md`.
pub const TREND_CSV_HEADER: &str = "batch_index,phase,n_cases,exam_precision,diag_accuracy,\
treatment_alignment,total_input_tokens,self_bleu4,tfidf_diversity,perplexity";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no reports to render")]
    Empty,
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Scores of one completed case. `treatment_alignment` is `None` when the
/// judge reply stayed unparseable; such cases are excluded from the alignment
/// mean and counted as judge failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScores {
    pub exam_precision: f64,
    pub diag_accuracy: u8,
    pub treatment_alignment: Option<f64>,
    pub input_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityBlock {
    pub self_bleu4: f64,
    pub tfidf_diversity: f64,
}

/// Optional judge summary attached by offline evaluation commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeBlock {
    pub mean_scores: std::collections::BTreeMap<String, f64>,
    pub n_judged: usize,
}

/// Batch-level aggregate of the four capability/efficiency metrics, with
/// optional diversity and judge blocks and an externally supplied perplexity
/// slot (never computed here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub batch_index: usize,
    pub phase: Phase,
    pub n_cases: usize,
    pub exam_precision: f64,
    pub diag_accuracy: f64,
    pub treatment_alignment: f64,
    pub judged_cases: usize,
    pub judge_failures: usize,
    pub total_input_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diversity: Option<DiversityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
}

/// Case-weighted aggregation. `total_input_tokens` is the ledger delta for
/// the aggregated window; under sequential processing it equals the sum of
/// the per-case token counts.
pub fn aggregate(
    scores: &[CaseScores],
    total_input_tokens: u64,
    batch_index: usize,
    phase: Phase,
) -> MetricReport {
    let n = scores.len();
    let judged: Vec<f64> = scores.iter().filter_map(|s| s.treatment_alignment).collect();
    let mean = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
    MetricReport {
        schema: REPORT_SCHEMA.to_string(),
        batch_index,
        phase,
        n_cases: n,
        exam_precision: mean(scores.iter().map(|s| s.exam_precision).sum(), n),
        diag_accuracy: mean(scores.iter().map(|s| f64::from(s.diag_accuracy)).sum(), n),
        treatment_alignment: mean(judged.iter().sum(), judged.len()),
        judged_cases: judged.len(),
        judge_failures: n - judged.len(),
        total_input_tokens,
        diversity: None,
        judge: None,
        perplexity: None,
    }
}

/// Merges two aggregates over disjoint case sets. Associative and commutative
/// up to floating-point rounding, so parallel reduction agrees with the
/// sequential fold.
pub fn merge(a: &MetricReport, b: &MetricReport) -> MetricReport {
    let n = a.n_cases + b.n_cases;
    let judged = a.judged_cases + b.judged_cases;
    let wmean = |xa: f64, na: usize, xb: f64, nb: usize| {
        let total = na + nb;
        if total == 0 {
            0.0
        } else {
            (xa * na as f64 + xb * nb as f64) / total as f64
        }
    };
    MetricReport {
        schema: REPORT_SCHEMA.to_string(),
        batch_index: a.batch_index.max(b.batch_index),
        phase: a.phase,
        n_cases: n,
        exam_precision: wmean(a.exam_precision, a.n_cases, b.exam_precision, b.n_cases),
        diag_accuracy: wmean(a.diag_accuracy, a.n_cases, b.diag_accuracy, b.n_cases),
        treatment_alignment: wmean(
            a.treatment_alignment,
            a.judged_cases,
            b.treatment_alignment,
            b.judged_cases,
        ),
        judged_cases: judged,
        judge_failures: a.judge_failures + b.judge_failures,
        total_input_tokens: a.total_input_tokens + b.total_input_tokens,
        diversity: None,
        judge: None,
        perplexity: None,
    }
}

impl MetricReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReportError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn csv_float(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(csv_float).unwrap_or_default()
}

/// Writes `trend.csv` plus one SVG polyline chart per metric into `out_dir`.
/// Output bytes are a pure function of the report history.
pub fn emit_trend_report(
    history: &[MetricReport],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, ReportError> {
    if history.is_empty() {
        return Err(ReportError::Empty);
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut reports: Vec<&MetricReport> = history.iter().collect();
    reports.sort_by_key(|r| (r.batch_index, r.phase.as_str()));

    let mut written = Vec::new();

    let mut csv = String::new();
    csv.push_str(TREND_CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.batch_index,
            r.phase.as_str(),
            r.n_cases,
            csv_float(r.exam_precision),
            csv_float(r.diag_accuracy),
            csv_float(r.treatment_alignment),
            r.total_input_tokens,
            csv_opt(r.diversity.as_ref().map(|d| d.self_bleu4)),
            csv_opt(r.diversity.as_ref().map(|d| d.tfidf_diversity)),
            csv_opt(r.perplexity),
        ));
    }
    let csv_path = out_dir.join("trend.csv");
    fs::write(&csv_path, csv).map_err(|source| ReportError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    written.push(csv_path);

    type ValueOf = fn(&MetricReport) -> f64;
    let metrics: [(&str, &str, ValueOf); 4] = [
        ("exam_precision", "Examination Precision", |r| r.exam_precision),
        ("diag_accuracy", "Diagnostic Accuracy", |r| r.diag_accuracy),
        (
            "treatment_alignment",
            "Treatment Plan Alignment",
            |r| r.treatment_alignment,
        ),
        (
            "total_input_tokens",
            "Total Input Tokens",
            |r| r.total_input_tokens as f64,
        ),
    ];
    for (slug, title, value_of) in metrics {
        let path = out_dir.join(format!("{slug}.svg"));
        let svg = render_chart(title, &reports, value_of);
        fs::write(&path, svg).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 40.0;

/// One polyline per phase present in the history, batch index on the x axis.
fn render_chart(title: &str, reports: &[&MetricReport], value_of: fn(&MetricReport) -> f64) -> String {
    let xs: Vec<usize> = reports.iter().map(|r| r.batch_index).collect();
    let values: Vec<f64> = reports.iter().map(|r| value_of(r)).collect();
    let x_min = *xs.iter().min().unwrap() as f64;
    let x_max = *xs.iter().max().unwrap() as f64;
    let mut y_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let x_of = |x: f64| {
        if (x_max - x_min).abs() < 1e-12 {
            MARGIN_L + plot_w / 2.0
        } else {
            MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w
        }
    };
    let y_of = |y: f64| MARGIN_T + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" viewBox=\"0 0 {CHART_W} {CHART_H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        CHART_W / 2.0
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.2}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        CHART_H - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        CHART_H - MARGIN_B,
        CHART_W - MARGIN_R,
        CHART_H - MARGIN_B
    ));
    // axis labels
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.2}</text>\n",
        MARGIN_L - 6.0,
        MARGIN_T + 4.0,
        y_max
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.2}</text>\n",
        MARGIN_L - 6.0,
        CHART_H - MARGIN_B + 4.0,
        y_min
    ));
    svg.push_str(&format!(
        "<text x=\"{MARGIN_L}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x_min:.0}</text>\n",
        CHART_H - MARGIN_B + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x_max:.0}</text>\n",
        CHART_W - MARGIN_R,
        CHART_H - MARGIN_B + 16.0
    ));

    for (phase, color) in [(Phase::Train, "#1f77b4"), (Phase::Test, "#d62728")] {
        let series: Vec<(f64, f64)> = reports
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| (r.batch_index as f64, value_of(r)))
            .collect();
        if series.is_empty() {
            continue;
        }
        if series.len() == 1 {
            let (x, y) = series[0];
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x_of(x),
                y_of(y)
            ));
            continue;
        }
        let points = series
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", x_of(x), y_of(y)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{points}\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Parses the `points` attribute of the first polyline in an SVG chart; used
/// by tests to verify monotone rendering.
pub fn polyline_points(svg: &str) -> Vec<(f64, f64)> {
    let Some(start) = svg.find("points=\"") else {
        return Vec::new();
    };
    let rest = &svg[start + 8..];
    let Some(end) = rest.find('"') else {
        return Vec::new();
    };
    rest[..end]
        .split_whitespace()
        .filter_map(|pair| {
            let (x, y) = pair.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}
