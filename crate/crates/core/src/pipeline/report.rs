//! Report documents written by the pipeline commands and their text forms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::features::ClassLabel;
use crate::lesions::{LesionKind, SeverityStage};
use crate::trust::{Kappa, TrustReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDecision {
    pub label: ClassLabel,
    pub name: String,
    /// Weighted vote per class, No-DR first.
    pub scores: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSummary {
    pub kind: LesionKind,
    pub threshold: f64,
    pub components: usize,
    pub total_area: usize,
    pub quadrant_counts: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedDecision {
    pub label: ClassLabel,
    pub name: String,
    /// Which source set the combined grade.
    pub from: String,
}

impl CombinedDecision {
    /// The more severe of the two grades, so screening errs toward referral.
    pub fn more_severe(ensemble: ClassLabel, lesions: ClassLabel) -> Self {
        let (label, from) = match ensemble.cmp(&lesions) {
            std::cmp::Ordering::Equal => (ensemble, "both"),
            std::cmp::Ordering::Greater => (ensemble, "ensemble"),
            std::cmp::Ordering::Less => (lesions, "lesions"),
        };
        CombinedDecision {
            label,
            name: label.name().to_string(),
            from: from.to_string(),
        }
    }
}

/// Wall-clock milliseconds per stage; the only non-deterministic fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub preprocess_ms: f64,
    pub features_ms: f64,
    pub ensemble_ms: f64,
    pub lesions_ms: f64,
    pub trust_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingReport {
    pub source_id: String,
    pub ensemble: EnsembleDecision,
    pub lesions: Vec<LesionSummary>,
    pub stage: SeverityStage,
    pub combined: CombinedDecision,
    pub trust: TrustReport,
    pub config_fingerprint: String,
    pub timings: Timings,
}

impl GradingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the timings zeroed, for reproducibility comparisons.
    pub fn to_json_without_timings(&self) -> String {
        GradingReport {
            timings: Timings::default(),
            ..self.clone()
        }
        .to_json()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let s = self.ensemble.scores;
        let _ = writeln!(out, "source        {}", self.source_id);
        let _ = writeln!(
            out,
            "ensemble      {} (votes {:.3} / {:.3} / {:.3})",
            self.ensemble.name, s[0], s[1], s[2]
        );
        let _ = writeln!(
            out,
            "lesion stage  {:?} -> {}: {}",
            self.stage.five_level,
            self.stage.three_level.name(),
            self.stage.reason
        );
        let _ = writeln!(
            out,
            "combined      {} (from {})",
            self.combined.name, self.combined.from
        );
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<6}{:>11}{:>8}{:>10}  quadrants 1/2/3/4",
            "kind", "threshold", "count", "area"
        );
        for l in &self.lesions {
            let q = l.quadrant_counts;
            let _ = writeln!(
                out,
                "{:<6}{:>11.4}{:>8}{:>10}  {}/{}/{}/{}",
                l.kind.code(),
                l.threshold,
                l.components,
                l.total_area,
                q[0],
                q[1],
                q[2],
                q[3]
            );
        }
        out.push('\n');
        out.push_str(&self.trust.render_table());
        let _ = writeln!(out, "\nconfig        {}", self.config_fingerprint);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    /// Validation accuracy per class in percent; absent classes are `None`.
    pub per_class: [Option<f64>; 3],
    pub overall: f64,
}

/// Validation accuracy per model and class, ensemble last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<26}{:>9}{:>9}{:>11}{:>9}",
            "Model", "No DR", "Mild DR", "Severe DR", "Overall"
        );
        for r in &self.rows {
            let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                out,
                "{:<26}{:>9}{:>9}{:>11}{:>9.2}",
                r.model,
                cell(r.per_class[0]),
                cell(r.per_class[1]),
                cell(r.per_class[2]),
                r.overall
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    /// Lesion kind code, or `"all"` for a flat directory.
    pub group: String,
    pub pairs: usize,
    pub mean_iou: f64,
    pub mean_f1: f64,
    /// Agreement on per-image lesion presence.
    pub kappa: Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub groups: Vec<GroupMetrics>,
    /// Presence agreement pooled over every pair.
    pub overall_kappa: Kappa,
}

impl EvalReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8}{:>7}{:>9}{:>9}{:>9}  band",
            "group", "pairs", "IoU", "F1", "kappa"
        );
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{:<8}{:>7}{:>9.4}{:>9.4}{:>9.4}  {}",
                g.group, g.pairs, g.mean_iou, g.mean_f1, g.kappa.kappa, g.kappa.band
            );
        }
        let _ = writeln!(
            out,
            "overall kappa {:.4} ({})",
            self.overall_kappa.kappa, self.overall_kappa.band
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_table_layout() {
        let rows = [
            ("SVM Linear Kernel", 96.90, 90.15, 71.15),
            ("SVM Polynomial Kernel", 95.34, 89.01, 75.95),
            ("SVM Radial Basis Kernel", 96.71, 90.90, 66.92),
            ("SVM Crammer-Singer", 96.43, 89.39, 73.74),
            ("Random Forest", 92.87, 86.74, 53.73),
            ("Naive Bayes", 79.45, 83.71, 71.42),
        ];
        let table = MetricsTable {
            rows: rows
                .iter()
                .map(|&(m, a, b, c)| MetricsRow {
                    model: m.into(),
                    per_class: [Some(a), Some(b), Some(c)],
                    overall: (a + b + c) / 3.0,
                })
                .collect(),
        };
        let text = table.render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[2].starts_with("SVM Polynomial Kernel"));
        assert!(lines[2].contains(" 95.34    89.01      75.95"));
        assert!(lines[5].contains("92.87") && lines[5].contains("53.73"));
        let missing = MetricsTable {
            rows: vec![MetricsRow {
                model: "x".into(),
                per_class: [Some(50.0), None, Some(25.0)],
                overall: 40.0,
            }],
        };
        assert!(missing.render_text().lines().nth(1).unwrap().contains(" - "));
    }

    #[test]
    fn combined_takes_more_severe() {
        use ClassLabel::*;
        assert_eq!(CombinedDecision::more_severe(NoDr, SevereDr).label, SevereDr);
        assert_eq!(CombinedDecision::more_severe(MildDr, NoDr).from, "ensemble");
        assert_eq!(CombinedDecision::more_severe(MildDr, MildDr).from, "both");
    }
}
