use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use scorerule::infer::{NullLaw, TestReport};
use scorerule::robust::{InfluenceProfile, Verdict};
use scorerule::simlab::format_sig;

use crate::args::{Format, OutArgs};
use crate::Fail;

/// What `fit` prints. `j` and `k` are absent for the Huber comparator,
/// which is not a scoring-rule fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: String,
    pub rule: String,
    pub n: usize,
    pub theta_hat: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_at_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm_at_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportOutput {
    #[serde(flatten)]
    pub report: TestReport,
    /// Whether the null value lies inside the confidence region, per level.
    pub contains: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestOutput {
    pub model: String,
    pub rule: String,
    pub n: usize,
    pub theta0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<f64>>,
    pub levels: Vec<f64>,
    pub reports: Vec<ReportOutput>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustOutput {
    pub model: String,
    pub rule: String,
    pub theta: Vec<f64>,
    pub bounded: bool,
    pub influence: InfluenceSummary,
    /// Closed-form condition for Bregman-type rules in a location model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<Verdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceSummary {
    pub sup_norm: Option<f64>,
    pub grid_sup: f64,
    pub attained_at: f64,
    pub stage_sups: Vec<f64>,
}

impl From<&InfluenceProfile> for InfluenceSummary {
    fn from(p: &InfluenceProfile) -> Self {
        Self {
            sup_norm: p.sup_norm.is_finite().then_some(p.sup_norm),
            grid_sup: p.grid_sup,
            attained_at: p.attained_at,
            stage_sups: p.stage_sups.clone(),
        }
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn null_law_text(law: &NullLaw) -> String {
    match law {
        NullLaw::ChiSq { df } => format!("chisq({df})"),
        NullLaw::MixtureChiSq { weights } => {
            let w: Vec<String> = weights.iter().map(|w| format_sig(*w)).collect();
            format!("mixture({})", w.join(";"))
        }
    }
}

pub fn json<T: Serialize>(v: &T) -> Result<String, Fail> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Fail::Numeric(scorerule::Error::Io(e.to_string())))
}

fn csv_text(records: Vec<Vec<String>>) -> Result<String, Fail> {
    let io = |e: &dyn std::fmt::Display| Fail::Numeric(scorerule::Error::Io(e.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r).map_err(|e| io(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| io(&e))?;
    String::from_utf8(bytes).map_err(|e| io(&e))
}

fn matrix_text(name: &str, m: &[Vec<f64>]) -> String {
    let mut s = format!("{name}:\n");
    for r in m {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:>14.6e}")).collect();
        s.push_str(&format!("  {}\n", cells.join(" ")));
    }
    s
}

pub fn fit_text(f: &FitOutput, format: Format) -> Result<String, Fail> {
    match format {
        Format::Json => json(f),
        Format::Csv => {
            let mut recs = vec![vec!["coord".into(), "theta_hat".into(), "se".into()]];
            for (i, t) in f.theta_hat.iter().enumerate() {
                recs.push(vec![
                    i.to_string(),
                    format_sig(*t),
                    format_sig(f.v[i][i].sqrt()),
                ]);
            }
            csv_text(recs)
        }
        Format::Pretty => {
            let mut s = format!("{} / {}, n = {}\n", f.model, f.rule, f.n);
            s.push_str(&format!(
                "converged: {} after {} iterations\n",
                f.converged, f.iterations
            ));
            for (i, t) in f.theta_hat.iter().enumerate() {
                s.push_str(&format!(
                    "theta[{i}] = {t:.6}  (se {:.6})\n",
                    f.v[i][i].sqrt()
                ));
            }
            if let (Some(j), Some(k)) = (&f.j, &f.k) {
                s.push_str(&matrix_text("J", j));
                s.push_str(&matrix_text("K", k));
            }
            s.push_str(&matrix_text("V", &f.v));
            Ok(s)
        }
    }
}

pub fn test_text(t: &TestOutput, format: Format) -> Result<String, Fail> {
    match format {
        Format::Json => json(t),
        Format::Csv => {
            let mut head: Vec<String> = ["statistic", "value", "null_law", "p_value"]
                .map(String::from)
                .to_vec();
            head.extend(t.levels.iter().map(|l| format!("contains_{l}")));
            let mut recs = vec![head];
            for r in &t.reports {
                let mut rec = vec![
                    r.report.statistic.name().to_string(),
                    format_sig(r.report.value),
                    null_law_text(&r.report.null_law),
                    format_sig(r.report.p_value),
                ];
                rec.extend(r.contains.values().map(|c| c.to_string()));
                recs.push(rec);
            }
            csv_text(recs)
        }
        Format::Pretty => {
            let mut s = format!("{} / {}, n = {}\n", t.model, t.rule, t.n);
            let mut head = format!("{:<18} {:>12} {:>10}", "statistic", "value", "p-value");
            for l in &t.levels {
                head.push_str(&format!(" {:>6}", format!("@{l}")));
            }
            s.push_str(&head);
            s.push('\n');
            for r in &t.reports {
                s.push_str(&format!(
                    "{:<18} {:>12.4} {:>10.4}",
                    r.report.statistic.name(),
                    r.report.value,
                    r.report.p_value
                ));
                for c in r.contains.values() {
                    s.push_str(&format!(" {:>6}", if *c { "in" } else { "out" }));
                }
                s.push('\n');
            }
            Ok(s)
        }
    }
}

pub fn robust_text(r: &RobustOutput, format: Format) -> Result<String, Fail> {
    match format {
        Format::Json => json(r),
        Format::Csv => {
            let recs = vec![
                ["model", "rule", "bounded", "grid_sup", "attained_at"]
                    .map(String::from)
                    .to_vec(),
                vec![
                    r.model.clone(),
                    r.rule.clone(),
                    r.bounded.to_string(),
                    format_sig(r.influence.grid_sup),
                    format_sig(r.influence.attained_at),
                ],
            ];
            csv_text(recs)
        }
        Format::Pretty => {
            let mut s = format!("{} / {} at theta = {:?}\n", r.model, r.rule, r.theta);
            s.push_str(&format!(
                "influence: {}\n",
                if r.bounded { "bounded" } else { "unbounded" }
            ));
            s.push_str(&format!(
                "largest |IF| on the grid: {:.6} at x = {}\n",
                r.influence.grid_sup, r.influence.attained_at
            ));
            if let Some(v) = &r.condition {
                s.push_str(&format!(
                    "density condition: {} (sup {:.6})\n",
                    if v.bounded { "holds" } else { "fails" },
                    v.sup
                ));
            }
            Ok(s)
        }
    }
}

pub fn emit(out: &OutArgs, text: &str) -> Result<(), Fail> {
    match &out.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Fail::usage("--out", format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
