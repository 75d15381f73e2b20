use std::collections::BTreeMap;
use std::path::Path;

use scorerule::estimate::fit;
use scorerule::infer::{estimate_sandwich, profile_stats, test_all, StatKind};
use scorerule::models::{ParametricModel, StdDensity};
use scorerule::robust::{check_bregman_location, influence_probe};
use scorerule::rules::Gauge;
use scorerule::simlab::{
    bundled, huber_location_scale, huber_regression, huber_wald, run_experiment, BuiltRule,
    ExperimentSpec, GaugeSpec, HuberFit, ModelSpec, RuleSpec,
};
use scorerule::{Dataset, ScoringRule};

use crate::args::{Cli, Command, DensityKind, Format, ModelArgs, ModelKind, RuleArgs};
use crate::output::{
    emit, fit_text, robust_text, rows, test_text, FitOutput, ReportOutput, RobustOutput, TestOutput,
};
use crate::Fail;

pub fn run(cli: Cli) -> Result<(), Fail> {
    match cli.command {
        Command::Fit {
            model,
            rule,
            data,
            out,
        } => {
            let data = load(&data)?;
            let setup = Setup::new(&model, &rule, &data)?;
            let f = setup.fit(&data)?;
            emit(&out, &fit_text(&f, out.format.unwrap_or(Format::Json))?)
        }
        Command::Test {
            model,
            rule,
            data,
            theta0,
            psi,
            stat,
            levels,
            out,
        } => {
            check_levels(&levels)?;
            let data = load(&data)?;
            let setup = Setup::new(&model, &rule, &data)?;
            let theta0 = parse_theta(&theta0)?;
            let t = setup.test(&data, theta0, psi, stat, levels)?;
            emit(&out, &test_text(&t, out.format.unwrap_or(Format::Csv))?)
        }
        Command::Simulate {
            spec,
            reps,
            seed,
            levels,
            out,
        } => {
            let mut spec = load_spec(&spec)?;
            if let Some(r) = reps {
                spec.replications = r;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(l) = levels {
                check_levels(&l)?;
                spec.levels = l;
            }
            spec.validate().map_err(|e| Fail::usage("--spec", e))?;
            let table = run_experiment(&spec)?;
            let text = match out.format.unwrap_or(Format::Csv) {
                Format::Csv => table.to_csv()?,
                Format::Json => table.to_json()? + "\n",
                Format::Pretty => table.to_pretty(),
            };
            emit(&out, &text)
        }
        Command::RobustCheck {
            model,
            rule,
            theta0,
            out,
        } => {
            let r = robust_check(&model, &rule, theta0.as_deref())?;
            emit(&out, &robust_text(&r, out.format.unwrap_or(Format::Json))?)
        }
    }
}

fn check_levels(levels: &[f64]) -> Result<(), Fail> {
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Fail::usage("--levels", "levels must lie in (0, 1)"));
    }
    Ok(())
}

fn load(path: &Path) -> Result<Dataset, Fail> {
    Dataset::read_csv_path(path)
        .map_err(|e| Fail::usage("--data", format!("{}: {e}", path.display())))
}

fn load_spec(name: &str) -> Result<ExperimentSpec, Fail> {
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fail::usage("--spec", format!("{name}: {e}")))?;
        ExperimentSpec::from_json(&text).map_err(|e| Fail::usage("--spec", e))
    } else {
        bundled(name).map_err(|_| {
            Fail::usage(
                "--spec",
                format!("{name} is neither a file nor one of table1, table2, table3"),
            )
        })
    }
}

fn parse_list(flag: &'static str, text: &str) -> Result<Vec<f64>, Fail> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Fail::usage(flag, format!("{s:?}: {e}")))
        })
        .collect()
}

/// A comma list, or `@file` naming the JSON written by `fit`.
fn parse_theta(text: &str) -> Result<Vec<f64>, Fail> {
    match text.strip_prefix('@') {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| Fail::usage("--theta0", format!("{path}: {e}")))?;
            let f: FitOutput = serde_json::from_str(&body)
                .map_err(|e| Fail::usage("--theta0", format!("{path}: {e}")))?;
            Ok(f.theta_hat)
        }
        None => parse_list("--theta0", text),
    }
}

fn density(d: DensityKind) -> StdDensity {
    match d {
        DensityKind::Normal => StdDensity::Normal,
        DensityKind::Logistic => StdDensity::Logistic,
        DensityKind::Cauchy => StdDensity::Cauchy,
        DensityKind::Exponential => StdDensity::Exponential,
        DensityKind::Lognormal => StdDensity::LogNormal,
    }
}

fn model_spec(a: &ModelArgs, width: Option<usize>) -> Result<ModelSpec, Fail> {
    let spec = match a.model {
        ModelKind::Location => ModelSpec::Location {
            density: density(a.density),
            scale: a.scale,
        },
        ModelKind::LocationScale => ModelSpec::LocationScale {
            density: density(a.density),
        },
        ModelKind::Equicorrelated => ModelSpec::Equicorrelated {
            q: a.q
                .or(width)
                .ok_or_else(|| Fail::usage("--q", "the equi-correlated model needs --q"))?,
        },
        ModelKind::Regression => ModelSpec::Regression {
            p: match (a.p, width) {
                (Some(p), _) => p,
                (None, Some(w)) if w >= 2 => w - 1,
                _ => return Err(Fail::usage("--p", "regression needs --p")),
            },
            sigma: a.sigma,
        },
    };
    let expect = match &spec {
        ModelSpec::Location { .. } | ModelSpec::LocationScale { .. } => 1,
        ModelSpec::Equicorrelated { q } => *q,
        ModelSpec::Regression { p, .. } => p + 1,
    };
    if let Some(w) = width {
        if w != expect {
            return Err(Fail::usage(
                "--data",
                format!(
                    "{} expects {expect} columns, the file has {w}",
                    spec.label()
                ),
            ));
        }
    }
    Ok(spec)
}

struct Setup {
    spec: ModelSpec,
    model: Box<dyn ParametricModel>,
    key: String,
    rule: BuiltRule,
}

impl Setup {
    fn build(m: &ModelArgs, r: &RuleArgs, width: Option<usize>) -> Result<Self, Fail> {
        let spec = model_spec(m, width)?;
        let rule_spec = RuleSpec::from_name(&r.rule, r.gamma).map_err(|e| {
            let flag = if e.to_string().contains("gamma") {
                "--gamma"
            } else {
                "--rule"
            };
            Fail::usage(flag, e)
        })?;
        let rule = rule_spec
            .build(&spec)
            .map_err(|e| Fail::usage("--rule", e))?;
        let model = spec.build().map_err(|e| Fail::usage("--model", e))?;
        Ok(Self {
            key: rule_spec.key(),
            spec,
            model,
            rule,
        })
    }

    fn new(m: &ModelArgs, r: &RuleArgs, data: &Dataset) -> Result<Self, Fail> {
        Self::build(m, r, Some(data.ncols()))
    }

    fn huber(&self, c: f64, data: &Dataset) -> Result<HuberFit, Fail> {
        Ok(match self.spec {
            ModelSpec::Regression { p, .. } => huber_regression(data, p, c)?,
            _ => huber_location_scale(&data.column(0), c)?,
        })
    }

    fn fit(&self, data: &Dataset) -> Result<FitOutput, Fail> {
        let (model, rule, n) = (self.spec.label(), self.key.clone(), data.n());
        match &self.rule {
            BuiltRule::Huber(c) => {
                let h = self.huber(*c, data)?;
                Ok(FitOutput {
                    model,
                    rule,
                    n,
                    theta_hat: h.theta,
                    converged: true,
                    iterations: h.iterations,
                    score_at_min: None,
                    grad_norm_at_min: None,
                    j: None,
                    k: None,
                    v: h.covariance,
                })
            }
            BuiltRule::Score(r) => {
                let f = fit(r, self.model.as_ref(), data, None)?;
                let sw = estimate_sandwich(r, self.model.as_ref(), data, &f.theta_hat)?;
                Ok(FitOutput {
                    model,
                    rule,
                    n,
                    converged: f.converged,
                    iterations: f.iterations,
                    score_at_min: Some(f.score_at_min),
                    grad_norm_at_min: Some(f.grad_norm_at_min),
                    theta_hat: f.theta_hat,
                    j: Some(rows(&sw.j)),
                    k: Some(rows(&sw.k)),
                    v: rows(&sw.v),
                })
            }
        }
    }

    fn test(
        &self,
        data: &Dataset,
        theta0: Vec<f64>,
        psi: Option<Vec<usize>>,
        stat: Option<Vec<String>>,
        levels: Vec<f64>,
    ) -> Result<TestOutput, Fail> {
        let p = self.spec.param_dim();
        let kinds = stat_kinds(stat, psi.is_some(), p)?;
        let (theta_hat, reports) = match (&self.rule, &psi) {
            (BuiltRule::Huber(c), None) => {
                if kinds != [StatKind::Wald] {
                    return Err(Fail::usage("--stat", "the Huber comparator has only wald"));
                }
                check_dim(&theta0, p)?;
                let h = self.huber(*c, data)?;
                (Some(h.theta.clone()), vec![huber_wald(&h, &theta0)?])
            }
            (BuiltRule::Huber(_), Some(_)) => {
                return Err(Fail::usage(
                    "--psi",
                    "the Huber comparator has no profile tests",
                ))
            }
            (BuiltRule::Score(r), None) => {
                check_dim(&theta0, p)?;
                self.model
                    .check_theta(&theta0)
                    .map_err(|e| Fail::usage("--theta0", e))?;
                let (f, reps) = test_all(r, self.model.as_ref(), data, &theta0, &kinds)?;
                (Some(f.theta_hat), reps)
            }
            (BuiltRule::Score(r), Some(idx)) => {
                if idx.iter().any(|&i| i >= p) {
                    return Err(Fail::usage("--psi", format!("indices must be below {p}")));
                }
                if theta0.len() != idx.len() {
                    return Err(Fail::usage(
                        "--theta0",
                        format!("with --psi give {} values of psi", idx.len()),
                    ));
                }
                let all = profile_stats(r, self.model.as_ref(), data, idx, &theta0)?;
                let picked = all
                    .into_iter()
                    .filter(|rep| kinds.contains(&rep.statistic))
                    .collect();
                (None, picked)
            }
        };
        let reports = reports
            .into_iter()
            .map(|report| {
                let contains: BTreeMap<String, bool> = levels
                    .iter()
                    .map(|l| (format!("{l}"), report.p_value > 1.0 - l))
                    .collect();
                ReportOutput { report, contains }
            })
            .collect();
        Ok(TestOutput {
            model: self.spec.label(),
            rule: self.key.clone(),
            n: data.n(),
            theta0,
            psi,
            theta_hat,
            levels,
            reports,
        })
    }
}

fn check_dim(theta0: &[f64], p: usize) -> Result<(), Fail> {
    if theta0.len() != p {
        return Err(Fail::usage(
            "--theta0",
            format!("expected {p} values, got {}", theta0.len()),
        ));
    }
    Ok(())
}

fn stat_kinds(stat: Option<Vec<String>>, profile: bool, p: usize) -> Result<Vec<StatKind>, Fail> {
    let kinds = match stat {
        Some(names) => names
            .iter()
            .map(|s| {
                StatKind::parse(s.trim())
                    .ok_or_else(|| Fail::usage("--stat", format!("unknown statistic {s}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None if profile => vec![
            StatKind::ProfileWald,
            StatKind::ProfileScore,
            StatKind::ProfileRatio,
            StatKind::ProfileRatioM1,
            StatKind::ProfileRatioInv,
        ],
        None => {
            let mut k = vec![StatKind::Wald, StatKind::Score, StatKind::Ratio];
            if p == 1 {
                k.push(StatKind::RatioAdj);
            }
            k.extend([StatKind::RatioM1, StatKind::RatioInv]);
            k
        }
    };
    for k in &kinds {
        let is_profile = k.name().starts_with("profile_");
        if is_profile != profile {
            let msg = if profile {
                format!("{} is not a profile statistic", k.name())
            } else {
                format!("{} needs --psi", k.name())
            };
            return Err(Fail::usage("--stat", msg));
        }
        if *k == StatKind::RatioAdj && p != 1 {
            return Err(Fail::usage("--stat", "ratio_adj needs a scalar parameter"));
        }
    }
    Ok(kinds)
}

fn gauge_of(rule: &RuleSpec) -> Option<Gauge> {
    match rule {
        RuleSpec::Log => Some(Gauge::Log),
        RuleSpec::Brier => Some(Gauge::Brier),
        RuleSpec::Tsallis { gamma } => GaugeSpec::Power { gamma: *gamma }.build().ok(),
        RuleSpec::Bregman { gauge } => gauge.build().ok(),
        _ => None,
    }
}

fn robust_check(m: &ModelArgs, r: &RuleArgs, theta0: Option<&str>) -> Result<RobustOutput, Fail> {
    if !matches!(m.model, ModelKind::Location | ModelKind::LocationScale) {
        return Err(Fail::usage(
            "--model",
            "robust-check supports the location and location-scale models",
        ));
    }
    let setup = Setup::build(m, r, None)?;
    let rule: &ScoringRule = match &setup.rule {
        BuiltRule::Score(r) => r,
        BuiltRule::Huber(_) => {
            return Err(Fail::usage(
                "--rule",
                "the Huber comparator is bounded by design",
            ))
        }
    };
    let theta = match theta0 {
        Some(t) => parse_list("--theta0", t)?,
        None => match setup.spec {
            ModelSpec::Location { .. } => vec![0.0],
            _ => vec![0.0, 1.0],
        },
    };
    setup
        .model
        .check_theta(&theta)
        .map_err(|e| Fail::usage("--theta0", e))?;
    let profile = influence_probe(rule, setup.model.as_ref(), &theta)?;
    let rule_spec = RuleSpec::from_name(&r.rule, r.gamma).map_err(|e| Fail::usage("--rule", e))?;
    let condition = match m.model {
        ModelKind::Location => {
            gauge_of(&rule_spec).map(|g| check_bregman_location(&g, &density(m.density)))
        }
        _ => None,
    };
    Ok(RobustOutput {
        model: setup.spec.label(),
        rule: setup.key,
        theta,
        bounded: !profile.unbounded,
        influence: (&profile).into(),
        condition,
    })
}
