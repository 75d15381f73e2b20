//! Monte Carlo coverage experiments.
//!
//! Each experiment crosses data laws with sample sizes. Every cell of the
//! grid runs `R` replications; each replication draws a dataset from its
//! own seed, fits every rule once, evaluates every row's statistic at the
//! true parameter and records whether the true value is covered at each
//! nominal level.

pub mod huber;
mod spec;
mod table;

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{fit_with, FitOptions, FitResult};
use crate::infer::{
    calibration_sandwich, estimate_sandwich, expected_jk_one, profile_fits, profile_reports_with,
    ratio_adj_scalar, ratio_inv, ratio_m1, ratio_value, score_stat, wald_stat, Calibration,
    EvalPoint, InfoSource, Information, NullLaw, ProfileFits, SandwichEstimate, StatKind,
    TestReport,
};
use crate::models::{table3_design, ContaminationMixture, DataGenerator, ModelAt, ParametricModel};
use crate::rng::{derive_seed, seed_rng};
use crate::rules::ScoringRule;

pub use huber::{huber_location_scale, huber_regression, huber_wald, HuberFit, HUBER_C};
pub use spec::{
    BuiltRule, Contamination, ExperimentSpec, GaugeSpec, LawSpec, ModelSpec, RowSpec, RuleSpec,
    SimStat,
};
pub use table::{format_sig, Cell, Column, CoverageRow, CoverageTable};

/// Experiment files shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("table1", include_str!("../../specs/table1.json")),
    ("table2", include_str!("../../specs/table2.json")),
    ("table3", include_str!("../../specs/table3.json")),
];

/// A bundled experiment (`table1`, `table2` or `table3`).
pub fn bundled(name: &str) -> Result<ExperimentSpec> {
    let name = name.trim_end_matches(".json");
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("no bundled experiment named {name}")))?;
    ExperimentSpec::from_json(text)
}

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SCORERULE_THREADS";

/// Worker count from `SCORERULE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs `spec` with the worker pool capped by `SCORERULE_THREADS`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<CoverageTable> {
    run_with_threads(spec, threads_from_env())
}

/// p-value of one row in one replication, or why it failed.
type Outcome = std::result::Result<f64, String>;

pub fn run_with_threads(spec: &ExperimentSpec, threads: Option<usize>) -> Result<CoverageTable> {
    spec.validate()?;
    let rules: Vec<BuiltRule> = spec
        .rows
        .iter()
        .map(|r| r.rule.build(&spec.model))
        .collect::<Result<_>>()?;
    let fixed = fixed_information(spec, &rules)?;
    let mut columns = Vec::new();
    let mut outcomes = Vec::new();
    let pool = Pool::new(threads)?;
    for law in &spec.laws {
        for &n in &spec.sample_sizes {
            let col_seed = column_seed(spec.seed, &law.key, n);
            let reps = pool.map(spec.replications, |r| {
                replicate(
                    spec,
                    &rules,
                    &fixed,
                    law,
                    n,
                    derive_seed(col_seed, r as u64),
                )
            })?;
            columns.push(Column {
                law: law.key.clone(),
                n,
            });
            outcomes.push(reps);
        }
    }
    check_failures(spec, &outcomes)?;
    Ok(CoverageTable::from_outcomes(spec, columns, &outcomes))
}

/// Seed of the (law, n) column. It depends only on the column's own key,
/// so running a subset of laws or sizes reproduces those cells exactly.
fn column_seed(master: u64, law: &str, n: usize) -> u64 {
    // FNV-1a
    let tag = law.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    derive_seed(derive_seed(master, tag), n as u64)
}

/// Per-observation expected `J`, `K` at the true θ, by rule key. Only
/// models without covariates have one; regression recomputes per dataset.
type FixedInfo = HashMap<String, (DMatrix<f64>, DMatrix<f64>)>;

fn fixed_information(spec: &ExperimentSpec, rules: &[BuiltRule]) -> Result<FixedInfo> {
    let mut out = HashMap::new();
    let expected_at_null = InfoSource::new(EvalPoint::Null, Information::Expected);
    let wanted = spec.rows.iter().any(|r| {
        let cal = r.calibration.unwrap_or(spec.calibration);
        [cal.adj, cal.m1, cal.inv].contains(&expected_at_null)
    });
    if !wanted {
        return Ok(out);
    }
    let model = spec.model.build()?;
    if model.response_dim() != model.obs_dim() {
        return Ok(out);
    }
    let row = vec![0.0; model.obs_dim()];
    for (row_spec, rule) in spec.rows.iter().zip(rules) {
        let key = row_spec.rule.key();
        if let BuiltRule::Score(r) = rule {
            if let std::collections::hash_map::Entry::Vacant(e) = out.entry(key) {
                e.insert(expected_jk_one(r, model.as_ref(), &row, &spec.theta)?);
            }
        }
    }
    Ok(out)
}

fn check_failures(spec: &ExperimentSpec, outcomes: &[Vec<Vec<Outcome>>]) -> Result<()> {
    let limit = spec.max_failure_rate * spec.replications as f64;
    for reps in outcomes {
        for row in 0..spec.rows.len() {
            let failed = reps.iter().filter(|o| o[row].is_err()).count();
            if failed as f64 > limit {
                return Err(Error::TooManyFailures {
                    failed,
                    total: spec.replications,
                });
            }
        }
    }
    Ok(())
}

struct Pool {
    #[cfg(feature = "parallel")]
    inner: rayon::ThreadPool,
}

impl Pool {
    fn new(threads: Option<usize>) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let inner = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
            Ok(Self { inner })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Ok(Self {})
        }
    }

    /// Results come back in index order whatever the completion order.
    fn map<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.inner
                .install(|| (0..count).into_par_iter().map(f).collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..count).map(f).collect()
        }
    }
}

/// Draws one replication's dataset. Regression designs are redrawn from
/// the replication seed; the responses use a derived stream.
fn draw(
    spec: &ExperimentSpec,
    law: &LawSpec,
    n: usize,
    seed: u64,
) -> Result<(Box<dyn ParametricModel>, Dataset)> {
    let design = match spec.model {
        ModelSpec::Regression { .. } => Some(table3_design(n, &mut seed_rng(seed))),
        _ => None,
    };
    let data_seed = if design.is_some() {
        derive_seed(seed, 1)
    } else {
        seed
    };
    let model = spec.model.build_scaled(1.0, design.clone())?;
    let data = match law.contamination {
        None => ModelAt::new(model.as_ref(), &spec.theta).sample(n, data_seed)?,
        Some(c) => {
            let cont = spec.model.build_scaled(c.scale, design)?;
            let theta_c = spec.model.scale_theta(&spec.theta, c.scale);
            ContaminationMixture::new(
                ModelAt::new(model.as_ref(), &spec.theta),
                ModelAt::new(cont.as_ref(), &theta_c),
                c.epsilon,
            )?
            .sample(n, data_seed)?
        }
    };
    Ok((model, data))
}

fn replicate(
    spec: &ExperimentSpec,
    rules: &[BuiltRule],
    fixed: &FixedInfo,
    law: &LawSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<Outcome>> {
    let (model, data) = draw(spec, law, n, seed)?;
    let mut ctx = Replication {
        model: model.as_ref(),
        data: &data,
        theta0: &spec.theta,
        calibration: spec.calibration,
        fixed,
        adjust: HashMap::new(),
        fits: HashMap::new(),
        nulls: HashMap::new(),
        profiles: HashMap::new(),
        profile_reports: HashMap::new(),
    };
    Ok(spec
        .rows
        .iter()
        .zip(rules)
        .map(|(row, rule)| {
            ctx.row(row, rule)
                .map(|r| r.p_value)
                .map_err(|e| e.to_string())
        })
        .collect())
}

struct FitState {
    fit: FitResult,
    at_fit: SandwichEstimate,
    ratio: f64,
}

struct Replication<'a> {
    model: &'a dyn ParametricModel,
    data: &'a Dataset,
    theta0: &'a [f64],
    calibration: Calibration,
    fixed: &'a FixedInfo,
    adjust: HashMap<(String, InfoSource), std::result::Result<SandwichEstimate, String>>,
    fits: HashMap<String, std::result::Result<FitState, String>>,
    nulls: HashMap<String, std::result::Result<SandwichEstimate, String>>,
    profiles: HashMap<(String, Vec<usize>), std::result::Result<ProfileFits, String>>,
    profile_reports: HashMap<ProfileKey, std::result::Result<Vec<TestReport>, String>>,
}

type ProfileKey = (String, Vec<usize>, Calibration);

fn failed(msg: &str) -> Error {
    Error::NoConvergence(msg.to_string())
}

impl Replication<'_> {
    fn fit_state(&mut self, key: &str, rule: &ScoringRule) -> Result<&FitState> {
        if !self.fits.contains_key(key) {
            let state = (|| {
                let fit = fit_with(rule, self.model, self.data, None, &FitOptions::default())?;
                if !fit.converged {
                    return Err(Error::NoConvergence(format!(
                        "{} fit stopped with gradient norm {:e}",
                        rule.name(),
                        fit.grad_norm_at_min
                    )));
                }
                let at_fit = estimate_sandwich(rule, self.model, self.data, &fit.theta_hat)?;
                let ratio = ratio_value(rule, self.model, self.data, self.theta0, &fit)?;
                Ok(FitState { fit, at_fit, ratio })
            })()
            .map_err(|e: Error| e.to_string());
            self.fits.insert(key.to_string(), state);
        }
        self.fits[key].as_ref().map_err(|m| failed(m))
    }

    fn at_null(&mut self, key: &str, rule: &ScoringRule) -> Result<&SandwichEstimate> {
        if !self.nulls.contains_key(key) {
            let sw = estimate_sandwich(rule, self.model, self.data, self.theta0)
                .map_err(|e| e.to_string());
            self.nulls.insert(key.to_string(), sw);
        }
        self.nulls[key].as_ref().map_err(|m| failed(m))
    }

    /// The sandwich a calibrated ratio statistic asks for.
    fn calibrated(
        &mut self,
        key: &str,
        rule: &ScoringRule,
        src: InfoSource,
    ) -> Result<&SandwichEstimate> {
        let ck = (key.to_string(), src);
        if !self.adjust.contains_key(&ck) {
            let n = self.data.n() as f64;
            let sw = match (src.information, src.at, self.fixed.get(key)) {
                (Information::Expected, EvalPoint::Null, Some((j, k))) => {
                    SandwichEstimate::from_jk(j * n, k * n)
                }
                _ => {
                    let (model, data, theta0) = (self.model, self.data, self.theta0);
                    let state = self.fit_state(key, rule)?;
                    calibration_sandwich(rule, model, data, theta0, &state.fit, &state.at_fit, src)
                }
            };
            self.adjust
                .insert(ck.clone(), sw.map_err(|e| e.to_string()));
        }
        self.adjust[&ck].as_ref().map_err(|m| failed(m))
    }

    fn row(&mut self, row: &RowSpec, rule: &BuiltRule) -> Result<TestReport> {
        let rule = match rule {
            BuiltRule::Huber(c) => return self.huber(*c),
            BuiltRule::Score(r) => r,
        };
        let key = row.rule.key();
        if row.statistic.is_profile() {
            return self.profile(&key, rule, row);
        }
        let p = self.theta0.len();
        let (model, data, theta0) = (self.model, self.data, self.theta0);
        let state = self.fit_state(&key, rule)?;
        let raw = TestReport {
            statistic: StatKind::Ratio,
            value: state.ratio,
            null_law: NullLaw::ChiSq { df: p },
            p_value: f64::NAN,
            note: None,
        };
        match row.statistic {
            SimStat::Lr => TestReport::chisq(StatKind::Ratio, state.ratio, p),
            SimStat::Wald => wald_stat(&state.fit, &state.at_fit, theta0),
            SimStat::Ratio => TestReport::new(
                StatKind::Ratio,
                state.ratio,
                NullLaw::MixtureChiSq {
                    weights: state.at_fit.ratio_weights()?,
                },
            ),
            SimStat::Score => {
                let sw = self.at_null(&key, rule)?;
                score_stat(rule, model, data, theta0, sw)
            }
            SimStat::RatioAdj | SimStat::RatioM1 | SimStat::RatioInv => {
                let cal = row.calibration.unwrap_or(self.calibration);
                let src = match row.statistic {
                    SimStat::RatioAdj => cal.adj,
                    SimStat::RatioM1 => cal.m1,
                    _ => cal.inv,
                };
                let sw = self.calibrated(&key, rule, src)?;
                match row.statistic {
                    SimStat::RatioAdj => ratio_adj_scalar(&raw, sw),
                    SimStat::RatioM1 => ratio_m1(&raw, sw),
                    _ => ratio_inv(rule, model, data, theta0, &raw, sw),
                }
            }
            _ => unreachable!("profile statistics handled above"),
        }
    }

    fn profile(&mut self, key: &str, rule: &ScoringRule, row: &RowSpec) -> Result<TestReport> {
        let psi = row.psi.clone().unwrap_or_default();
        let psi0: Vec<f64> = psi.iter().map(|&j| self.theta0[j]).collect();
        let cache_key = (key.to_string(), psi.clone());
        if !self.profiles.contains_key(&cache_key) {
            let fits = profile_fits(
                rule,
                self.model,
                self.data,
                &psi,
                &psi0,
                &FitOptions::default(),
            )
            .and_then(|f| {
                if f.full.converged && f.constrained.converged {
                    Ok(f)
                } else {
                    Err(Error::NoConvergence(format!("{} profile fit", rule.name())))
                }
            })
            .map_err(|e| e.to_string());
            self.profiles.insert(cache_key.clone(), fits);
        }
        let fits = self.profiles[&cache_key].as_ref().map_err(|m| failed(m))?;
        let cal = row.calibration.unwrap_or(self.calibration);
        let report_key = (key.to_string(), psi.clone(), cal);
        if !self.profile_reports.contains_key(&report_key) {
            let reports =
                profile_reports_with(rule, self.model, self.data, &psi, &psi0, fits, &cal)
                    .map_err(|e| e.to_string());
            self.profile_reports.insert(report_key.clone(), reports);
        }
        let reports = self.profile_reports[&report_key]
            .as_ref()
            .map_err(|m| failed(m))?;
        let want = match row.statistic {
            SimStat::ProfileWald => StatKind::ProfileWald,
            SimStat::ProfileScore => StatKind::ProfileScore,
            SimStat::ProfileRatio => StatKind::ProfileRatio,
            SimStat::ProfileRatioM1 => StatKind::ProfileRatioM1,
            _ => StatKind::ProfileRatioInv,
        };
        Ok(reports
            .iter()
            .find(|r| r.statistic == want)
            .cloned()
            .expect("profile_reports returns every profile statistic"))
    }

    fn huber(&self, c: f64) -> Result<TestReport> {
        let fit = if self.data.ncols() == 1 {
            huber_location_scale(&self.data.column(0), c)?
        } else {
            huber_regression(self.data, self.theta0.len(), c)?
        };
        huber_wald(&fit, self.theta0)
    }
}
