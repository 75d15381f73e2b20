//! Monte Carlo checks against values known independently of the library.

use scorerule::infer::{test_all, StatKind};
use scorerule::models::{sample, LocationScaleModel};
use scorerule::simlab::{bundled, run_experiment, ExperimentSpec};
use scorerule::ScoringRule;

const REPS: usize = 2000;

/// Largest gap between the empirical distribution of `ps` and the uniform.
fn ks_uniform(mut ps: Vec<f64>) -> f64 {
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    ps.iter().enumerate().fold(0.0f64, |d, (i, p)| {
        d.max((i as f64 + 1.0) / n - p).max(p - i as f64 / n)
    })
}

#[test]
fn inverse_adjusted_p_values_are_close_to_uniform() {
    let m = LocationScaleModel::normal();
    let rule = ScoringRule::tsallis(1.5).unwrap();
    let ps: Vec<f64> = (0..REPS as u64)
        .filter_map(|seed| {
            let d = sample(&m, &[0.0, 1.0], 30, 70_000 + seed).unwrap();
            let (_, r) = test_all(&rule, &m, &d, &[0.0, 1.0], &[StatKind::RatioInv]).ok()?;
            Some(r[0].p_value)
        })
        .collect();
    assert!(
        ps.len() >= REPS * 98 / 100,
        "{} usable replications",
        ps.len()
    );
    let d = ks_uniform(ps);
    assert!(d <= 0.05, "KS distance {d}");
}

#[test]
fn profile_inverse_adjustment_covers_the_mean() {
    let spec = ExperimentSpec::from_json(
        r#"{"name": "profile", "model": {"kind": "location-scale"}, "theta": [0, 1],
            "sample_sizes": [30], "replications": 2000, "levels": [0.95], "seed": 5,
            "rows": [{"label": "inv", "rule": {"name": "tsallis", "gamma": 1.5},
                      "statistic": "profile_ratio_inv", "psi": [0]}]}"#,
    )
    .unwrap();
    let t = run_experiment(&spec).unwrap();
    let c = t.coverage("inv", "clean", 30, 0.95).unwrap().coverage;
    assert!((c - 0.95).abs() <= 0.02, "coverage {c}");
}

#[test]
fn contamination_separates_likelihood_from_tsallis() {
    let mut spec = bundled("table2").unwrap();
    spec.laws.retain(|l| l.key == "cont");
    spec.sample_sizes = vec![30];
    spec.rows.retain(|r| {
        let l = r.label();
        l == "W(theta)" || l == "W^S(theta)_inv gamma=1.5"
    });
    let t = run_experiment(&spec).unwrap();
    let w = t.coverage("W(theta)", "cont", 30, 0.95).unwrap().coverage;
    let inv = t
        .coverage("W^S(theta)_inv gamma=1.5", "cont", 30, 0.95)
        .unwrap()
        .coverage;
    assert!(w < 0.60, "likelihood ratio coverage {w}");
    assert!(inv > 0.90, "Tsallis coverage {inv}");
}
