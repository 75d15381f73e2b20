use scorerule_demo::{contaminated_fits, influence_curves, mixture_quantile};

#[test]
fn tsallis_curve_is_bounded_and_log_is_linear() {
    let c = influence_curves(2.0, 8.0, 161).unwrap();
    assert_eq!(c.x.len(), 161);
    for (x, l) in c.x.iter().zip(&c.log) {
        assert!((l - x).abs() < 1e-6, "log IF at {x}: {l}");
    }
    let peak = c.tsallis.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let edge = c.tsallis[0].abs().max(c.tsallis[160].abs());
    assert!(edge < 1e-6 * peak);
    let at = c.x[c.tsallis.iter().position(|v| v.abs() == peak).unwrap()];
    assert!((at.abs() - 1.0).abs() < 0.06, "peak at {at}");
}

#[test]
fn tsallis_fit_resists_contamination() {
    let c = contaminated_fits(200, 0.1, 10.0, 1.5, 3).unwrap();
    assert_eq!(c.data.len(), 200);
    assert!(c.outlier.iter().any(|o| *o));
    let (log, ts) = (&c.fits[0], &c.fits[1]);
    assert!(log.sigma > 1.8, "{log:?}");
    assert!((ts.sigma - 1.0).abs() < 0.25, "{ts:?}");
    assert!(ts.se_mu > 0.0);
}

#[test]
fn mixture_quantile_parses_weights() {
    let q = mixture_quantile("1", 0.95).unwrap();
    assert!((q - 3.841).abs() < 0.05);
    let q = mixture_quantile(" 2, 1 ,0.5 ", 0.95).unwrap();
    assert!((q - 9.86).abs() < 0.1);
    assert!(mixture_quantile("1, x", 0.95).is_err());
    assert!(mixture_quantile("", 0.95).is_err());
    assert!(mixture_quantile("-1", 0.95).is_err());
}
