use tdesim::mismatch::{
    cv_reduction, mc_charge_sweep, mc_charge_sweep_with, sample_params, summarize, McSummary,
    MismatchSpec, DEFAULT_DELTA_TS,
};
use tdesim::tde::charge;
use tdesim::{Exec, TdeParams, TdeVariant};

const OLD: TdeVariant = TdeVariant::OldSingleBranch;
const NEW: TdeVariant = TdeVariant::NewDualDpi;

fn gain_only(sigma: f64) -> MismatchSpec {
    let mut spec = MismatchSpec::zero(NEW);
    spec.sigmas.insert("gain".into(), sigma);
    spec
}

#[test]
fn lognormal_log_moments() {
    let nominal = TdeParams::default();
    let sigma = 0.2;
    let spec = gain_only(sigma);
    let n = 100_000;
    let logs: Vec<f64> = (0..n)
        .map(|t| (sample_params(&nominal, &spec, 9, t).unwrap().gain / nominal.gain).ln())
        .collect();
    let m = logs.iter().sum::<f64>() / n as f64;
    let sd = (logs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(m.abs() < 3.0 * sigma / (n as f64).sqrt(), "log-mean {m}");
    // Standard error of the sample sd is sigma / sqrt(2n).
    assert!(
        (sd - sigma).abs() < 3.0 * sigma / (2.0 * n as f64).sqrt(),
        "log-sd {sd}"
    );
}

#[test]
fn unlisted_parameters_stay_nominal() {
    let nominal = TdeParams::default();
    let p = sample_params(&nominal, &gain_only(0.3), 1, 0).unwrap();
    assert_ne!(p.gain, nominal.gain);
    assert_eq!(
        TdeParams {
            gain: nominal.gain,
            ..p
        },
        nominal
    );
}

#[test]
fn trial_draws_do_not_depend_on_population_size() {
    let nominal = TdeParams::default();
    let spec = MismatchSpec::calibrated(OLD);
    let small = mc_charge_sweep(&nominal, &spec, &DEFAULT_DELTA_TS, 10, 5).unwrap();
    let large = mc_charge_sweep(&nominal, &spec, &DEFAULT_DELTA_TS, 2000, 5).unwrap();
    assert_eq!(small.charges[..], large.charges[..10]);
}

#[test]
fn execution_mode_does_not_change_results() {
    let nominal = TdeParams::default();
    let spec = MismatchSpec::calibrated(NEW);
    let a =
        mc_charge_sweep_with(&nominal, &spec, &DEFAULT_DELTA_TS, 500, 3, Exec::Sequential).unwrap();
    let b =
        mc_charge_sweep_with(&nominal, &spec, &DEFAULT_DELTA_TS, 500, 3, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_spread_reproduces_analytic_charge() {
    let nominal = TdeParams::default();
    let r = mc_charge_sweep(&nominal, &MismatchSpec::zero(NEW), &DEFAULT_DELTA_TS, 50, 0).unwrap();
    assert!(r.cv_per_dt.iter().all(|&c| c == 0.0));
    for s in summarize(&r) {
        assert_eq!(s.stddev_charge, 0.0);
        assert_eq!(s.mean_charge, charge(&nominal, NEW, s.delta_t).unwrap());
    }
}

#[test]
fn default_calibration_population() {
    let nominal = TdeParams::default();
    let old = mc_charge_sweep(
        &nominal,
        &MismatchSpec::calibrated(OLD),
        &DEFAULT_DELTA_TS,
        2000,
        1,
    )
    .unwrap();
    let new = mc_charge_sweep(
        &nominal,
        &MismatchSpec::calibrated(NEW),
        &DEFAULT_DELTA_TS,
        2000,
        1,
    )
    .unwrap();

    for r in [&old, &new] {
        for d in 0..DEFAULT_DELTA_TS.len() {
            let col: Vec<f64> = r.normalized_column(d).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            assert!((m - 1.0).abs() <= 1e-12, "normalized mean {m}");
        }
        assert!(r.cv_per_dt.iter().all(|c| c.is_finite() && *c >= 0.0));
    }
    for (o, n) in old.cv_per_dt.iter().zip(&new.cv_per_dt) {
        assert!(n < o, "cv_new {n} >= cv_old {o}");
    }
    let red = cv_reduction(&old, &new).unwrap();
    assert!((40.0..=80.0).contains(&red), "reduction {red}%");

    let summary = McSummary::new(&old, &new).unwrap();
    assert_eq!(summary.n_trials, 2000);
    assert_eq!(summary.old.rows.len(), DEFAULT_DELTA_TS.len());

    // Means fall with delta_t and fit a line in log space.
    let means: Vec<(f64, f64)> = summarize(&new)
        .iter()
        .map(|s| (s.delta_t, s.mean_charge))
        .collect();
    assert!(means.windows(2).all(|w| w[1].1 < w[0].1));
    let r2 = r_squared(&means.iter().map(|&(x, y)| (x, y.ln())).collect::<Vec<_>>());
    assert!(r2 >= 0.99, "R^2 = {r2}");
}

fn r_squared(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn csv_export_shape() {
    let nominal = TdeParams::default();
    let r = mc_charge_sweep(
        &nominal,
        &MismatchSpec::calibrated(NEW),
        &[1e-3, 5e-3],
        3,
        2,
    )
    .unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "trial,delta_t_s,charge,normalized_charge");
    assert_eq!(lines.len(), 1 + 3 * 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "0");
    assert_eq!(fields[1], "0.00100000000000");
    // Twelve significant digits, plain decimal.
    let digits = fields[2]
        .chars()
        .filter(char::is_ascii_digit)
        .collect::<String>();
    assert_eq!(digits.trim_start_matches('0').len(), 12, "{}", fields[2]);
    assert!(!fields[2].contains('e'));
}

#[test]
fn rejects_bad_arguments() {
    let nominal = TdeParams::default();
    let spec = MismatchSpec::calibrated(NEW);
    assert!(mc_charge_sweep(&nominal, &spec, &DEFAULT_DELTA_TS, 1, 0).is_err());
    assert!(mc_charge_sweep(&nominal, &spec, &[], 10, 0).is_err());
    assert!(mc_charge_sweep(&nominal, &spec, &[0.0], 10, 0).is_err());
    let mut bad = spec.clone();
    bad.sigmas.insert("colour".into(), 0.1);
    assert!(mc_charge_sweep(&nominal, &bad, &DEFAULT_DELTA_TS, 10, 0).is_err());
    let mut huge = spec;
    huge.sigmas.insert("tau_fac".into(), 1e300);
    let err = mc_charge_sweep(&nominal, &huge, &DEFAULT_DELTA_TS, 10, 0).unwrap_err();
    assert!(matches!(err, tdesim::Error::Sampling { .. }), "{err}");
}
