//! Monte Carlo device-mismatch analysis of the TDE synapse.
//!
//! Mismatch is applied at the behavioral level: every listed parameter is
//! scaled by an independent lognormal factor `exp(sigma * z)`. The draws for
//! trial `t` are addressed by `(seed, t, attempt, parameter)` in a
//! counter-based stream, so any subset of trials can be reproduced alone and
//! trials can run in any order.

use std::collections::BTreeMap;
use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numfmt::{round_sig, sig_decimal};
use crate::rng::StreamKey;
use crate::tde::{charge, TdeParams, TdeVariant};

/// Resampling budget for one trial.
pub const MAX_SAMPLE_ATTEMPTS: u32 = 100;

/// Default Δt grid (s).
pub const DEFAULT_DELTA_TS: [f64; 6] = [1e-3, 2e-3, 5e-3, 10e-3, 20e-3, 50e-3];

/// Per-parameter lognormal spreads for one circuit variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSpec {
    pub sigmas: BTreeMap<String, f64>,
    pub variant: TdeVariant,
}

impl MismatchSpec {
    /// Calibrated spreads. Both variants share 10% on the time constants and
    /// the EPSC gain; the old circuit's single discharge branch gets a larger
    /// spread on the facilitatory amplitude.
    pub fn calibrated(variant: TdeVariant) -> Self {
        let w_fac = match variant {
            TdeVariant::OldSingleBranch => 0.45,
            TdeVariant::NewDualDpi => 0.15,
        };
        let sigmas = [
            ("tau_fac", 0.1),
            ("tau_trg", 0.1),
            ("gain", 0.1),
            ("w_fac", w_fac),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        MismatchSpec { sigmas, variant }
    }

    /// A spec with no spread at all.
    pub fn zero(variant: TdeVariant) -> Self {
        MismatchSpec {
            sigmas: BTreeMap::new(),
            variant,
        }
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.sigmas.get(name).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, &sigma) in &self.sigmas {
            if !TdeParams::NAMES.contains(&name.as_str()) {
                return Err(Error::InvalidMismatch(format!(
                    "{name:?} is not a TDE parameter"
                )));
            }
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::InvalidMismatch(format!(
                    "sigma for {name} must be finite and >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

/// Checks that an (old, new) pair encodes the old circuit's larger
/// sensitivity: some parameter must spread strictly more in `old`.
pub fn check_variant_pair(old: &MismatchSpec, new: &MismatchSpec) -> Result<()> {
    old.validate()?;
    new.validate()?;
    if old.variant != TdeVariant::OldSingleBranch || new.variant != TdeVariant::NewDualDpi {
        return Err(Error::InvalidMismatch(format!(
            "expected (old, new) specs, got ({}, {})",
            old.variant, new.variant
        )));
    }
    let wider = old.sigmas.iter().any(|(name, &s)| s > new.sigma(name));
    if !wider {
        return Err(Error::InvalidMismatch(
            "the old variant needs at least one parameter with a larger sigma than the new one"
                .into(),
        ));
    }
    Ok(())
}

/// Draws one mismatched parameter set.
pub fn sample_params(
    nominal: &TdeParams,
    spec: &MismatchSpec,
    rng_seed: u64,
    trial_index: u64,
) -> Result<TdeParams> {
    nominal.validate()?;
    spec.validate()?;
    let trial_key = StreamKey::root(rng_seed).with(trial_index);
    let mut last = String::new();
    for attempt in 0..MAX_SAMPLE_ATTEMPTS {
        let key = trial_key.with(u64::from(attempt));
        let mut p = *nominal;
        for (name, &sigma) in &spec.sigmas {
            let z: f64 = StandardNormal.sample(&mut key.with_label(name).rng());
            let base = nominal.get(name).expect("validated name");
            p.set(name, base * (sigma * z).exp());
        }
        match p.validate() {
            Ok(()) => return Ok(p),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Sampling {
        trial: trial_index,
        attempts: MAX_SAMPLE_ATTEMPTS,
        last,
    })
}

/// Charges of a Monte Carlo population over a Δt grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub variant: TdeVariant,
    pub delta_ts: Vec<f64>,
    /// `charges[trial][dt]`.
    pub charges: Vec<Vec<f64>>,
    /// Each column divided by its mean.
    pub normalized: Vec<Vec<f64>>,
    pub cv_per_dt: Vec<f64>,
    pub seed: u64,
}

impl McResult {
    pub fn n_trials(&self) -> usize {
        self.charges.len()
    }

    pub fn column(&self, d: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.charges.iter().map(move |row| row[d])
    }

    pub fn normalized_column(&self, d: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.normalized.iter().map(move |row| row[d])
    }

    /// Per-trial CSV: `trial,delta_t_s,charge,normalized_charge`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trial,delta_t_s,charge,normalized_charge")?;
        for (t, (row, nrow)) in self.charges.iter().zip(&self.normalized).enumerate() {
            for (d, &dt) in self.delta_ts.iter().enumerate() {
                writeln!(
                    w,
                    "{t},{},{},{}",
                    sig_decimal(dt, 12),
                    sig_decimal(row[d], 12),
                    sig_decimal(nrow[d], 12)
                )?;
            }
        }
        Ok(())
    }
}

/// Mean, shifted by the first element so constant inputs come back exactly.
pub(crate) fn mean(mut xs: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = xs.next() else {
        return f64::NAN;
    };
    let (sum, n) = xs.fold((0.0, 1usize), |(s, n), x| (s + (x - first), n + 1));
    first + sum / n as f64
}

/// Population standard deviation.
pub(crate) fn pop_std<I>(xs: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let m = mean(xs.clone());
    mean(xs.map(|x| (x - m) * (x - m))).sqrt()
}

pub fn mc_charge_sweep(
    nominal: &TdeParams,
    spec: &MismatchSpec,
    delta_ts: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<McResult> {
    mc_charge_sweep_with(nominal, spec, delta_ts, n_trials, seed, Exec::default())
}

/// [`mc_charge_sweep`] with an explicit execution mode.
pub fn mc_charge_sweep_with(
    nominal: &TdeParams,
    spec: &MismatchSpec,
    delta_ts: &[f64],
    n_trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<McResult> {
    if n_trials < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 trials, got {n_trials}"
        )));
    }
    if delta_ts.is_empty() {
        return Err(Error::InvalidArgument("empty delta_t grid".into()));
    }
    if let Some(bad) = delta_ts.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta_t values must be finite and > 0, got {bad}"
        )));
    }
    nominal.validate()?;
    spec.validate()?;

    let charges = exec.try_map_range(n_trials, |t| {
        let p = sample_params(nominal, spec, seed, t as u64)?;
        delta_ts
            .iter()
            .map(|&dt| charge(&p, spec.variant, dt))
            .collect::<Result<Vec<f64>>>()
    })?;

    let means: Vec<f64> = (0..delta_ts.len())
        .map(|d| mean(charges.iter().map(|row| row[d])))
        .collect();
    if let Some((d, m)) = means
        .iter()
        .enumerate()
        .find(|(_, m)| !(**m > 0.0) || !m.is_finite())
    {
        return Err(Error::Internal(format!(
            "mean charge at delta_t = {} is {m}; cannot normalize",
            delta_ts[d]
        )));
    }
    let normalized: Vec<Vec<f64>> = charges
        .iter()
        .map(|row| row.iter().zip(&means).map(|(c, m)| c / m).collect())
        .collect();
    let cv_per_dt = (0..delta_ts.len())
        .map(|d| pop_std(normalized.iter().map(move |row| row[d])))
        .collect();

    Ok(McResult {
        variant: spec.variant,
        delta_ts: delta_ts.to_vec(),
        charges,
        normalized,
        cv_per_dt,
        seed,
    })
}

/// Mean relative CV reduction of `new` over `old`, in percent.
pub fn cv_reduction(old: &McResult, new: &McResult) -> Result<f64> {
    if old.delta_ts != new.delta_ts {
        return Err(Error::InvalidArgument(
            "Monte Carlo results use different delta_t grids".into(),
        ));
    }
    if let Some(i) = old.cv_per_dt.iter().position(|&c| c == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "old CV is zero at delta_t = {}; reduction undefined",
            old.delta_ts[i]
        )));
    }
    let ratios = old
        .cv_per_dt
        .iter()
        .zip(&new.cv_per_dt)
        .map(|(o, n)| 1.0 - n / o);
    Ok(100.0 * mean(ratios))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeSummary {
    pub delta_t: f64,
    pub mean_charge: f64,
    pub stddev_charge: f64,
}

/// Per-Δt mean and population standard deviation of the raw charge.
pub fn summarize(result: &McResult) -> Vec<ChargeSummary> {
    result
        .delta_ts
        .iter()
        .enumerate()
        .map(|(d, &delta_t)| ChargeSummary {
            delta_t,
            mean_charge: mean(result.column(d)),
            stddev_charge: pop_std(result.column(d)),
        })
        .collect()
}

/// One row of the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub delta_t_s: f64,
    pub mean_charge: f64,
    pub stddev_charge: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: TdeVariant,
    pub rows: Vec<SummaryRow>,
}

impl VariantSummary {
    pub fn from_result(result: &McResult) -> Self {
        let rows = summarize(result)
            .into_iter()
            .zip(&result.cv_per_dt)
            .map(|(s, &cv)| SummaryRow {
                delta_t_s: round_sig(s.delta_t, 12),
                mean_charge: round_sig(s.mean_charge, 12),
                stddev_charge: round_sig(s.stddev_charge, 12),
                cv: round_sig(cv, 12),
            })
            .collect();
        VariantSummary {
            variant: result.variant,
            rows,
        }
    }
}

/// JSON summary of an old/new comparison. Numbers carry 12 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_trials: usize,
    pub seed: u64,
    pub old: VariantSummary,
    pub new: VariantSummary,
    pub cv_reduction_percent: f64,
}

impl McSummary {
    pub fn new(old: &McResult, new: &McResult) -> Result<Self> {
        Ok(McSummary {
            n_trials: old.n_trials(),
            seed: old.seed,
            old: VariantSummary::from_result(old),
            new: VariantSummary::from_result(new),
            cv_reduction_percent: round_sig(cv_reduction(old, new)?, 12),
        })
    }
}
