//! Behavioral model of a single time difference encoder.
//!
//! A TDE unit is a facilitatory trace, a trigger (EPSC) trace and a
//! constant-leak integrate-and-fire neuron. Between input events every state
//! variable has a closed-form trajectory, so the simulator jumps from event to
//! event and only searches for threshold crossings inside a segment.
//!
//! Input pulses are instantaneous: a FAC event bumps the facilitatory trace, a
//! TRG event samples it and adds `gain * fac` to the EPSC. The EPSC decays
//! with `tau_trg` and drives `dv/dt = epsc(t) - i_leak`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bisection tolerance for threshold crossings, as a fraction of `tau_trg`.
pub const CROSSING_TOL: f64 = 1e-6;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TdeVariant {
    /// Single discharge branch in the facilitatory block: a FAC event pulls
    /// the trace to a fixed level instead of adding to it.
    #[serde(rename = "old", alias = "OldSingleBranch")]
    OldSingleBranch,
    /// DPI in both blocks: FAC events integrate linearly up to `fac_max`.
    #[serde(rename = "new", alias = "NewDualDpi")]
    NewDualDpi,
}

impl TdeVariant {
    pub const ALL: [TdeVariant; 2] = [TdeVariant::OldSingleBranch, TdeVariant::NewDualDpi];

    pub fn as_str(self) -> &'static str {
        match self {
            TdeVariant::OldSingleBranch => "old",
            TdeVariant::NewDualDpi => "new",
        }
    }
}

impl fmt::Display for TdeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TdeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "old" | "OldSingleBranch" => Ok(TdeVariant::OldSingleBranch),
            "new" | "NewDualDpi" => Ok(TdeVariant::NewDualDpi),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?} (expected \"old\" or \"new\")"
            ))),
        }
    }
}

/// Behavioral parameters of one TDE unit.
///
/// Traces and membrane are dimensionless. `gain` converts the sampled
/// facilitatory trace into an EPSC in membrane units per second, so the charge
/// delivered by one EPSC is `gain * fac * tau_trg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdeParams {
    /// Facilitatory trace time constant (s).
    pub tau_fac: f64,
    /// EPSC time constant (s).
    pub tau_trg: f64,
    /// Facilitatory increment (new variant) or reset level (old variant).
    pub w_fac: f64,
    /// Ceiling of the facilitatory trace.
    pub fac_max: f64,
    /// EPSC amplitude per unit of facilitatory trace (1/s).
    pub gain: f64,
    /// Constant membrane leak (1/s).
    pub i_leak: f64,
    pub v_thresh: f64,
    pub v_reset: f64,
    /// Absolute refractory period (s).
    pub t_refr: f64,
    /// Clear the facilitatory trace when a TRG event samples it.
    pub consume_on_trg: bool,
}

impl Default for TdeParams {
    fn default() -> Self {
        TdeParams {
            tau_fac: 10e-3,
            tau_trg: 5e-3,
            w_fac: 1.0,
            fac_max: 4.0,
            gain: 4000.0,
            i_leak: 20.0,
            v_thresh: 1.0,
            v_reset: 0.0,
            t_refr: 1e-3,
            consume_on_trg: false,
        }
    }
}

impl TdeParams {
    /// Names of the numeric fields, in declaration order.
    pub const NAMES: [&'static str; 9] = [
        "tau_fac", "tau_trg", "w_fac", "fac_max", "gain", "i_leak", "v_thresh", "v_reset", "t_refr",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        for name in Self::NAMES {
            let v = self.get(name).unwrap_or(f64::NAN);
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        for (name, v) in [
            ("tau_fac", self.tau_fac),
            ("tau_trg", self.tau_trg),
            ("w_fac", self.w_fac),
            ("fac_max", self.fac_max),
            ("gain", self.gain),
            ("v_thresh", self.v_thresh),
        ] {
            if v <= 0.0 {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.i_leak < 0.0 {
            return bad(format!("i_leak must be >= 0, got {}", self.i_leak));
        }
        if self.t_refr < 0.0 {
            return bad(format!("t_refr must be >= 0, got {}", self.t_refr));
        }
        if self.fac_max < self.w_fac {
            return bad(format!(
                "fac_max ({}) must be >= w_fac ({})",
                self.fac_max, self.w_fac
            ));
        }
        if self.v_reset >= self.v_thresh {
            return bad(format!(
                "v_reset ({}) must be < v_thresh ({})",
                self.v_reset, self.v_thresh
            ));
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Reads a numeric field by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "tau_fac" => self.tau_fac,
            "tau_trg" => self.tau_trg,
            "w_fac" => self.w_fac,
            "fac_max" => self.fac_max,
            "gain" => self.gain,
            "i_leak" => self.i_leak,
            "v_thresh" => self.v_thresh,
            "v_reset" => self.v_reset,
            "t_refr" => self.t_refr,
            _ => return None,
        })
    }

    /// Writes a numeric field by name. Returns `false` for unknown names.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "tau_fac" => &mut self.tau_fac,
            "tau_trg" => &mut self.tau_trg,
            "w_fac" => &mut self.w_fac,
            "fac_max" => &mut self.fac_max,
            "gain" => &mut self.gain,
            "i_leak" => &mut self.i_leak,
            "v_thresh" => &mut self.v_thresh,
            "v_reset" => &mut self.v_reset,
            "t_refr" => &mut self.t_refr,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Instantaneous analog state of one TDE, valid at `t_last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdeState {
    pub fac: f64,
    pub epsc: f64,
    pub v_mem: f64,
    pub t_last: f64,
    pub refr_until: f64,
}

impl TdeState {
    pub fn at_rest(params: &TdeParams, t: f64) -> Self {
        TdeState {
            fac: 0.0,
            epsc: 0.0,
            v_mem: params.v_reset,
            t_last: t,
            refr_until: t,
        }
    }
}

/// Output spike times in seconds, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpikeTrain(Vec<f64>);

impl SpikeTrain {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "spike times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(SpikeTrain(times))
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn isis(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.windows(2).map(|w| w[1] - w[0])
    }

    pub fn first_isi(&self) -> Option<f64> {
        self.isis().next()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn extend(&mut self, more: SpikeTrain) {
        self.0.extend(more.0);
    }
}

impl AsRef<[f64]> for SpikeTrain {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time step must be >= 0, got {dt}"
        )));
    }
    Ok(())
}

/// Exponential relaxation of both traces over `dt`. The membrane is left
/// alone; see [`neuron_advance`].
pub fn decay(state: &TdeState, params: &TdeParams, dt: f64) -> Result<TdeState> {
    check_dt(dt)?;
    Ok(TdeState {
        fac: state.fac * (-dt / params.tau_fac).exp(),
        epsc: state.epsc * (-dt / params.tau_trg).exp(),
        t_last: state.t_last + dt,
        ..*state
    })
}

/// Applies a FAC pulse to a state already decayed to the event time.
pub fn on_fac(state: &TdeState, params: &TdeParams, variant: TdeVariant) -> TdeState {
    let fac = match variant {
        TdeVariant::NewDualDpi => (state.fac + params.w_fac).min(params.fac_max),
        TdeVariant::OldSingleBranch => params.w_fac,
    };
    TdeState { fac, ..*state }
}

/// Applies a TRG pulse: the facilitatory trace is sampled into the EPSC.
pub fn on_trg(state: &TdeState, params: &TdeParams) -> TdeState {
    TdeState {
        epsc: state.epsc + params.gain * state.fac,
        fac: if params.consume_on_trg {
            0.0
        } else {
            state.fac
        },
        ..*state
    }
}

/// Membrane trajectory from a fixed starting point with no refractoriness:
/// `v(s) = v0 + epsc0 * tau * (1 - exp(-s / tau)) - leak * s`.
///
/// The drive `epsc0 * exp(-s / tau) - leak` is decreasing, so `v` is concave
/// and rises until `peak()` then falls for good.
#[derive(Debug, Clone, Copy)]
struct Free {
    v0: f64,
    epsc0: f64,
    tau: f64,
    leak: f64,
}

impl Free {
    fn value(&self, s: f64) -> f64 {
        self.v0 - self.epsc0 * self.tau * (-s / self.tau).exp_m1() - self.leak * s
    }

    fn peak(&self) -> f64 {
        if self.epsc0 <= self.leak {
            0.0
        } else if self.leak == 0.0 {
            f64::INFINITY
        } else {
            self.tau * (self.epsc0 / self.leak).ln()
        }
    }

    /// First `s` in `(0, horizon]` where `value(s) >= thresh`, to within
    /// `tol`. The returned point is always on the supra-threshold side.
    fn first_crossing(&self, horizon: f64, thresh: f64, tol: f64) -> Result<Option<f64>> {
        if self.v0 >= thresh {
            return Ok(Some(0.0));
        }
        let s_max = self.peak().min(horizon);
        if s_max <= 0.0 || self.value(s_max) < thresh {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0.0, s_max);
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= tol {
                return Ok(Some(hi));
            }
            let mid = 0.5 * (lo + hi);
            if self.value(mid) >= thresh {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::Internal(format!(
            "threshold bisection did not converge on [{lo}, {hi}]"
        )))
    }
}

/// Advances a TDE over an input-free segment of length `dt`.
///
/// Both traces decay exactly as in [`decay`]; the membrane integrates the
/// decaying EPSC against the leak, never dropping below `v_reset`. Each
/// threshold crossing is located by bisection, emits a spike, resets the
/// membrane and holds it at `v_reset` for `t_refr`. Returns the state at the
/// end of the segment and the spikes inside it.
pub fn neuron_advance(
    state: &TdeState,
    params: &TdeParams,
    dt: f64,
) -> Result<(TdeState, SpikeTrain)> {
    let end_state = decay(state, params, dt)?;
    let t_end = end_state.t_last;
    let tau = params.tau_trg;
    let tol = CROSSING_TOL * tau;

    let mut t = state.t_last;
    let mut epsc = state.epsc;
    let mut v = state.v_mem.max(params.v_reset);
    let mut refr_until = state.refr_until;
    let mut spikes = Vec::new();

    loop {
        if refr_until > t {
            let hold_to = refr_until.min(t_end);
            epsc *= (-(hold_to - t) / tau).exp();
            t = hold_to;
            v = params.v_reset;
            if t >= t_end {
                break;
            }
        }
        let horizon = t_end - t;
        let free = Free {
            v0: v,
            epsc0: epsc,
            tau,
            leak: params.i_leak,
        };
        match free.first_crossing(horizon, params.v_thresh, tol)? {
            Some(s) => {
                let t_spike = t + s;
                if spikes.last().is_some_and(|&last| t_spike <= last) {
                    return Err(Error::Internal(format!(
                        "spike at {t_spike} does not follow previous spike"
                    )));
                }
                spikes.push(t_spike);
                epsc *= (-s / tau).exp();
                t = t_spike;
                v = params.v_reset;
                refr_until = t_spike + params.t_refr;
            }
            None => {
                v = free.value(horizon).max(params.v_reset);
                break;
            }
        }
    }

    let next = TdeState {
        v_mem: v,
        refr_until,
        ..end_state
    };
    Ok((next, SpikeTrain(spikes)))
}

/// An input channel of a TDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Input {
    Fac,
    Trg,
}

/// A stateful TDE that can be driven event by event.
#[derive(Debug, Clone)]
pub struct Tde {
    params: TdeParams,
    variant: TdeVariant,
    state: TdeState,
}

impl Tde {
    /// A unit at rest at time zero.
    pub fn new(params: TdeParams, variant: TdeVariant) -> Result<Self> {
        params.validate()?;
        Ok(Tde {
            state: TdeState::at_rest(&params, 0.0),
            params,
            variant,
        })
    }

    pub fn params(&self) -> &TdeParams {
        &self.params
    }

    pub fn variant(&self) -> TdeVariant {
        self.variant
    }

    pub fn state(&self) -> &TdeState {
        &self.state
    }

    /// Advances to absolute time `t`, appending emitted spikes to `out`.
    pub fn advance_to(&mut self, t: f64, out: &mut SpikeTrain) -> Result<()> {
        let dt = t - self.state.t_last;
        if !(dt >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cannot advance from {} back to {t}",
                self.state.t_last
            )));
        }
        let (next, spikes) = neuron_advance(&self.state, &self.params, dt)?;
        self.state = next;
        out.extend(spikes);
        Ok(())
    }

    /// Applies an input pulse at the current time.
    pub fn pulse(&mut self, input: Input) {
        self.state = match input {
            Input::Fac => on_fac(&self.state, &self.params, self.variant),
            Input::Trg => on_trg(&self.state, &self.params),
        };
    }
}

fn check_times(name: &str, times: &[f64]) -> Result<()> {
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{name}[{i}] = {t} is not a finite non-negative time"
            )));
        }
        if i > 0 && t < times[i - 1] {
            return Err(Error::InvalidArgument(format!(
                "{name} is not sorted: [{}] = {} > [{i}] = {t}",
                i - 1,
                times[i - 1]
            )));
        }
    }
    Ok(())
}

/// Merges the two input streams into one timeline. Equal timestamps put FAC
/// before TRG.
pub fn merge_inputs(fac_events: &[f64], trg_events: &[f64]) -> Vec<(f64, Input)> {
    let mut merged = Vec::with_capacity(fac_events.len() + trg_events.len());
    let (mut i, mut j) = (0, 0);
    while i < fac_events.len() || j < trg_events.len() {
        let take_fac = match (fac_events.get(i), trg_events.get(j)) {
            (Some(f), Some(t)) => f <= t,
            (Some(_), None) => true,
            _ => false,
        };
        if take_fac {
            merged.push((fac_events[i], Input::Fac));
            i += 1;
        } else {
            merged.push((trg_events[j], Input::Trg));
            j += 1;
        }
    }
    merged
}

/// Runs one TDE from rest at `t = 0` over both input streams up to `t_end`.
pub fn process_events(
    params: &TdeParams,
    variant: TdeVariant,
    fac_events: &[f64],
    trg_events: &[f64],
    t_end: f64,
) -> Result<SpikeTrain> {
    check_times("fac_events", fac_events)?;
    check_times("trg_events", trg_events)?;
    let last = fac_events
        .last()
        .into_iter()
        .chain(trg_events.last())
        .fold(0.0f64, |a, &b| a.max(b));
    if !(t_end >= last) {
        return Err(Error::InvalidArgument(format!(
            "t_end ({t_end}) precedes the last input event ({last})"
        )));
    }

    let mut tde = Tde::new(*params, variant)?;
    let mut spikes = SpikeTrain::default();
    for (t, input) in merge_inputs(fac_events, trg_events) {
        tde.advance_to(t, &mut spikes)?;
        tde.pulse(input);
    }
    tde.advance_to(t_end, &mut spikes)?;
    Ok(spikes)
}

/// One sample of the analog state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub fac: f64,
    pub epsc: f64,
    pub v_mem: f64,
}

/// Samples `fac`, `epsc` and `v_mem` every `dt_sample` seconds on `[0, t_end]`
/// using the closed-form evolution. A sample that coincides with an input
/// event reflects the state after the event.
pub fn sample_trace(
    params: &TdeParams,
    variant: TdeVariant,
    fac_events: &[f64],
    trg_events: &[f64],
    t_end: f64,
    dt_sample: f64,
) -> Result<Vec<TraceSample>> {
    check_times("fac_events", fac_events)?;
    check_times("trg_events", trg_events)?;
    if !(dt_sample > 0.0) || !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need dt_sample > 0 and finite t_end >= 0 (got {dt_sample}, {t_end})"
        )));
    }
    let n = (t_end / dt_sample + 1e-9).floor() as usize + 1;
    let mut tde = Tde::new(*params, variant)?;
    let mut sink = SpikeTrain::default();
    let events = merge_inputs(fac_events, trg_events);
    let mut next_event = 0;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let ts = k as f64 * dt_sample;
        while next_event < events.len() && events[next_event].0 <= ts {
            let (te, input) = events[next_event];
            tde.advance_to(te, &mut sink)?;
            tde.pulse(input);
            next_event += 1;
        }
        tde.advance_to(ts, &mut sink)?;
        let s = tde.state();
        samples.push(TraceSample {
            t: ts,
            fac: s.fac,
            epsc: s.epsc,
            v_mem: s.v_mem,
        });
    }
    Ok(samples)
}

/// Total charge `∫ epsc dt` delivered by a single FAC→TRG pair from rest:
/// `gain * w_fac * exp(-delta_t / tau_fac) * tau_trg` for both variants.
///
/// `delta_t` must be strictly positive; see [`charge_signed`] for the
/// reversed-order case.
pub fn charge(params: &TdeParams, _variant: TdeVariant, delta_t: f64) -> Result<f64> {
    if !(delta_t > 0.0) || !delta_t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delta_t must be finite and > 0, got {delta_t}"
        )));
    }
    Ok(params.gain * params.w_fac * (-delta_t / params.tau_fac).exp() * params.tau_trg)
}

/// Like [`charge`] but defined for any finite `delta_t`: TRG before FAC
/// (`delta_t < 0`) transmits nothing, and coincident events count as FAC
/// first.
pub fn charge_signed(params: &TdeParams, variant: TdeVariant, delta_t: f64) -> Result<f64> {
    if !delta_t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delta_t must be finite, got {delta_t}"
        )));
    }
    if delta_t < 0.0 {
        Ok(0.0)
    } else if delta_t == 0.0 {
        Ok(params.gain * params.w_fac * params.tau_trg)
    } else {
        charge(params, variant, delta_t)
    }
}
