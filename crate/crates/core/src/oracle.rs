//! Reference integrators used only by tests.
//!
//! Nothing here shares code with the closed-form engine: the TDE is stepped
//! with fixed-step explicit Euler, spikes are located by linear
//! interpolation inside the step that crosses threshold.

use crate::tde::{TdeParams, TdeVariant};

#[derive(Debug, Clone, Copy)]
pub struct EulerState {
    pub t: f64,
    pub fac: f64,
    pub epsc: f64,
    pub v: f64,
    pub refr_until: f64,
}

/// Explicit Euler decay of a single trace over `dt` with step `h`.
pub fn euler_decay(x0: f64, tau: f64, dt: f64, h: f64) -> f64 {
    let mut x = x0;
    let mut t = 0.0;
    while t < dt {
        let step = h.min(dt - t);
        x -= step * x / tau;
        t += step;
    }
    x
}

/// Euler simulation of one TDE from rest at `t = 0`.
pub fn euler_spikes(
    p: &TdeParams,
    variant: TdeVariant,
    fac_events: &[f64],
    trg_events: &[f64],
    t_end: f64,
    h: f64,
) -> Vec<f64> {
    let mut events: Vec<(f64, u8)> = fac_events
        .iter()
        .map(|&t| (t, 0))
        .chain(trg_events.iter().map(|&t| (t, 1)))
        .collect();
    // FAC (0) before TRG (1) on equal timestamps.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut s = EulerState {
        t: 0.0,
        fac: 0.0,
        epsc: 0.0,
        v: p.v_reset,
        refr_until: 0.0,
    };
    let mut spikes = Vec::new();
    for (te, ch) in events {
        integrate(p, &mut s, te, h, &mut spikes);
        if ch == 0 {
            s.fac = match variant {
                TdeVariant::NewDualDpi => (s.fac + p.w_fac).min(p.fac_max),
                TdeVariant::OldSingleBranch => p.w_fac,
            };
        } else {
            s.epsc += p.gain * s.fac;
            if p.consume_on_trg {
                s.fac = 0.0;
            }
        }
    }
    integrate(p, &mut s, t_end, h, &mut spikes);
    spikes
}

fn integrate(p: &TdeParams, s: &mut EulerState, until: f64, h: f64, spikes: &mut Vec<f64>) {
    while s.t < until {
        let mut dt = h.min(until - s.t);
        let refractory = s.refr_until > s.t;
        if refractory {
            dt = dt.min(s.refr_until - s.t);
        }
        let v_next = if refractory {
            p.v_reset
        } else {
            (s.v + dt * (s.epsc - p.i_leak)).max(p.v_reset)
        };
        if !refractory && v_next >= p.v_thresh {
            let frac = (p.v_thresh - s.v) / (v_next - s.v);
            let dt_spike = dt * frac;
            s.fac -= dt_spike * s.fac / p.tau_fac;
            s.epsc -= dt_spike * s.epsc / p.tau_trg;
            s.t += dt_spike;
            spikes.push(s.t);
            s.v = p.v_reset;
            s.refr_until = s.t + p.t_refr;
            continue;
        }
        s.fac -= dt * s.fac / p.tau_fac;
        s.epsc -= dt * s.epsc / p.tau_trg;
        s.v = v_next;
        s.t += dt;
    }
}

/// Composite Simpson rule over `n` (even) intervals of equally spaced samples.
pub fn simpson(samples: &[f64], h: f64) -> f64 {
    let n = samples.len() - 1;
    assert!(
        n >= 2 && n.is_multiple_of(2),
        "Simpson needs an even interval count"
    );
    let odd: f64 = samples[1..n].iter().step_by(2).sum();
    let even: f64 = samples[2..n].iter().step_by(2).sum();
    h / 3.0 * (samples[0] + samples[n] + 4.0 * odd + 2.0 * even)
}

/// A randomized single-unit scenario.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: TdeParams,
    pub variant: TdeVariant,
    pub fac_events: Vec<f64>,
    pub trg_events: Vec<f64>,
    pub t_end: f64,
}

impl Instance {
    /// Euler step used for the equivalence check: `min(tau) / 10000`.
    pub fn euler_step(&self) -> f64 {
        self.params.tau_fac.min(self.params.tau_trg) / 10_000.0
    }
}

/// Draws parameters around the nominal operating point and up to
/// `max_events` input events in the first 100 ms.
pub fn random_instance(seed: u64, max_events: usize) -> Instance {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w_fac = rng.random_range(0.5..2.0);
    let v_thresh = rng.random_range(0.5..2.0);
    let params = TdeParams {
        tau_fac: rng.random_range(2e-3..20e-3),
        tau_trg: rng.random_range(1e-3..10e-3),
        w_fac,
        fac_max: w_fac * rng.random_range(1.0..4.0),
        gain: rng.random_range(500.0..8000.0),
        i_leak: rng.random_range(0.0..50.0),
        v_thresh,
        v_reset: rng.random_range(-0.5..0.0),
        t_refr: rng.random_range(0.0..2e-3),
        consume_on_trg: rng.random_bool(0.2),
    };
    let variant = if rng.random_bool(0.5) {
        TdeVariant::NewDualDpi
    } else {
        TdeVariant::OldSingleBranch
    };
    let n = rng.random_range(1..=max_events);
    let mut fac_events = Vec::new();
    let mut trg_events = Vec::new();
    for _ in 0..n {
        // Microsecond grid, like sensor timestamps.
        let t = (rng.random_range(0.0..0.1f64) * 1e6).round() * 1e-6;
        if rng.random_bool(0.5) {
            fac_events.push(t);
        } else {
            trg_events.push(t);
        }
    }
    fac_events.sort_by(f64::total_cmp);
    trg_events.sort_by(f64::total_cmp);
    Instance {
        params,
        variant,
        fac_events,
        trg_events,
        t_end: 0.15,
    }
}

/// Outcome of comparing closed-form and Euler spike trains.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub closed_form: Vec<f64>,
    pub euler: Vec<f64>,
    /// Largest per-spike time difference, in units of `tau_trg`.
    pub max_error_tau: f64,
}

impl Comparison {
    pub fn passes(&self, tol_tau: f64) -> bool {
        self.closed_form.len() == self.euler.len() && self.max_error_tau <= tol_tau
    }
}

pub fn compare_with_euler(inst: &Instance) -> crate::Result<Comparison> {
    let closed_form = crate::tde::process_events(
        &inst.params,
        inst.variant,
        &inst.fac_events,
        &inst.trg_events,
        inst.t_end,
    )?
    .into_inner();
    let euler = euler_spikes(
        &inst.params,
        inst.variant,
        &inst.fac_events,
        &inst.trg_events,
        inst.t_end,
        inst.euler_step(),
    );
    let max_error_tau = closed_form
        .iter()
        .zip(&euler)
        .map(|(a, b)| (a - b).abs() / inst.params.tau_trg)
        .fold(0.0, f64::max);
    Ok(Comparison {
        closed_form,
        euler,
        max_error_tau,
    })
}
