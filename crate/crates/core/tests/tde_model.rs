use proptest::prelude::*;

use tdesim::oracle::{compare_with_euler, euler_decay, euler_spikes, random_instance, simpson};
use tdesim::tde::{
    charge, decay, neuron_advance, on_fac, process_events, Input, SpikeTrain, Tde, TdeParams,
    TdeState, TdeVariant,
};

fn nominal() -> TdeParams {
    TdeParams::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn state(fac: f64, epsc: f64) -> TdeState {
    TdeState {
        fac,
        epsc,
        ..TdeState::at_rest(&nominal(), 0.0)
    }
}

#[test]
fn decay_matches_euler_integration() {
    // Explicit Euler over n steps of h carries a first-order bias of
    // n (h / tau)^2 / 2 relative; at h = tau / 1e4 over 3 tau that is 1.5e-4.
    let p = nominal();
    let dt = 3.0 * p.tau_trg;
    let s = decay(&state(0.5, 0.2), &p, dt).unwrap();

    let h = p.tau_fac.min(p.tau_trg) / 10_000.0;
    let fac_euler = euler_decay(0.5, p.tau_fac, dt, h);
    assert!(
        rel(s.fac, fac_euler) < 1e-4,
        "fac {}",
        rel(s.fac, fac_euler)
    );

    let epsc_euler = euler_decay(0.2, p.tau_trg, dt, h);
    let bias = 3.0 * 10_000.0 * 1e-8 / 2.0;
    let err = rel(s.epsc, epsc_euler);
    assert!(err < 2e-4, "epsc {err}");
    assert!(
        (err - bias).abs() < 0.01 * bias,
        "epsc error {err} is not Euler bias {bias}"
    );
    // Halving the step halves the bias, bringing it under 1e-4.
    let epsc_fine = euler_decay(0.2, p.tau_trg, dt, h / 2.0);
    assert!(rel(s.epsc, epsc_fine) < 1e-4);
}

#[test]
fn trg_after_fac_samples_decayed_trace() {
    let p = nominal();
    for dt_ms in [1.0, 5.0, 12.0, 50.0] {
        let dt = dt_ms * 1e-3;
        let mut tde = Tde::new(p, TdeVariant::NewDualDpi).unwrap();
        let mut sink = SpikeTrain::default();
        tde.pulse(Input::Fac);
        tde.advance_to(dt, &mut sink).unwrap();
        tde.pulse(Input::Trg);
        let expected = p.gain * p.w_fac * (-dt / p.tau_fac).exp();
        assert!(rel(tde.state().epsc, expected) < 1e-12);

        // Step-by-step composition in 1000 pieces.
        let mut s = on_fac(&TdeState::at_rest(&p, 0.0), &p, TdeVariant::NewDualDpi);
        for _ in 0..1000 {
            s = decay(&s, &p, dt / 1000.0).unwrap();
        }
        let stepped = p.gain * s.fac;
        assert!(rel(stepped, expected) < 1e-12, "dt {dt_ms} ms");
    }
}

#[test]
fn neuron_advance_matches_euler() {
    let p = nominal();
    for epsc0 in [300.0, 1000.0, 4000.0, 12000.0] {
        let (_, spikes) = neuron_advance(&state(0.0, epsc0), &p, 0.1).unwrap();
        let h = p.tau_trg / 10_000.0;
        // A TRG pulse at t = 0 on a trace of epsc0 / gain reproduces the segment.
        let euler = euler_spikes(
            &TdeParams {
                w_fac: epsc0 / p.gain,
                fac_max: epsc0 / p.gain,
                ..p
            },
            TdeVariant::NewDualDpi,
            &[0.0],
            &[0.0],
            0.1,
            h,
        );
        assert_eq!(spikes.len(), euler.len(), "epsc0 {epsc0}");
        for (a, b) in spikes.times().iter().zip(&euler) {
            assert!(
                (a - b).abs() <= 1e-3 * p.tau_trg,
                "epsc0 {epsc0}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn single_pair_sweep_is_monotone_and_matches_euler() {
    let p = nominal();
    let mut prev = usize::MAX;
    for dt_ms in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
        let dt = dt_ms * 1e-3;
        let spikes = process_events(&p, TdeVariant::NewDualDpi, &[0.0], &[dt], dt + 0.1).unwrap();
        let euler = euler_spikes(
            &p,
            TdeVariant::NewDualDpi,
            &[0.0],
            &[dt],
            dt + 0.1,
            p.tau_trg / 10_000.0,
        );
        assert_eq!(spikes.len(), euler.len(), "dt {dt_ms} ms");
        assert!(spikes.len() <= prev);
        prev = spikes.len();
    }
    assert_eq!(prev, 0, "50 ms pair should be silent");
}

#[test]
fn fig3_pair_bursts() {
    let p = nominal();
    let s12 = process_events(&p, TdeVariant::NewDualDpi, &[0.0], &[0.012], 0.2).unwrap();
    let s2 = process_events(&p, TdeVariant::NewDualDpi, &[0.0], &[0.002], 0.2).unwrap();
    assert!(!s12.is_empty());
    assert!(s2.len() > s12.len());
    let far = process_events(&p, TdeVariant::NewDualDpi, &[0.0], &[10.0 * p.tau_fac], 0.5).unwrap();
    assert!(far.is_empty());
}

#[test]
fn charge_matches_quadrature_of_simulated_epsc() {
    let p = nominal();
    let h = p.tau_trg / 200.0;
    let n = 200 * 60; // 60 tau_trg; the tail is below 1e-26
    for dt_ms in [1.0, 5.0, 12.0, 50.0] {
        let dt = dt_ms * 1e-3;
        let mut tde = Tde::new(p, TdeVariant::NewDualDpi).unwrap();
        let mut sink = SpikeTrain::default();
        tde.pulse(Input::Fac);
        tde.advance_to(dt, &mut sink).unwrap();
        tde.pulse(Input::Trg);
        let mut samples = Vec::with_capacity(n + 1);
        samples.push(tde.state().epsc);
        for k in 1..=n {
            tde.advance_to(dt + k as f64 * h, &mut sink).unwrap();
            samples.push(tde.state().epsc);
        }
        let q = simpson(&samples, h);
        let analytic = charge(&p, TdeVariant::NewDualDpi, dt).unwrap();
        assert!(rel(analytic, q) < 1e-6, "dt {dt_ms} ms: {analytic} vs {q}");
    }
}

#[test]
fn euler_converges_to_closed_form_spike_counts() {
    // Grazing crossings can fool a coarse Euler run; a finer step must then
    // recover the closed-form count.
    let mut refined = 0;
    for seed in 0..100 {
        let inst = random_instance(seed, 50);
        let c = compare_with_euler(&inst).unwrap();
        if c.closed_form.len() == c.euler.len() {
            continue;
        }
        let fine = euler_spikes(
            &inst.params,
            inst.variant,
            &inst.fac_events,
            &inst.trg_events,
            inst.t_end,
            inst.euler_step() / 100.0,
        );
        assert_eq!(c.closed_form.len(), fine.len(), "seed {seed}");
        refined += 1;
    }
    assert!(
        refined <= 5,
        "{refined} count mismatches at the coarse step"
    );
}

#[test]
fn euler_gap_shrinks_with_step() {
    // Away from grazing crossings Euler converges at first order, so a 10x
    // smaller step must pull it substantially closer to the closed form.
    let mut checked = 0;
    for seed in 0..30 {
        let inst = random_instance(2000 + seed, 10);
        let c = compare_with_euler(&inst).unwrap();
        if c.closed_form.is_empty() || c.max_error_tau < 1e-4 {
            continue;
        }
        let fine = euler_spikes(
            &inst.params,
            inst.variant,
            &inst.fac_events,
            &inst.trg_events,
            inst.t_end,
            inst.euler_step() / 10.0,
        );
        let fine_err = c
            .closed_form
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / inst.params.tau_trg)
            .fold(0.0, f64::max);
        if fine_err < 0.5 * c.max_error_tau {
            checked += 1;
        }
    }
    assert!(checked >= 10, "only {checked} instances converged");
}

#[test]
fn grazing_crossing_matches_dense_search() {
    // Drive that barely clears threshold near its peak.
    let p = nominal();
    let v = |e0: f64, s: f64| e0 * p.tau_trg * (1.0 - (-s / p.tau_trg).exp()) - p.i_leak * s;
    let peak_v = |e0: f64| v(e0, p.tau_trg * (e0 / p.i_leak).ln());
    let (mut lo, mut hi) = (p.i_leak, 10_000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if peak_v(mid) < p.v_thresh {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e0 = hi * (1.0 + 1e-6);
    let (_, spikes) = neuron_advance(&state(0.0, e0), &p, 0.1).unwrap();
    assert_eq!(spikes.len(), 1);
    let peak = p.tau_trg * (e0 / p.i_leak).ln();
    let n = 2_000_000;
    let grid = (0..=n)
        .map(|k| peak * k as f64 / n as f64)
        .find(|&s| v(e0, s) >= p.v_thresh)
        .unwrap();
    assert!((spikes.times()[0] - grid).abs() <= peak / n as f64 + 1e-6 * p.tau_trg);
}

fn params_strategy() -> impl Strategy<Value = TdeParams> {
    (
        2e-3..20e-3f64,
        1e-3..10e-3f64,
        0.2..2.0f64,
        1.0..4.0f64,
        500.0..8000.0f64,
        0.0..50.0f64,
        0.5..2.0f64,
        -0.5..0.0f64,
        0.0..2e-3f64,
    )
        .prop_map(|(tf, tt, w, m, g, l, th, r, refr)| TdeParams {
            tau_fac: tf,
            tau_trg: tt,
            w_fac: w,
            fac_max: w * m,
            gain: g,
            i_leak: l,
            v_thresh: th,
            v_reset: r,
            t_refr: refr,
            consume_on_trg: false,
        })
}

fn variant_strategy() -> impl Strategy<Value = TdeVariant> {
    prop_oneof![
        Just(TdeVariant::OldSingleBranch),
        Just(TdeVariant::NewDualDpi)
    ]
}

proptest! {
    #[test]
    fn decay_composes(
        fac in 0.0..10.0f64,
        epsc in 0.0..1e4f64,
        a in 0.0..0.1f64,
        b in 0.0..0.1f64,
        p in params_strategy(),
    ) {
        let s = state(fac, epsc);
        let once = decay(&s, &p, a + b).unwrap();
        let twice = decay(&decay(&s, &p, a).unwrap(), &p, b).unwrap();
        for (x, y) in [(once.fac, twice.fac), (once.epsc, twice.epsc), (once.t_last, twice.t_last)] {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()) || x == y);
        }
    }

    #[test]
    fn traces_never_increase_between_events(
        fac in 0.0..4.0f64,
        epsc in 0.0..1e4f64,
        dt in 0.0..0.1f64,
        p in params_strategy(),
    ) {
        let s = decay(&state(fac, epsc), &p, dt).unwrap();
        prop_assert!(s.fac <= fac && s.epsc <= epsc);
    }

    #[test]
    fn trg_only_input_is_silent(
        times in prop::collection::vec(0.0..0.1f64, 0..50),
        p in params_strategy(),
        v in variant_strategy(),
    ) {
        let mut times = times;
        times.sort_by(f64::total_cmp);
        let out = process_events(&p, v, &[], &times, 0.2).unwrap();
        prop_assert!(out.is_empty());
    }

    #[test]
    fn new_variant_integrates_linearly(m in 1u32..64, k in 1usize..8) {
        // Dyadic increments make the sum exact in binary floating point.
        let w = f64::from(m) / 64.0;
        let p = TdeParams { w_fac: w, fac_max: 8.0, ..nominal() };
        let mut s = TdeState::at_rest(&p, 0.0);
        for _ in 0..k {
            s = on_fac(&s, &p, TdeVariant::NewDualDpi);
        }
        prop_assert_eq!(s.fac, k as f64 * w);
    }

    #[test]
    fn fac_never_exceeds_ceiling(
        fac_times in prop::collection::vec(0.0..0.05f64, 1..50),
        p in params_strategy(),
        v in variant_strategy(),
    ) {
        let mut tde = Tde::new(p, v).unwrap();
        let mut sink = SpikeTrain::default();
        let mut times = fac_times;
        times.sort_by(f64::total_cmp);
        for t in times {
            tde.advance_to(t, &mut sink).unwrap();
            tde.pulse(Input::Fac);
            prop_assert!(tde.state().fac <= p.fac_max);
        }
    }

    #[test]
    fn charge_strictly_decreasing(p in params_strategy(), a in 1e-4..0.05f64, gap in 1e-4..0.05f64) {
        let v = TdeVariant::NewDualDpi;
        prop_assert!(charge(&p, v, a + gap).unwrap() < charge(&p, v, a).unwrap());
    }

    #[test]
    fn spike_code_is_monotone_in_delta_t(p in params_strategy(), v in variant_strategy()) {
        let mut prev_count = usize::MAX;
        let mut prev_isi = 0.0;
        for dt_ms in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
            let dt = dt_ms * 1e-3;
            let out = process_events(&p, v, &[0.0], &[dt], dt + 0.2).unwrap();
            prop_assert!(out.len() <= prev_count);
            prev_count = out.len();
            if let Some(isi) = out.first_isi() {
                prop_assert!(isi >= prev_isi * (1.0 - 1e-9), "first ISI shrank at {} ms", dt_ms);
                prev_isi = isi;
            }
        }
    }

    #[test]
    fn output_respects_refractory_and_threshold(seed in 0u64..10_000) {
        let inst = random_instance(seed, 50);
        let out = process_events(&inst.params, inst.variant, &inst.fac_events, &inst.trg_events, inst.t_end).unwrap();
        for isi in out.isis() {
            prop_assert!(isi > 0.0);
            prop_assert!(isi >= inst.params.t_refr * (1.0 - 1e-9));
        }
        // Sampled membrane never sits above threshold or below reset.
        let mut tde = Tde::new(inst.params, inst.variant).unwrap();
        let mut sink = SpikeTrain::default();
        for (t, input) in tdesim::tde::merge_inputs(&inst.fac_events, &inst.trg_events) {
            tde.advance_to(t, &mut sink).unwrap();
            let s = tde.state();
            prop_assert!(s.v_mem < inst.params.v_thresh && s.v_mem >= inst.params.v_reset);
            tde.pulse(input);
        }
    }
}
