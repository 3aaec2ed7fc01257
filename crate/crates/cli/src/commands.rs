//! One function per subcommand. Each returns a one-line summary for stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use tdesim::events::{
    add_jitter, check_bounds, generate_texture_events, read_events, write_events,
};
use tdesim::mismatch::{mc_charge_sweep, McSummary};
use tdesim::network::{build_random_network, orientation_fractions, run_network};
use tdesim::rng::named_seed;
use tdesim::tde::{charge, process_events, sample_trace};
use tdesim::{Event, Orientation, TdeParams, TdeVariant, TextureConfig};

use crate::config::ExperimentConfig;
use crate::CliError;

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

fn write_file(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Spikes of a FAC at 0 and a TRG at `delta_t`, simulated `window` past the TRG.
fn pair_spikes(
    p: &TdeParams,
    v: TdeVariant,
    delta_t: f64,
    window: f64,
) -> tdesim::Result<tdesim::SpikeTrain> {
    process_events(p, v, &[0.0], &[delta_t], delta_t + window)
}

pub fn cmd_step(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let (p, v, s) = (&cfg.nominal, cfg.variant, &cfg.step);
    let t_end = s.delta_t + s.window;
    let trace = sample_trace(p, v, &[0.0], &[s.delta_t], t_end, p.tau_trg / 100.0)?;
    let spikes = pair_spikes(p, v, s.delta_t, s.window)?;

    let mut csv = String::from("t_s,fac,epsc,v_mem\n");
    for x in &trace {
        let _ = writeln!(csv, "{},{},{},{}", x.t, x.fac, x.epsc, x.v_mem);
    }
    write_file(dir.join("step_trace.csv"), csv)?;
    let mut csv = String::from("spike_time_s\n");
    for t in spikes.times() {
        let _ = writeln!(csv, "{t}");
    }
    write_file(dir.join("step_spikes.csv"), csv)?;
    Ok(format!(
        "step: {} variant, delta_t = {} s, {} spikes",
        v,
        s.delta_t,
        spikes.len()
    ))
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let mut csv = String::from("variant,delta_t_s,charge,spike_count\n");
    for v in TdeVariant::ALL {
        for &dt in &cfg.delta_ts {
            let q = charge(&cfg.nominal, v, dt)?;
            let n = pair_spikes(&cfg.nominal, v, dt, cfg.step.window)?.len();
            let _ = writeln!(csv, "{v},{dt},{q},{n}");
        }
    }
    write_file(dir.join("sweep.csv"), csv)?;
    Ok(format!(
        "sweep: {} delta_t values, both variants",
        cfg.delta_ts.len()
    ))
}

pub fn cmd_montecarlo(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let seed = named_seed(cfg.seed, "mismatch");
    let run = |spec| mc_charge_sweep(&cfg.nominal, spec, &cfg.delta_ts, cfg.n_trials, seed);
    let old = run(&cfg.mismatch.old)?;
    let new = run(&cfg.mismatch.new)?;
    for (name, r) in [("mc_old.csv", &old), ("mc_new.csv", &new)] {
        let mut buf = Vec::new();
        r.write_csv(&mut buf).expect("writing to memory");
        write_file(dir.join(name), buf)?;
    }
    let summary = McSummary::new(&old, &new)?;
    write_file(dir.join("summary.json"), to_json(&summary))?;
    Ok(format!(
        "montecarlo: {} trials, mean CV reduction {:.1}%",
        cfg.n_trials, summary.cv_reduction_percent
    ))
}

/// The texture with its seed taken from the `stimulus` substream.
fn texture(cfg: &ExperimentConfig) -> TextureConfig {
    TextureConfig {
        seed: named_seed(cfg.seed, "stimulus"),
        ..cfg.texture.clone()
    }
}

fn stimulus(cfg: &ExperimentConfig) -> Result<Vec<Event>, CliError> {
    let tex = texture(cfg);
    let events = generate_texture_events(&tex)?;
    Ok(add_jitter(
        &events,
        tex.jitter_sigma,
        named_seed(cfg.seed, "jitter"),
    )?)
}

#[derive(Debug, Serialize)]
struct FlowSummary {
    variant: TdeVariant,
    n_units: usize,
    n_events: usize,
    total_spikes: usize,
    spikes: BTreeMap<Orientation, usize>,
    fractions: BTreeMap<Orientation, f64>,
}

pub fn cmd_optical_flow(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let geometry = cfg.texture.geometry();
    let events = match &cfg.events.input {
        Some(path) => {
            let events = read_events(path)?;
            check_bounds(&events, geometry)?;
            events
        }
        None => stimulus(cfg)?,
    };
    let mut network = build_random_network(
        geometry,
        cfg.network.n_units,
        cfg.nominal,
        named_seed(cfg.seed, "network"),
    )?;
    if cfg.network.per_unit_mismatch {
        let spec = cfg.mismatch.for_variant(cfg.variant);
        network = network.with_mismatch(spec, named_seed(cfg.seed, "mismatch"))?;
    }
    let raster = run_network(&network, &events, cfg.variant)?;

    let mut buf = Vec::new();
    raster.write_csv(&mut buf).expect("writing to memory");
    write_file(dir.join("raster.csv"), buf)?;
    write_file(dir.join("network.json"), to_json(&network))?;
    let fractions = orientation_fractions(&raster)?;
    let summary = FlowSummary {
        variant: cfg.variant,
        n_units: network.len(),
        n_events: events.len(),
        total_spikes: raster.total_spikes(),
        spikes: raster.spikes_by_orientation(),
        fractions: fractions.clone(),
    };
    write_file(dir.join("fractions.json"), to_json(&summary))?;
    let shares: Vec<String> = fractions
        .iter()
        .map(|(o, f)| format!("{o} {f:.3}"))
        .collect();
    Ok(format!(
        "optical-flow: {} events, {} spikes; {}",
        events.len(),
        raster.total_spikes(),
        shares.join(", ")
    ))
}

pub fn cmd_gen_events(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let dir = out_dir(cfg)?;
    let events = stimulus(cfg)?;
    let path = dir.join(format!("events.{}", cfg.events.format.extension()));
    write_events(&events, &path)?;
    Ok(format!(
        "gen-events: {} events -> {}",
        events.len(),
        path.display()
    ))
}
