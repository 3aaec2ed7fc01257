//! A sparse array of TDE units reading pairs of neighbouring pixels.
//!
//! Each unit's FAC input listens to one pixel and its TRG input to the
//! 4-neighbour in the unit's orientation, so a unit oriented `Up` responds
//! best to edges moving up the image.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{check_bounds, is_sorted, Event, Geometry};
use crate::exec::Exec;
use crate::mismatch::{sample_params, MismatchSpec};
use crate::rng::StreamKey;
use crate::tde::{process_events, SpikeTrain, TdeParams, TdeVariant};

/// Placement attempts allowed before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Up,
    Down,
    Left,
    Right,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Up,
        Orientation::Down,
        Orientation::Left,
        Orientation::Right,
    ];

    /// Pixel step from FAC to TRG in image coordinates (y grows downward).
    pub fn offset(self) -> (i64, i64) {
        match self {
            Orientation::Up => (0, -1),
            Orientation::Down => (0, 1),
            Orientation::Left => (-1, 0),
            Orientation::Right => (1, 0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Up => "Up",
            Orientation::Down => "Down",
            Orientation::Left => "Left",
            Orientation::Right => "Right",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Orientation::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown orientation {s:?}")))
    }
}

pub type Pixel = (u16, u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReceptiveField {
    pub fac_pixel: Pixel,
    pub trg_pixel: Pixel,
    pub orientation: Orientation,
}

impl ReceptiveField {
    /// The field whose TRG pixel sits one step from `fac_pixel` along
    /// `orientation`, if that pixel lies inside `geometry`.
    pub fn from_fac(
        fac_pixel: Pixel,
        orientation: Orientation,
        geometry: Geometry,
    ) -> Option<Self> {
        let (dx, dy) = orientation.offset();
        let (x, y) = (i64::from(fac_pixel.0) + dx, i64::from(fac_pixel.1) + dy);
        geometry.contains(x, y).then_some(ReceptiveField {
            fac_pixel,
            trg_pixel: (x as u16, y as u16),
            orientation,
        })
    }

    pub fn validate(&self, geometry: Geometry) -> Result<()> {
        let (fx, fy) = (i64::from(self.fac_pixel.0), i64::from(self.fac_pixel.1));
        if !geometry.contains(fx, fy) {
            return Err(Error::Placement(format!(
                "FAC pixel {:?} outside {}x{}",
                self.fac_pixel, geometry.width, geometry.height
            )));
        }
        match ReceptiveField::from_fac(self.fac_pixel, self.orientation, geometry) {
            Some(rf) if rf == *self => Ok(()),
            _ => Err(Error::Placement(format!(
                "TRG pixel {:?} is not the {} neighbour of {:?}",
                self.trg_pixel, self.orientation, self.fac_pixel
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub field: ReceptiveField,
    pub params: TdeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdeNetwork {
    pub geometry: Geometry,
    pub seed: u64,
    pub units: Vec<Unit>,
}

impl TdeNetwork {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn count(&self, orientation: Orientation) -> usize {
        self.units
            .iter()
            .filter(|u| u.field.orientation == orientation)
            .count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, u) in self.units.iter().enumerate() {
            u.field.validate(self.geometry)?;
            u.params.validate()?;
            if !seen.insert((u.field.fac_pixel, u.field.trg_pixel)) {
                return Err(Error::Placement(format!(
                    "unit {i} duplicates pixel pair {:?} -> {:?}",
                    u.field.fac_pixel, u.field.trg_pixel
                )));
            }
        }
        Ok(())
    }

    /// Replaces every unit's parameters with an independent mismatched draw.
    pub fn with_mismatch(mut self, spec: &MismatchSpec, seed: u64) -> Result<Self> {
        for (i, u) in self.units.iter_mut().enumerate() {
            u.params = sample_params(&u.params, spec, seed, i as u64)?;
        }
        Ok(self)
    }
}

/// Places `n_units` units, a quarter per orientation, on distinct pixel pairs.
///
/// FAC pixels are drawn uniformly; a draw is rejected when the TRG neighbour
/// falls off the sensor or the pair is already taken. Units may share pixels.
pub fn build_random_network(
    geometry: Geometry,
    n_units: usize,
    params: TdeParams,
    seed: u64,
) -> Result<TdeNetwork> {
    params.validate()?;
    if !n_units.is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!(
            "n_units must be divisible by 4, got {n_units}"
        )));
    }
    if geometry.n_pixels() == 0 {
        return Err(Error::Placement("empty geometry".into()));
    }
    let mut rng = StreamKey::root(seed).with_label("placement").rng();
    let mut taken = HashSet::new();
    let mut units = Vec::with_capacity(n_units);
    let mut rejections = 0;
    for orientation in Orientation::ALL {
        let mut placed = 0;
        while placed < n_units / 4 {
            let fac = (
                rng.random_range(0..geometry.width),
                rng.random_range(0..geometry.height),
            );
            match ReceptiveField::from_fac(fac, orientation, geometry) {
                Some(field) if taken.insert((field.fac_pixel, field.trg_pixel)) => {
                    units.push(Unit { field, params });
                    placed += 1;
                }
                _ => {
                    rejections += 1;
                    if rejections >= MAX_REJECTIONS {
                        return Err(Error::Placement(format!(
                            "placed only {} of {n_units} units on {}x{} after {MAX_REJECTIONS} rejections",
                            units.len(),
                            geometry.width,
                            geometry.height
                        )));
                    }
                }
            }
        }
    }
    Ok(TdeNetwork {
        geometry,
        seed,
        units,
    })
}

/// Input timestamps (s) for one unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnitInputs {
    pub fac_events: Vec<f64>,
    pub trg_events: Vec<f64>,
}

/// Splits an event stream into per-unit FAC and TRG timestamp lists. Both
/// polarities are routed; events at pixels no unit listens to are dropped.
pub fn route(events: &[Event], network: &TdeNetwork) -> Result<Vec<UnitInputs>> {
    check_bounds(events, network.geometry)?;
    if !is_sorted(events) {
        return Err(Error::InvalidArgument("event stream is not sorted".into()));
    }
    #[derive(Clone, Copy)]
    enum Port {
        Fac(usize),
        Trg(usize),
    }
    let mut listeners: HashMap<Pixel, Vec<Port>> = HashMap::new();
    for (i, u) in network.units.iter().enumerate() {
        listeners
            .entry(u.field.fac_pixel)
            .or_default()
            .push(Port::Fac(i));
        listeners
            .entry(u.field.trg_pixel)
            .or_default()
            .push(Port::Trg(i));
    }
    let mut inputs = vec![UnitInputs::default(); network.units.len()];
    for e in events {
        if let Some(ports) = listeners.get(&(e.x, e.y)) {
            let t = e.t_seconds();
            for port in ports {
                match *port {
                    Port::Fac(i) => inputs[i].fac_events.push(t),
                    Port::Trg(i) => inputs[i].trg_events.push(t),
                }
            }
        }
    }
    Ok(inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterRow {
    pub unit: usize,
    pub orientation: Orientation,
    pub spikes: SpikeTrain,
}

/// Per-unit output spike trains, in unit order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Raster {
    pub rows: Vec<RasterRow>,
}

impl Raster {
    pub fn total_spikes(&self) -> usize {
        self.rows.iter().map(|r| r.spikes.len()).sum()
    }

    pub fn spikes_by_orientation(&self) -> BTreeMap<Orientation, usize> {
        let mut counts: BTreeMap<Orientation, usize> =
            Orientation::ALL.into_iter().map(|o| (o, 0)).collect();
        for r in &self.rows {
            *counts.entry(r.orientation).or_default() += r.spikes.len();
        }
        counts
    }

    /// CSV with header `unit,orientation,spike_time_s`, one line per spike.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "unit,orientation,spike_time_s")?;
        for r in &self.rows {
            for t in r.spikes.times() {
                writeln!(w, "{},{},{t}", r.unit, r.orientation)?;
            }
        }
        Ok(())
    }
}

pub fn run_network(network: &TdeNetwork, events: &[Event], variant: TdeVariant) -> Result<Raster> {
    run_network_with(network, events, variant, Exec::default())
}

/// Simulates every unit over `[0, last event time]`.
pub fn run_network_with(
    network: &TdeNetwork,
    events: &[Event],
    variant: TdeVariant,
    exec: Exec,
) -> Result<Raster> {
    network.validate()?;
    let inputs = route(events, network)?;
    let t_end = events.last().map_or(0.0, Event::t_seconds);
    let trains = exec.try_map_range(network.units.len(), |i| {
        let unit = &network.units[i];
        process_events(
            &unit.params,
            variant,
            &inputs[i].fac_events,
            &inputs[i].trg_events,
            t_end,
        )
    })?;
    let rows = trains
        .into_iter()
        .enumerate()
        .map(|(unit, spikes)| RasterRow {
            unit,
            orientation: network.units[unit].field.orientation,
            spikes,
        })
        .collect();
    Ok(Raster { rows })
}

/// Share of all output spikes produced by each orientation.
pub fn orientation_fractions(raster: &Raster) -> Result<BTreeMap<Orientation, f64>> {
    let total = raster.total_spikes();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "raster has no spikes; orientation fractions are undefined".into(),
        ));
    }
    Ok(raster
        .spikes_by_orientation()
        .into_iter()
        .map(|(o, n)| (o, n as f64 / total as f64))
        .collect())
}
