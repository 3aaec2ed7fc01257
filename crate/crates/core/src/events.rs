//! Address events, event files and the synthetic moving-texture stimulus.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

pub const EVT_MAGIC: &[u8; 4] = b"EVT1";
/// Packed little-endian record: `u64 t_us | u16 x | u16 y | i8 polarity`.
pub const EVT_RECORD_LEN: usize = 13;
pub const CSV_HEADER: &str = "t_us,x,y,p";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Off = -1,
    On = 1,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        self as i8
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// A timestamped pixel address event. Timestamps are microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t_us: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event {
            t_us,
            x,
            y,
            polarity,
        }
    }

    /// Stream order: time, then row, column and polarity.
    pub fn sort_key(&self) -> (u64, u16, u16, Polarity) {
        (self.t_us, self.y, self.x, self.polarity)
    }

    pub fn t_seconds(&self) -> f64 {
        self.t_us as f64 * 1e-6
    }
}

/// Sensor size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub width: u16,
    pub height: u16,
}

impl Geometry {
    pub fn new(width: u16, height: u16) -> Self {
        Geometry { width, height }
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < i64::from(self.width) && y < i64::from(self.height)
    }

    pub fn n_pixels(&self) -> usize {
        usize::from(self.width) * usize::from(self.height)
    }
}

pub fn is_sorted(events: &[Event]) -> bool {
    events
        .windows(2)
        .all(|w| w[0].sort_key() <= w[1].sort_key())
}

pub fn sort_events(events: &mut [Event]) {
    events.sort_unstable_by_key(Event::sort_key);
}

/// Fails on the first event outside `geometry`.
pub fn check_bounds(events: &[Event], geometry: Geometry) -> Result<()> {
    match events
        .iter()
        .position(|e| !geometry.contains(i64::from(e.x), i64::from(e.y)))
    {
        Some(index) => Err(Error::OutOfBounds {
            index,
            x: events[index].x,
            y: events[index].y,
            width: geometry.width,
            height: geometry.height,
        }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Synthetic texture

/// Moving-texture stimulus. The texture is a set of discs on a canvas that
/// wraps in both directions, translating at constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    pub width: u16,
    pub height: u16,
    pub n_features: usize,
    /// Disc radii are drawn uniformly from `[radius_min, radius_max]` pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Pixels per second; negative `y` is upward motion.
    pub velocity: (f64, f64),
    /// Seconds.
    pub duration: f64,
    /// Events emitted each time a disc edge crosses a pixel center.
    pub event_rate_per_crossing: u32,
    /// Standard deviation of the timestamp jitter (s), applied by
    /// [`add_jitter`].
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        TextureConfig {
            width: 64,
            height: 64,
            n_features: 40,
            radius_min: 1.0,
            radius_max: 3.0,
            velocity: (0.0, -100.0),
            duration: 1.0,
            event_rate_per_crossing: 1,
            jitter_sigma: 1e-3,
            seed: 0,
        }
    }
}

impl TextureConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "texture geometry must be non-empty, got {}x{}",
                self.width, self.height
            ));
        }
        if self.n_features == 0 {
            return bad("n_features must be > 0".into());
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad(format!(
                "duration must be finite and > 0, got {}",
                self.duration
            ));
        }
        if !(self.radius_min > 0.0)
            || !(self.radius_max >= self.radius_min)
            || !self.radius_max.is_finite()
        {
            return bad(format!(
                "need 0 < radius_min <= radius_max, got [{}, {}]",
                self.radius_min, self.radius_max
            ));
        }
        if !self.velocity.0.is_finite() || !self.velocity.1.is_finite() {
            return bad("velocity must be finite".into());
        }
        if self.velocity == (0.0, 0.0) {
            return bad("velocity is zero; the texture would never generate events".into());
        }
        if !(self.jitter_sigma >= 0.0) || !self.jitter_sigma.is_finite() {
            return bad(format!(
                "jitter_sigma must be >= 0, got {}",
                self.jitter_sigma
            ));
        }
        Ok(())
    }

    /// Discs of the texture at `t = 0`, in canvas coordinates.
    pub fn features(&self) -> Vec<Feature> {
        let mut rng = StreamKey::root(self.seed).with_label("texture").rng();
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        (0..self.n_features)
            .map(|_| {
                let cx = rng.random::<f64>() * w;
                let cy = rng.random::<f64>() * h;
                let r = if self.radius_max > self.radius_min {
                    rng.random_range(self.radius_min..=self.radius_max)
                } else {
                    self.radius_min
                };
                Feature { cx, cy, r }
            })
            .collect()
    }
}

/// A disc of the texture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Inclusive range of canvas copies along one axis that can come within `r`
/// of the sensor while the center sweeps from `c` to `c + v * duration`.
fn image_range(c: f64, v: f64, duration: f64, r: f64, size: f64) -> std::ops::RangeInclusive<i64> {
    let sweep_lo = c + (v * duration).min(0.0);
    let sweep_hi = c + (v * duration).max(0.0);
    let lo = ((-r - sweep_hi) / size).floor() as i64;
    let hi = ((size + r - sweep_lo) / size).ceil() as i64;
    lo..=hi
}

fn to_us(t: f64) -> u64 {
    (t * 1e6).round() as u64
}

/// Events of a disc texture translating over the sensor.
///
/// Each time a disc boundary passes a pixel center an event is emitted at the
/// ideal crossing time: `On` when the disc enters, `Off` when it leaves.
/// Pixels already covered at `t = 0` do not fire until their next crossing.
pub fn generate_texture_events(config: &TextureConfig) -> Result<Vec<Event>> {
    config.validate()?;
    let (w, h) = (f64::from(config.width), f64::from(config.height));
    let (vx, vy) = config.velocity;
    let speed2 = vx * vx + vy * vy;
    let duration = config.duration;
    let mut events = Vec::new();

    for f in config.features() {
        for kx in image_range(f.cx, vx, duration, f.r, w) {
            for ky in image_range(f.cy, vy, duration, f.r, h) {
                let (cx, cy) = (f.cx + kx as f64 * w, f.cy + ky as f64 * h);
                // Pixel rows/columns the swept disc can touch.
                let x_lo = (cx.min(cx + vx * duration) - f.r - 0.5).floor().max(0.0) as i64;
                let x_hi = (cx.max(cx + vx * duration) + f.r - 0.5).ceil().min(w - 1.0) as i64;
                let y_lo = (cy.min(cy + vy * duration) - f.r - 0.5).floor().max(0.0) as i64;
                let y_hi = (cy.max(cy + vy * duration) + f.r - 0.5).ceil().min(h - 1.0) as i64;
                for py in y_lo..=y_hi {
                    for px in x_lo..=x_hi {
                        let dx = cx - (px as f64 + 0.5);
                        let dy = cy - (py as f64 + 0.5);
                        // |d + v t|^2 = r^2
                        let b = dx * vx + dy * vy;
                        let c = dx * dx + dy * dy - f.r * f.r;
                        let disc = b * b - speed2 * c;
                        if disc <= 0.0 {
                            continue;
                        }
                        let root = disc.sqrt();
                        let crossings = [
                            ((-b - root) / speed2, Polarity::On),
                            ((-b + root) / speed2, Polarity::Off),
                        ];
                        for (t, polarity) in crossings {
                            if (0.0..duration).contains(&t) {
                                let e = Event::new(to_us(t), px as u16, py as u16, polarity);
                                for _ in 0..config.event_rate_per_crossing {
                                    events.push(e);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    sort_events(&mut events);
    Ok(events)
}

/// Perturbs every timestamp by an independent Gaussian draw (`sigma` in
/// seconds), clamps at zero and restores stream order.
pub fn add_jitter(events: &[Event], sigma: f64, seed: u64) -> Result<Vec<Event>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "jitter sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(events.to_vec());
    }
    let normal = Normal::new(0.0, sigma * 1e6).expect("finite positive sigma");
    let mut rng = StreamKey::root(seed).with_label("jitter").rng();
    let mut out: Vec<Event> = events
        .iter()
        .map(|e| {
            let shift = normal.sample(&mut rng).round();
            let t = (e.t_us as f64 + shift).max(0.0);
            Event {
                t_us: t as u64,
                ..*e
            }
        })
        .collect();
    sort_events(&mut out);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Files

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("byte 0: bad magic {found:02x?} (expected \"EVT1\")")]
    BadMagic { found: Vec<u8> },
    #[error("byte {offset}: truncated record ({remaining} of {EVT_RECORD_LEN} bytes)")]
    Truncated { offset: usize, remaining: usize },
    #[error("byte {offset}: invalid polarity {value}")]
    BadPolarity { offset: usize, value: i8 },
    #[error("byte {offset}: record is out of order")]
    UnsortedRecord { offset: usize },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("line {line}: event is out of order")]
    UnsortedLine { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Csv,
    Evt,
}

impl EventFormat {
    /// `.csv` or `.evt`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(EventFormat::Csv),
            Some(e) if e.eq_ignore_ascii_case("evt") => Ok(EventFormat::Evt),
            _ => Err(Error::InvalidArgument(format!(
                "{}: unknown event file extension (expected .csv or .evt)",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            EventFormat::Csv => "csv",
            EventFormat::Evt => "evt",
        }
    }
}

pub fn encode_csv<W: Write>(events: &[Event], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, e.polarity.as_i8())?;
    }
    Ok(())
}

pub fn encode_evt<W: Write>(events: &[Event], mut w: W) -> io::Result<()> {
    w.write_all(EVT_MAGIC)?;
    for e in events {
        let mut rec = [0u8; EVT_RECORD_LEN];
        rec[0..8].copy_from_slice(&e.t_us.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.polarity.as_i8() as u8;
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn decode_csv(text: &str) -> Result<Vec<Event>, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CSV_HEADER => {}
        Some((line, h)) => {
            return Err(ParseError::Csv {
                line,
                message: format!("expected header {CSV_HEADER:?}, found {h:?}"),
            })
        }
        None => {
            return Err(ParseError::Csv {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let mut events: Vec<Event> = Vec::new();
    for (line, raw) in lines {
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let err = |message: String| ParseError::Csv { line, message };
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let t_us = fields[0]
            .parse::<u64>()
            .map_err(|e| err(format!("t_us {:?}: {e}", fields[0])))?;
        let x = fields[1]
            .parse::<u16>()
            .map_err(|e| err(format!("x {:?}: {e}", fields[1])))?;
        let y = fields[2]
            .parse::<u16>()
            .map_err(|e| err(format!("y {:?}: {e}", fields[2])))?;
        let polarity = fields[3]
            .parse::<i8>()
            .ok()
            .and_then(Polarity::from_i8)
            .ok_or_else(|| err(format!("polarity {:?} is not 1 or -1", fields[3])))?;
        let e = Event::new(t_us, x, y, polarity);
        if events.last().is_some_and(|p| p.sort_key() > e.sort_key()) {
            return Err(ParseError::UnsortedLine { line });
        }
        events.push(e);
    }
    Ok(events)
}

pub fn decode_evt(bytes: &[u8]) -> Result<Vec<Event>, ParseError> {
    if bytes.len() < EVT_MAGIC.len() || &bytes[..4] != EVT_MAGIC {
        return Err(ParseError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let body = &bytes[4..];
    let mut events: Vec<Event> = Vec::with_capacity(body.len() / EVT_RECORD_LEN);
    for (i, rec) in body.chunks(EVT_RECORD_LEN).enumerate() {
        let offset = 4 + i * EVT_RECORD_LEN;
        if rec.len() < EVT_RECORD_LEN {
            return Err(ParseError::Truncated {
                offset,
                remaining: rec.len(),
            });
        }
        let t_us = u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes"));
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let value = rec[12] as i8;
        let polarity = Polarity::from_i8(value).ok_or(ParseError::BadPolarity {
            offset: offset + 12,
            value,
        })?;
        let e = Event::new(t_us, x, y, polarity);
        if events.last().is_some_and(|p| p.sort_key() > e.sort_key()) {
            return Err(ParseError::UnsortedRecord { offset });
        }
        events.push(e);
    }
    Ok(events)
}

pub fn write_events(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !is_sorted(events) {
        return Err(Error::InvalidArgument(
            "refusing to write an unsorted event stream".into(),
        ));
    }
    let format = EventFormat::from_path(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        EventFormat::Csv => encode_csv(events, &mut w),
        EventFormat::Evt => encode_evt(events, &mut w),
    }
    .and_then(|()| w.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let format = EventFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let events = match format {
        EventFormat::Evt => decode_evt(&bytes)?,
        EventFormat::Csv => {
            let text = std::str::from_utf8(&bytes).map_err(|e| ParseError::Csv {
                line: 1 + bytes[..e.valid_up_to()]
                    .iter()
                    .filter(|&&b| b == b'\n')
                    .count(),
                message: "invalid UTF-8".into(),
            })?;
            decode_csv(text)?
        }
    };
    Ok(events)
}
