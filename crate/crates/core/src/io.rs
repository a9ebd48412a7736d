//! File formats: three-phase waveform CSV and the transformer/harmonic
//! configuration file.
//!
//! Waveform files start with `# fs=<Hz>`, may carry further `# key=value`
//! metadata lines, then a column header `t,<channels>` where channels are any
//! subset of `uA,uB,uC,iA,iB,iC`. Values are written with Rust's shortest
//! round-trip float formatting, so write followed by read is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twin::TransformerParams;
use crate::waveform::SampledWaveform;

pub const FORMAT_VERSION: u32 = 1;

/// Largest tolerated deviation between the t column and `t0 + n/fs`.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    UA,
    UB,
    UC,
    IA,
    IB,
    IC,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::UA,
        Channel::UB,
        Channel::UC,
        Channel::IA,
        Channel::IB,
        Channel::IC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::UA => "uA",
            Channel::UB => "uB",
            Channel::UC => "uC",
            Channel::IA => "iA",
            Channel::IB => "iB",
            Channel::IC => "iC",
        }
    }

    pub fn unit(self) -> &'static str {
        if self.is_voltage() {
            "V"
        } else {
            "A"
        }
    }

    pub fn is_voltage(self) -> bool {
        matches!(self, Channel::UA | Channel::UB | Channel::UC)
    }

    /// Phase index 0..3.
    pub fn phase(self) -> usize {
        match self {
            Channel::UA | Channel::IA => 0,
            Channel::UB | Channel::IB => 1,
            Channel::UC | Channel::IC => 2,
        }
    }

    pub fn voltage(phase: usize) -> Channel {
        [Channel::UA, Channel::UB, Channel::UC][phase]
    }

    pub fn current(phase: usize) -> Channel {
        [Channel::IA, Channel::IB, Channel::IC][phase]
    }

    pub fn parse(s: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Parsed file header.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformFileHeader {
    pub fs: f64,
    pub channels: Vec<Channel>,
    pub start_time: f64,
    pub sample_count: usize,
    pub version: u32,
    /// Other `# key=value` lines, in file order.
    pub metadata: Vec<(String, String)>,
}

/// The channels of one recording, all sharing fs and start time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSet {
    pub header: WaveformFileHeader,
    pub channels: BTreeMap<Channel, SampledWaveform>,
}

impl WaveformSet {
    /// Builds a set from equally sampled waveforms.
    pub fn new(channels: BTreeMap<Channel, SampledWaveform>) -> Result<Self> {
        let first = channels
            .values()
            .next()
            .ok_or_else(|| Error::Shape("waveform set needs at least one channel".into()))?;
        let (fs, t0, n) = (first.fs(), first.t0(), first.len());
        for (c, w) in &channels {
            if w.fs() != fs || w.t0() != t0 || w.len() != n {
                return Err(Error::Shape(format!(
                    "channel {} does not share fs/t0/length with the others",
                    c.name()
                )));
            }
        }
        Ok(Self {
            header: WaveformFileHeader {
                fs,
                channels: channels.keys().copied().collect(),
                start_time: t0,
                sample_count: n,
                version: FORMAT_VERSION,
                metadata: Vec::new(),
            },
            channels,
        })
    }

    /// Set from three phase voltages and three line currents.
    pub fn from_phases(u: &[SampledWaveform; 3], i: &[SampledWaveform; 3]) -> Result<Self> {
        let mut m = BTreeMap::new();
        for p in 0..3 {
            m.insert(Channel::voltage(p), u[p].clone());
            m.insert(Channel::current(p), i[p].clone());
        }
        Self::new(m)
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        self.header.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn fs(&self) -> f64 {
        self.header.fs
    }

    pub fn len(&self) -> usize {
        self.header.sample_count
    }

    pub fn is_empty(&self) -> bool {
        self.header.sample_count == 0
    }

    pub fn get(&self, c: Channel) -> Option<&SampledWaveform> {
        self.channels.get(&c)
    }

    fn require(&self, c: Channel) -> Result<SampledWaveform> {
        self.get(c)
            .cloned()
            .ok_or_else(|| Error::Shape(format!("missing channel {}", c.name())))
    }

    pub fn voltages(&self) -> Result<[SampledWaveform; 3]> {
        Ok([
            self.require(Channel::UA)?,
            self.require(Channel::UB)?,
            self.require(Channel::UC)?,
        ])
    }

    pub fn currents(&self) -> Result<[SampledWaveform; 3]> {
        Ok([
            self.require(Channel::IA)?,
            self.require(Channel::IB)?,
            self.require(Channel::IC)?,
        ])
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_number(cell: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what}: non-finite value {cell:?}")));
    }
    Ok(v)
}

/// Parses waveform CSV text.
pub fn parse_waveform_csv(text: &str) -> Result<WaveformSet> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));

    let (ln, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fs_text = first
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix("fs="))
        .ok_or_else(|| parse_err(ln, "expected `# fs=<Hz>` header"))?;
    let fs = parse_number(fs_text, ln, "fs")?;
    if fs <= 0.0 {
        return Err(parse_err(ln, "fs must be positive"));
    }

    let mut metadata = Vec::new();
    let mut declared_count = None;
    let mut version = FORMAT_VERSION;
    let (header_ln, header) = loop {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(ln + 1, "missing column header"))?;
        let Some(meta) = l.trim().strip_prefix('#') else {
            break (ln, l);
        };
        let (k, v) = meta
            .trim()
            .split_once('=')
            .ok_or_else(|| parse_err(ln, "metadata line must be `# key=value`"))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "samples" => {
                declared_count = Some(
                    v.parse::<usize>()
                        .map_err(|_| parse_err(ln, format!("bad sample count {v:?}")))?,
                )
            }
            "version" => {
                version = v
                    .parse()
                    .map_err(|_| parse_err(ln, format!("bad version {v:?}")))?;
                if version != FORMAT_VERSION {
                    return Err(parse_err(ln, format!("unsupported format version {version}")));
                }
            }
            _ => metadata.push((k.to_string(), v.to_string())),
        }
    };

    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(parse_err(header_ln, "first column must be `t`"));
    }
    let mut channels = Vec::with_capacity(cols.len() - 1);
    for c in &cols[1..] {
        let ch = Channel::parse(c)
            .ok_or_else(|| parse_err(header_ln, format!("unknown channel {c:?}")))?;
        if channels.contains(&ch) {
            return Err(parse_err(header_ln, format!("duplicate channel {c:?}")));
        }
        channels.push(ch);
    }
    if channels.is_empty() {
        return Err(parse_err(header_ln, "no channels"));
    }

    let mut data: Vec<Vec<f64>> = vec![Vec::new(); channels.len()];
    let mut t0 = 0.0;
    let mut n = 0usize;
    for (ln, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != cols.len() {
            return Err(parse_err(
                ln,
                format!("expected {} fields, found {}", cols.len(), cells.len()),
            ));
        }
        let t = parse_number(cells[0], ln, "t")?;
        if n == 0 {
            t0 = t;
        } else {
            let expected = t0 + n as f64 / fs;
            if (t - expected).abs() > TIME_TOLERANCE {
                return Err(parse_err(
                    ln,
                    format!("timestamp {t} deviates from {expected} implied by fs={fs}"),
                ));
            }
        }
        for (k, cell) in cells[1..].iter().enumerate() {
            data[k].push(parse_number(cell, ln, channels[k].name())?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(parse_err(header_ln + 1, "no data rows"));
    }
    if let Some(d) = declared_count {
        if d != n {
            return Err(parse_err(
                header_ln,
                format!("header declares {d} samples, body has {n}"),
            ));
        }
    }

    let mut map = BTreeMap::new();
    for (ch, samples) in channels.iter().zip(data) {
        map.insert(*ch, SampledWaveform::new(fs, t0, samples)?);
    }
    Ok(WaveformSet {
        header: WaveformFileHeader {
            fs,
            channels,
            start_time: t0,
            sample_count: n,
            version,
            metadata,
        },
        channels: map,
    })
}

pub fn read_waveform_csv(path: impl AsRef<Path>) -> Result<WaveformSet> {
    parse_waveform_csv(&fs::read_to_string(path)?)
}

/// Renders a waveform set in the CSV format, channels in canonical order.
pub fn format_waveform_csv(set: &WaveformSet) -> String {
    let h = &set.header;
    let chans: Vec<(Channel, &SampledWaveform)> =
        set.channels.iter().map(|(c, w)| (*c, w)).collect();
    let mut out = String::with_capacity(24 * (chans.len() + 1) * h.sample_count.max(1));
    let _ = writeln!(out, "# fs={}", h.fs);
    let _ = writeln!(out, "# version={}", FORMAT_VERSION);
    let _ = writeln!(out, "# samples={}", h.sample_count);
    let units: Vec<String> = chans
        .iter()
        .map(|(c, _)| format!("{}[{}]", c.name(), c.unit()))
        .collect();
    let _ = writeln!(out, "# units={}", units.join(" "));
    for (k, v) in &h.metadata {
        if !matches!(k.as_str(), "fs" | "version" | "samples" | "units") {
            let _ = writeln!(out, "# {k}={v}");
        }
    }
    out.push('t');
    for (c, _) in &chans {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
    for n in 0..h.sample_count {
        let _ = write!(out, "{}", h.start_time + n as f64 / h.fs);
        for (_, w) in &chans {
            let _ = write!(out, ",{}", w.samples()[n]);
        }
        out.push('\n');
    }
    out
}

pub fn write_waveform_csv(path: impl AsRef<Path>, set: &WaveformSet) -> Result<()> {
    fs::write(path, format_waveform_csv(set))?;
    Ok(())
}

/// Harmonic amplitudes in percent of the fundamental, keyed by order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicProfile {
    pub percent: BTreeMap<u32, f64>,
    /// Phase of each harmonic in degrees (sine reference, phase A); default 0.
    #[serde(default)]
    pub phase_deg: BTreeMap<u32, f64>,
}

impl HarmonicProfile {
    pub fn none() -> Self {
        Self {
            percent: BTreeMap::new(),
            phase_deg: BTreeMap::new(),
        }
    }

    /// Compatibility levels for LV public networks, up to the 25th order.
    pub fn standard_limits() -> Self {
        let table: [(u32, f64); 22] = [
            (2, 2.0),
            (3, 5.0),
            (4, 1.0),
            (5, 6.0),
            (6, 0.5),
            (7, 5.0),
            (8, 0.5),
            (9, 1.5),
            (10, 0.5),
            (11, 3.5),
            (12, 0.5),
            (13, 3.0),
            (14, 0.5),
            (15, 0.4),
            (16, 0.5),
            (17, 2.0),
            (18, 0.5),
            (19, 1.5),
            (20, 0.5),
            (21, 0.3),
            (23, 1.5),
            (25, 1.5),
        ];
        Self {
            percent: table.into_iter().collect(),
            phase_deg: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (&h, &p) in &self.percent {
            if h < 2 {
                return Err(Error::Config(format!("harmonic order {h} must be >= 2")));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Config(format!(
                    "harmonic {h} amplitude {p}% must be finite and >= 0"
                )));
            }
        }
        for h in self.phase_deg.keys() {
            if !self.percent.contains_key(h) {
                return Err(Error::Config(format!(
                    "phase given for harmonic {h} without an amplitude"
                )));
            }
        }
        Ok(())
    }

    /// (order, amplitude fraction, phase in radians) for non-zero entries.
    pub fn components(&self) -> Vec<(u32, f64, f64)> {
        self.percent
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|(&h, &p)| {
                let ph = self.phase_deg.get(&h).copied().unwrap_or(0.0);
                (h, p / 100.0, ph.to_radians())
            })
            .collect()
    }

    pub fn max_order(&self) -> u32 {
        self.components().iter().map(|c| c.0).max().unwrap_or(1)
    }

    /// Total harmonic distortion as a fraction.
    pub fn thd(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| c.1 * c.1)
            .sum::<f64>()
            .sqrt()
    }
}

/// Contents of a configuration file: transformer nameplate plus an
/// optional harmonic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinConfig {
    pub transformer: TransformerParams,
    pub harmonics: HarmonicProfile,
}

fn profile_from_table(t: &toml::Table, key: &str) -> Result<BTreeMap<u32, f64>> {
    let mut out = BTreeMap::new();
    let Some(v) = t.get(key) else {
        return Ok(out);
    };
    let tbl = v
        .as_table()
        .ok_or_else(|| Error::Config(format!("`{key}` must be a table of order = value")))?;
    for (k, v) in tbl {
        let h: u32 = k
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("`{key}`: order {k:?} is not an integer")))?;
        let x = v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config(format!("`{key}.{k}` must be a number")))?;
        out.insert(h, x);
    }
    Ok(out)
}

/// Parses the configuration format.
///
/// Transformer fields are top-level keys. Harmonics, if present, are given
/// as `[harmonics]` (order = percent) and optionally `[harmonic_phase_deg]`.
/// A file without `[harmonics]` gets the standard-limit profile.
pub fn parse_config(text: &str) -> Result<TwinConfig> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let harm = table.remove("harmonics");
    let phase = table.remove("harmonic_phase_deg");
    let transformer: TransformerParams = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    transformer.validate()?;

    let harmonics = match harm {
        None => HarmonicProfile::standard_limits(),
        Some(h) => {
            let mut wrapper = toml::Table::new();
            wrapper.insert("harmonics".into(), h);
            if let Some(p) = phase.clone() {
                wrapper.insert("harmonic_phase_deg".into(), p);
            }
            HarmonicProfile {
                percent: profile_from_table(&wrapper, "harmonics")?,
                phase_deg: profile_from_table(&wrapper, "harmonic_phase_deg")?,
            }
        }
    };
    harmonics.validate()?;
    Ok(TwinConfig {
        transformer,
        harmonics,
    })
}

pub fn read_config(path: impl AsRef<Path>) -> Result<TwinConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Renders a configuration in the format `parse_config` reads.
pub fn format_config(cfg: &TwinConfig) -> Result<String> {
    let mut out = toml::to_string(&cfg.transformer).map_err(|e| Error::Config(e.to_string()))?;
    out.push_str("\n[harmonics]\n");
    for (h, p) in &cfg.harmonics.percent {
        let _ = writeln!(out, "{h} = {p:?}");
    }
    if !cfg.harmonics.phase_deg.is_empty() {
        out.push_str("\n[harmonic_phase_deg]\n");
        for (h, p) in &cfg.harmonics.phase_deg {
            let _ = writeln!(out, "{h} = {p:?}");
        }
    }
    Ok(out)
}

/// Bundled preset: 50 kVA, 400 V / 20 kV simulation transformer.
pub const PRESET_SIMULATION_50KVA: &str = include_str!("../presets/simulation_50kva.toml");
/// Bundled preset: 630 kVA, 400 V / 20.5 kV field transformer.
pub const PRESET_FIELD_630KVA: &str = include_str!("../presets/field_630kva.toml");

/// Looks up a bundled preset by name.
pub fn preset(name: &str) -> Result<TwinConfig> {
    match name {
        "simulation" | "simulation_50kva" | "50kva" => parse_config(PRESET_SIMULATION_50KVA),
        "field" | "field_630kva" | "630kva" => parse_config(PRESET_FIELD_630KVA),
        _ => Err(Error::Config(format!("unknown preset {name:?}"))),
    }
}
