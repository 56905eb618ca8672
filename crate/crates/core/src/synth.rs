//! Synthetic proxy logs with planted error clusters.
//!
//! A [`SynthSpec`] describes hosts, each with a set of planted clusters. A
//! cluster fixes a status-code mix and per-attribute category
//! distributions. Line counts are apportioned exactly (largest remainder)
//! over every `(host, cluster, status)` cell before generation, so realized
//! status counts match the `SynthSpec` to the line; attribute values are drawn
//! independently per line. Lines are then emitted in a seeded random order.
//!
//! Spec files are TOML:
//!
//! ```toml
//! seed = 7
//! total_lines = 1237
//! error_rate = 1.0
//!
//! [[hosts]]
//! host = "host3"
//! service = "web"          # live_tv | vod | web | file
//! weight = 1.0
//!
//! [[hosts.clusters]]
//! size_fraction = 1.0
//! status_code_mix = { "403" = 0.97, "405" = 0.03 }
//! attributes.method = { GET = 1.0 }
//! attributes.livechannel = { many = 400, prefix = "ch" }
//! attributes.contentlength = { range = [100, 5000] }
//! ```
//!
//! Attribute values are either a category→probability map (the key
//! `__missing__` leaves the field absent), `{ many = n, prefix = "p" }` for
//! `n` equally likely categories, or `{ range = [lo, hi] }` for the numeric
//! fields. Optional keys: `start` (RFC 3339, default
//! `2021-03-01T00:00:00Z`), `interval_ms` (default 1000), `ok_status_mix`
//! for non-error lines, and per-host `background` attributes for them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{format_line, Schema};
use crate::log_model::{Field, HitStatus, LogRecord, MISSING};
use crate::seed;

const SUM_TOLERANCE: f64 = 1e-6;

pub const PRESETS: [&str; 3] = ["host1_overload", "host3_web_forbidden", "host7_crawler"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}; known presets: host1_overload, host3_web_forbidden, host7_crawler")]
    UnknownPreset(String),
    #[error("synth spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[from] io::Error),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    LiveTv,
    Vod,
    Web,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManySpec {
    pub many: u32,
    #[serde(default)]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub range: [f64; 2],
}

/// Distribution of one attribute inside a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeSpec {
    Many(ManySpec),
    Range(RangeSpec),
    Weights(BTreeMap<String, f64>),
}

impl AttributeSpec {
    pub fn fixed(value: &str) -> AttributeSpec {
        AttributeSpec::Weights(BTreeMap::from([(value.to_string(), 1.0)]))
    }

    /// Equal weight on each listed value.
    pub fn uniform(values: &[&str]) -> AttributeSpec {
        let p = 1.0 / values.len() as f64;
        AttributeSpec::Weights(values.iter().map(|v| (v.to_string(), p)).collect())
    }

    pub fn many(n: u32, prefix: &str) -> AttributeSpec {
        AttributeSpec::Many(ManySpec {
            many: n,
            prefix: prefix.to_string(),
        })
    }

    pub fn range(lo: f64, hi: f64) -> AttributeSpec {
        AttributeSpec::Range(RangeSpec { range: [lo, hi] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub size_fraction: f64,
    /// Error status code (as a string key) to probability.
    pub status_code_mix: BTreeMap<String, f64>,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub host: String,
    pub service: Service,
    pub weight: f64,
    #[serde(default, alias = "planted_clusters")]
    pub clusters: Vec<ClusterSpec>,
    /// Attributes of this host's non-error lines.
    #[serde(default)]
    pub background: BTreeMap<String, AttributeSpec>,
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap()
}

fn default_interval() -> u64 {
    1000
}

fn default_ok_mix() -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("200".to_string(), 0.9),
        ("206".to_string(), 0.05),
        ("304".to_string(), 0.05),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default)]
    pub seed: u64,
    pub total_lines: u64,
    pub error_rate: f64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    #[serde(default = "default_interval")]
    pub interval_ms: u64,
    #[serde(default = "default_ok_mix")]
    pub ok_status_mix: BTreeMap<String, f64>,
    pub hosts: Vec<HostSpec>,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<SynthSpec, SynthError> {
        let spec: SynthSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<SynthSpec, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SynthSpec::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synth specs always serialize")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        compile(self).map(|_| ())
    }

    /// Number of error lines the spec will emit.
    pub fn error_lines(&self) -> u64 {
        (self.total_lines as f64 * self.error_rate).round() as u64
    }
}

/// Counts of what [`generate`] wrote.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub lines: u64,
    pub error_lines: u64,
    pub lines_per_host: BTreeMap<String, u64>,
    pub status_counts: BTreeMap<u16, u64>,
    /// Planted cluster sizes per host, error lines only.
    pub cluster_sizes: BTreeMap<String, Vec<u64>>,
}

fn check_distribution(what: &str, weights: impl IntoIterator<Item = f64>) -> Result<(), SynthError> {
    let mut sum = 0.0;
    let mut n = 0;
    for w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(invalid(format!("{what}: weight {w} is not a non-negative number")));
        }
        sum += w;
        n += 1;
    }
    if n == 0 {
        return Err(invalid(format!("{what}: empty distribution")));
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(invalid(format!("{what}: weights sum to {sum}, expected 1")));
    }
    Ok(())
}

fn parse_mix(what: &str, mix: &BTreeMap<String, f64>, errors: bool) -> Result<Vec<(u16, f64)>, SynthError> {
    check_distribution(what, mix.values().copied())?;
    mix.iter()
        .map(|(k, &p)| {
            let code: u16 = k
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{what}: {k:?} is not a status code")))?;
            let ok = if errors { (400..=599).contains(&code) } else { (100..400).contains(&code) };
            if !ok {
                let kind = if errors { "an error code (400-599)" } else { "a non-error code (100-399)" };
                return Err(invalid(format!("{what}: {code} is not {kind}")));
            }
            Ok((code, p))
        })
        .collect()
}

enum Sampler {
    Categories { values: Vec<Option<String>>, dist: WeightedIndex<f64> },
    Many { prefix: String, n: u32 },
    Int { lo: u64, hi: u64 },
    Real { lo: f64, hi: f64 },
}

fn valid_category(s: &str) -> bool {
    !s.is_empty() && s != "-" && !s.chars().any(|c| c.is_control())
}

fn compile_attribute(what: &str, field: Field, spec: &AttributeSpec) -> Result<Sampler, SynthError> {
    match field {
        Field::StatusCode | Field::Host | Field::Timestamp | Field::Coordinates => {
            return Err(invalid(format!("{what}: {} cannot be set as an attribute", field.name())));
        }
        _ => {}
    }
    match spec {
        AttributeSpec::Range(r) => {
            if !field.is_numeric() {
                return Err(invalid(format!("{what}: range given for categorical field {}", field.name())));
            }
            let [lo, hi] = r.range;
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return Err(invalid(format!("{what}: range [{lo}, {hi}] must satisfy 0 <= lo <= hi")));
            }
            Ok(if field == Field::ContentLength {
                Sampler::Int {
                    lo: lo.ceil() as u64,
                    hi: (hi.floor() as u64).max(lo.ceil() as u64),
                }
            } else {
                Sampler::Real { lo, hi }
            })
        }
        _ if field.is_numeric() => Err(invalid(format!("{what}: numeric field {} needs a range", field.name()))),
        AttributeSpec::Many(m) => {
            if m.many == 0 {
                return Err(invalid(format!("{what}: many must be at least 1")));
            }
            if field == Field::Hit {
                return Err(invalid(format!("{what}: hit takes hit or miss only")));
            }
            if m.prefix.chars().any(|c| c.is_control()) {
                return Err(invalid(format!("{what}: prefix contains control characters")));
            }
            Ok(Sampler::Many {
                prefix: m.prefix.clone(),
                n: m.many,
            })
        }
        AttributeSpec::Weights(w) => {
            check_distribution(what, w.values().copied())?;
            let mut values = Vec::new();
            let mut weights = Vec::new();
            for (k, &p) in w {
                let value = if k == MISSING {
                    if field == Field::Method {
                        return Err(invalid(format!("{what}: method is required")));
                    }
                    None
                } else if !valid_category(k) {
                    return Err(invalid(format!("{what}: category {k:?} is empty or unprintable")));
                } else if field == Field::Hit && HitStatus::parse(k) == HitStatus::Missing {
                    return Err(invalid(format!("{what}: hit takes hit or miss, not {k:?}")));
                } else {
                    Some(k.clone())
                };
                if p > 0.0 {
                    values.push(value);
                    weights.push(p);
                }
            }
            let dist = WeightedIndex::new(&weights).map_err(|e| invalid(format!("{what}: {e}")))?;
            Ok(Sampler::Categories { values, dist })
        }
    }
}

fn compile_profile(what: &str, attrs: &BTreeMap<String, AttributeSpec>) -> Result<Vec<(Field, Sampler)>, SynthError> {
    let mut out = Vec::with_capacity(attrs.len());
    for (name, spec) in attrs {
        let field: Field = name
            .parse()
            .map_err(|_| invalid(format!("{what}: unknown field {name:?}")))?;
        out.push((field, compile_attribute(&format!("{what}.{name}"), field, spec)?));
    }
    out.sort_by_key(|(f, _)| f.index());
    Ok(out)
}

fn apply(record: &mut LogRecord, field: Field, sampler: &Sampler, rng: &mut ChaCha8Rng) {
    let text = match sampler {
        Sampler::Int { lo, hi } => {
            record.contentlength = Some(rng.gen_range(*lo..=*hi));
            return;
        }
        Sampler::Real { lo, hi } => {
            let v = if hi > lo { rng.gen_range(*lo..*hi) } else { *lo };
            // Millisecond resolution keeps lines short and round-trippable.
            let v = Some((v * 1000.0).round() / 1000.0);
            match field {
                Field::TimeFirstByte => record.timefirstbyte = v,
                _ => record.timetoserv = v,
            }
            return;
        }
        Sampler::Many { prefix, n } => Some(format!("{prefix}{}", rng.gen_range(0..*n))),
        Sampler::Categories { values, dist } => values[dist.sample(rng)].clone(),
    };
    match field {
        Field::Method => record.method = text.expect("method never samples missing"),
        Field::Hit => record.hit = text.map_or(HitStatus::Missing, |t| HitStatus::parse(&t)),
        _ => {
            if let Some(slot) = record.text_slot_mut(field) {
                *slot = text;
            }
        }
    }
}

struct Cell {
    host: usize,
    /// Planted cluster index; `None` for non-error lines.
    cluster: Option<u32>,
    code: u16,
    profile: usize,
    remaining: u64,
}

struct Plan {
    cells: Vec<Cell>,
    profiles: Vec<Vec<(Field, Sampler)>>,
    hosts: Vec<String>,
    clusters_per_host: Vec<usize>,
}

/// Largest-remainder apportionment of `total` over `weights`; ties go to
/// the earlier weight.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let short = total.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(short as usize) {
        counts[i] += 1;
    }
    counts
}

fn compile(spec: &SynthSpec) -> Result<Plan, SynthError> {
    if !(0.0..=1.0).contains(&spec.error_rate) {
        return Err(invalid(format!("error_rate {} is outside [0, 1]", spec.error_rate)));
    }
    if spec.hosts.is_empty() {
        return Err(invalid("no hosts"));
    }
    check_distribution("host weights", spec.hosts.iter().map(|h| h.weight))?;
    let mut seen = std::collections::BTreeSet::new();
    for h in &spec.hosts {
        if !valid_category(&h.host) {
            return Err(invalid(format!("host name {:?} is empty or unprintable", h.host)));
        }
        if !seen.insert(h.host.as_str()) {
            return Err(invalid(format!("host {:?} listed twice", h.host)));
        }
    }
    let errors = spec.error_lines();
    let ok = spec.total_lines - errors;
    let ok_mix = if ok > 0 {
        parse_mix("ok_status_mix", &spec.ok_status_mix, false)?
    } else {
        Vec::new()
    };

    let mut profiles = Vec::new();
    let mut error_cells = Vec::new();
    let mut error_weights = Vec::new();
    let mut ok_cells = Vec::new();
    let mut ok_weights = Vec::new();
    for (hi, h) in spec.hosts.iter().enumerate() {
        let what = format!("host {}", h.host);
        if errors > 0 && h.weight > 0.0 {
            check_distribution(&format!("{what} cluster size_fraction"), h.clusters.iter().map(|c| c.size_fraction))?;
        }
        for (ci, c) in h.clusters.iter().enumerate() {
            let cwhat = format!("{what} cluster {ci}");
            let mix = parse_mix(&format!("{cwhat} status_code_mix"), &c.status_code_mix, true)?;
            profiles.push(compile_profile(&cwhat, &c.attributes)?);
            for (code, p) in mix {
                error_cells.push(Cell {
                    host: hi,
                    cluster: Some(ci as u32),
                    code,
                    profile: profiles.len() - 1,
                    remaining: 0,
                });
                error_weights.push(h.weight * c.size_fraction * p);
            }
        }
        profiles.push(compile_profile(&format!("{what} background"), &h.background)?);
        for &(code, p) in &ok_mix {
            ok_cells.push(Cell {
                host: hi,
                cluster: None,
                code,
                profile: profiles.len() - 1,
                remaining: 0,
            });
            ok_weights.push(h.weight * p);
        }
    }
    for (cell, n) in error_cells.iter_mut().zip(apportion(errors, &error_weights)) {
        cell.remaining = n;
    }
    for (cell, n) in ok_cells.iter_mut().zip(apportion(ok, &ok_weights)) {
        cell.remaining = n;
    }
    let mut cells = error_cells;
    cells.extend(ok_cells);
    cells.retain(|c| c.remaining > 0);
    Ok(Plan {
        cells,
        profiles,
        hosts: spec.hosts.iter().map(|h| h.host.clone()).collect(),
        clusters_per_host: spec.hosts.iter().map(|h| h.clusters.len()).collect(),
    })
}

/// Write the log (header plus one line per record, default schema) to
/// `log`, and, when given, a ground-truth table `line\thost\tcluster` to
/// `truth` with one row per error line. `line` counts data lines from 1,
/// excluding the header. The spec is validated before anything is written.
pub fn generate<W: Write>(
    spec: &SynthSpec,
    log: W,
    truth: Option<&mut dyn Write>,
) -> Result<SynthSummary, SynthError> {
    let mut plan = compile(spec)?;
    let schema = Schema::default();
    let mut log = BufWriter::with_capacity(1 << 16, log);
    let mut truth = truth.map(|t| BufWriter::with_capacity(1 << 16, t));
    writeln!(log, "{}", schema.header_line())?;
    if let Some(t) = truth.as_mut() {
        writeln!(t, "line\thost\tcluster")?;
    }

    let mut summary = SynthSummary {
        lines: spec.total_lines,
        ..SynthSummary::default()
    };
    for (h, &k) in plan.hosts.iter().zip(&plan.clusters_per_host) {
        summary.lines_per_host.insert(h.clone(), 0);
        summary.cluster_sizes.insert(h.clone(), vec![0; k]);
    }

    let mut rng = seed::rng(spec.seed);
    let step = Duration::milliseconds(spec.interval_ms as i64);
    let mut timestamp = spec.start;
    let mut remaining: u64 = plan.cells.iter().map(|c| c.remaining).sum();
    let mut line_no = 0u64;
    while remaining > 0 {
        let mut r = rng.gen_range(0..remaining);
        let idx = plan
            .cells
            .iter()
            .position(|c| {
                if r < c.remaining {
                    true
                } else {
                    r -= c.remaining;
                    false
                }
            })
            .expect("draw below the remaining total");
        let cell = &mut plan.cells[idx];
        cell.remaining -= 1;
        remaining -= 1;
        line_no += 1;

        let host = &plan.hosts[cell.host];
        let mut record = LogRecord::new(cell.code, host.as_str(), "GET", timestamp).expect("codes validated");
        for (field, sampler) in &plan.profiles[cell.profile] {
            apply(&mut record, *field, sampler, &mut rng);
        }
        log.write_all(format_line(&record, &schema).as_bytes())?;
        log.write_all(b"\n")?;

        *summary.lines_per_host.get_mut(host).expect("known host") += 1;
        *summary.status_counts.entry(cell.code).or_default() += 1;
        if let Some(c) = cell.cluster {
            summary.error_lines += 1;
            summary.cluster_sizes.get_mut(host).expect("known host")[c as usize] += 1;
            if let Some(t) = truth.as_mut() {
                writeln!(t, "{line_no}\t{host}\t{c}")?;
            }
        }
        timestamp += step;
    }
    log.flush()?;
    if let Some(t) = truth.as_mut() {
        t.flush()?;
    }
    Ok(summary)
}

/// [`generate`] into files. The spec is validated before either file is
/// created.
pub fn generate_files(spec: &SynthSpec, log_path: &Path, truth_path: Option<&Path>) -> Result<SynthSummary, SynthError> {
    spec.validate()?;
    let create = |p: &Path| {
        File::create(p).map_err(|source| SynthError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let log = create(log_path)?;
    match truth_path {
        Some(tp) => {
            let mut truth = create(tp)?;
            generate(spec, log, Some(&mut truth))
        }
        None => generate(spec, log, None),
    }
}

/// One `(line, host, cluster)` row of a ground-truth file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthRow {
    pub line: u64,
    pub host: String,
    pub cluster: u32,
}

pub fn read_truth<R: io::BufRead>(reader: R) -> Result<Vec<TruthRow>, SynthError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 && line == "line\thost\tcluster" {
            continue;
        }
        let bad = || invalid(format!("truth file line {}: {line:?}", i + 1));
        let mut parts = line.split('\t');
        let (Some(l), Some(h), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        rows.push(TruthRow {
            line: l.parse().map_err(|_| bad())?,
            host: h.to_string(),
            cluster: c.parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// A planted cluster given as exact status counts, converted into
/// fractions of `host_total`.
fn counted(host_total: u64, counts: &[(u16, u64)], attributes: Vec<(&str, AttributeSpec)>) -> ClusterSpec {
    let size: u64 = counts.iter().map(|c| c.1).sum();
    ClusterSpec {
        size_fraction: size as f64 / host_total as f64,
        status_code_mix: counts
            .iter()
            .map(|&(code, n)| (code.to_string(), n as f64 / size as f64))
            .collect(),
        attributes: attributes.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

fn single_host(host: &str, service: Service, clusters: Vec<(Vec<(u16, u64)>, Vec<(&str, AttributeSpec)>)>) -> SynthSpec {
    let total: u64 = clusters.iter().flat_map(|c| c.0.iter().map(|x| x.1)).sum();
    SynthSpec {
        seed: 0,
        total_lines: total,
        error_rate: 1.0,
        start: default_start(),
        interval_ms: default_interval(),
        ok_status_mix: default_ok_mix(),
        hosts: vec![HostSpec {
            host: host.to_string(),
            service,
            weight: 1.0,
            clusters: clusters
                .into_iter()
                .map(|(counts, attrs)| counted(total, &counts, attrs))
                .collect(),
            background: BTreeMap::new(),
        }],
    }
}

fn weights(pairs: &[(&str, f64)]) -> AttributeSpec {
    let sum: f64 = pairs.iter().map(|p| p.1).sum();
    AttributeSpec::Weights(pairs.iter().map(|&(k, w)| (k.to_string(), w / sum)).collect())
}

/// Live TV host whose errors are dominated by 502 responses, with six
/// planted clusters shaped after the host 1 K-means table.
fn host1_overload() -> SynthSpec {
    use AttributeSpec as A;
    let common = |mut v: Vec<(&'static str, AttributeSpec)>| {
        v.push(("protocol", A::fixed("HTTP/1.1")));
        v.push(("livechannel", A::many(250, "channel-")));
        v.push(("path", A::many(40, "/live/segment-")));
        v.push(("contentlength", A::range(200_000.0, 2_000_000.0)));
        v.push(("timefirstbyte", A::range(0.0, 0.5)));
        v.push(("timetoserv", A::range(0.0, 2.0)));
        v
    };
    single_host(
        "host1",
        Service::LiveTv,
        vec![
            (
                vec![(412, 5), (500, 37), (502, 4634)],
                common(vec![
                    ("method", A::fixed("GET")),
                    ("devicebrand", A::uniform(&["0", "2", "3", "4", "5", "8"])),
                    (
                        "devicefamily",
                        A::uniform(&["1", "4", "6", "10", "13", "24", "38", "49", "51", "58", "66", "36", "650"]),
                    ),
                    ("uafamily", A::uniform(&["1", "5"])),
                    ("osfamily", A::fixed("1")),
                ]),
            ),
            (
                vec![(403, 12), (502, 1510), (503, 1)],
                common(vec![
                    ("method", A::fixed("GET")),
                    ("devicefamily", A::uniform(&["0", MISSING])),
                    ("uafamily", A::uniform(&["1", "3", "6", "7", "16", "24", MISSING])),
                    ("osfamily", A::uniform(&["0", "2", "3", "4", MISSING])),
                ]),
            ),
            (
                vec![(412, 15), (500, 82), (502, 5411)],
                common(vec![
                    ("method", A::fixed("GET")),
                    ("devicebrand", A::fixed("0")),
                    ("devicefamily", A::fixed("1")),
                    ("uafamily", A::fixed("2")),
                    ("osfamily", A::fixed("1")),
                ]),
            ),
            (
                vec![(500, 17), (502, 736)],
                common(vec![
                    ("method", A::fixed("GET")),
                    ("devicebrand", A::uniform(&["2", "5", "6"])),
                    ("devicefamily", A::many(60, "")),
                    ("uafamily", A::uniform(&["1", "2"])),
                    ("osfamily", A::fixed("1")),
                ]),
            ),
            (
                vec![(500, 1), (502, 388)],
                common(vec![
                    ("method", A::fixed("GET")),
                    ("devicebrand", A::fixed("4")),
                    ("devicefamily", A::fixed("8")),
                    ("uafamily", A::fixed("8")),
                    ("osfamily", A::fixed("6")),
                ]),
            ),
            (
                vec![(403, 9), (416, 26), (502, 981)],
                common(vec![
                    ("method", A::fixed("GET")),
                    ("devicebrand", A::fixed("1")),
                    ("devicefamily", A::uniform(&["2", "5", "7", "9", "11"])),
                    ("uafamily", A::uniform(&["1", "6", "8", "10"])),
                    ("osfamily", A::uniform(&["3", "5", "7"])),
                ]),
            ),
        ],
    )
}

/// Web host logging only 403 and 405, spread over client device profiles.
fn host3_web_forbidden() -> SynthSpec {
    use AttributeSpec as A;
    let web = |mut v: Vec<(&'static str, AttributeSpec)>| {
        v.push(("protocol", weights(&[("HTTP/1.1", 0.8), ("HTTP/2.0", 0.2)])));
        v.push(("contenttype", A::fixed("text/html")));
        v.push(("contentlength", A::range(0.0, 4096.0)));
        v.push(("timetoserv", A::range(0.0, 0.2)));
        v
    };
    single_host(
        "host3",
        Service::Web,
        vec![
            (
                vec![(403, 420)],
                web(vec![
                    ("method", A::fixed("GET")),
                    ("path", A::many(30, "/assets/")),
                    ("devicefamily", A::fixed("Other")),
                    ("devicebrand", A::fixed("Generic")),
                    ("osfamily", A::fixed("Windows")),
                    ("uafamily", A::uniform(&["Chrome", "Firefox"])),
                ]),
            ),
            (
                vec![(403, 310)],
                web(vec![
                    ("method", A::fixed("GET")),
                    ("path", A::many(20, "/account/")),
                    ("devicefamily", A::uniform(&["iPhone", "iPad"])),
                    ("devicebrand", A::fixed("Apple")),
                    ("osfamily", A::fixed("iOS")),
                    ("uafamily", A::fixed("Mobile Safari")),
                ]),
            ),
            (
                vec![(403, 240)],
                web(vec![
                    ("method", A::fixed("GET")),
                    ("path", A::many(20, "/account/")),
                    ("devicefamily", A::many(25, "SM-")),
                    ("devicebrand", A::fixed("Samsung")),
                    ("osfamily", A::fixed("Android")),
                    ("uafamily", A::fixed("Chrome Mobile")),
                ]),
            ),
            (
                vec![(403, 150)],
                web(vec![
                    ("method", A::fixed("POST")),
                    ("path", A::fixed("/login")),
                    ("devicefamily", A::fixed("Other")),
                    ("devicebrand", A::fixed(MISSING)),
                    ("osfamily", A::fixed("Linux")),
                    ("uafamily", A::uniform(&["curl", "Python Requests"])),
                ]),
            ),
            (
                vec![(403, 77)],
                web(vec![
                    ("method", A::fixed("GET")),
                    ("path", A::fixed("/admin")),
                    ("devicefamily", A::fixed("Other")),
                    ("devicebrand", A::fixed(MISSING)),
                    ("osfamily", A::fixed("Other")),
                    ("uafamily", A::fixed("Other")),
                ]),
            ),
            (
                vec![(405, 25)],
                web(vec![
                    ("method", A::fixed("PUT")),
                    ("path", A::fixed("/api/upload")),
                    ("devicefamily", A::fixed("Other")),
                    ("osfamily", A::fixed("Mac OS X")),
                    ("uafamily", A::fixed("Safari")),
                ]),
            ),
            (
                vec![(405, 15)],
                web(vec![
                    ("method", A::fixed("DELETE")),
                    ("path", A::fixed("/api/items")),
                    ("devicefamily", A::fixed("Other")),
                    ("osfamily", A::fixed("Windows")),
                    ("uafamily", A::fixed("Edge")),
                ]),
            ),
        ],
    )
}

/// Live TV host flooded by a crawler: every error line shares one path,
/// device family, UA family and OS family.
fn host7_crawler() -> SynthSpec {
    use AttributeSpec as A;
    let crawler = |mut v: Vec<(&'static str, AttributeSpec)>| {
        v.push(("path", A::fixed("/live/channels.m3u8")));
        v.push(("devicefamily", A::fixed("Spider")));
        v.push(("uafamily", A::fixed("crawlerbot")));
        v.push(("osfamily", A::fixed("Other")));
        v.push(("devicebrand", A::fixed(MISSING)));
        v
    };
    single_host(
        "host7",
        Service::LiveTv,
        vec![
            (
                vec![(400, 9000)],
                crawler(vec![
                    ("method", A::fixed("GET")),
                    ("protocol", A::fixed("HTTP/1.1")),
                    ("livechannel", A::many(120, "channel-")),
                    ("contentlength", A::range(0.0, 512.0)),
                ]),
            ),
            (
                vec![(400, 7000)],
                crawler(vec![
                    ("method", A::fixed("HEAD")),
                    ("protocol", A::fixed("HTTP/1.1")),
                    ("livechannel", A::many(120, "channel-")),
                    ("contentlength", A::range(0.0, 0.0)),
                ]),
            ),
            (
                vec![(400, 4272)],
                crawler(vec![
                    ("method", A::fixed("GET")),
                    ("protocol", A::fixed("HTTP/1.0")),
                    ("livechannel", A::fixed(MISSING)),
                    ("contentlength", A::range(0.0, 512.0)),
                ]),
            ),
            (
                vec![(412, 6000)],
                crawler(vec![
                    ("method", A::fixed("GET")),
                    ("protocol", A::fixed("HTTP/1.1")),
                    ("livechannel", A::many(120, "channel-")),
                    ("cachecontrol", A::fixed("no-cache")),
                ]),
            ),
            (
                vec![(412, 5078)],
                crawler(vec![
                    ("method", A::fixed("GET")),
                    ("protocol", A::fixed("HTTP/2.0")),
                    ("livechannel", A::many(120, "channel-")),
                    ("cachecontrol", A::fixed("max-age=0")),
                ]),
            ),
            (
                vec![(503, 129)],
                crawler(vec![
                    ("method", A::fixed("GET")),
                    ("protocol", A::fixed("HTTP/1.1")),
                    ("livechannel", A::many(120, "channel-")),
                    ("timetoserv", A::range(5.0, 30.0)),
                ]),
            ),
            (
                vec![(403, 12)],
                crawler(vec![
                    ("method", A::fixed("POST")),
                    ("protocol", A::fixed("HTTP/1.1")),
                    ("livechannel", A::fixed(MISSING)),
                ]),
            ),
        ],
    )
}

/// Built-in spec by name, at its natural line count with seed 0.
pub fn preset(name: &str) -> Result<SynthSpec, SynthError> {
    match name {
        "host1_overload" => Ok(host1_overload()),
        "host3_web_forbidden" => Ok(host3_web_forbidden()),
        "host7_crawler" => Ok(host7_crawler()),
        _ => Err(SynthError::UnknownPreset(name.to_string())),
    }
}

/// Attributes carrying the planted signal in [`planted_spec`].
pub const PLANTED_FIELDS: [Field; 6] = [
    Field::DeviceFamily,
    Field::UaFamily,
    Field::OsFamily,
    Field::DeviceBrand,
    Field::Path,
    Field::ContentType,
];

/// One host with `k` well-separated categorical clusters of unequal size.
/// On each of [`PLANTED_FIELDS`] a cluster puts `purity` of its mass on
/// its own category and spreads the rest over four shared noise values.
pub fn planted_spec(lines: u64, k: usize, purity: f64, seed: u64) -> SynthSpec {
    const CODES: [u16; 6] = [400, 403, 404, 412, 500, 502];
    let sizes: Vec<f64> = (0..k).map(|i| (k + i) as f64).collect();
    let total: f64 = sizes.iter().sum();
    let noise = (1.0 - purity) / 4.0;
    let clusters = (0..k)
        .map(|c| {
            let attributes = PLANTED_FIELDS
                .iter()
                .map(|f| {
                    let mut w = BTreeMap::from([(format!("{}-{c}", f.name()), purity)]);
                    for j in 0..4 {
                        *w.entry(format!("shared-{j}")).or_insert(0.0) += noise;
                    }
                    (f.name().to_string(), AttributeSpec::Weights(w))
                })
                .collect();
            ClusterSpec {
                size_fraction: sizes[c] / total,
                status_code_mix: BTreeMap::from([(CODES[c % CODES.len()].to_string(), 1.0)]),
                attributes,
            }
        })
        .collect();
    SynthSpec {
        seed,
        total_lines: lines,
        error_rate: 1.0,
        start: default_start(),
        interval_ms: default_interval(),
        ok_status_mix: default_ok_mix(),
        hosts: vec![HostSpec {
            host: "planted".to_string(),
            service: Service::Web,
            weight: 1.0,
            clusters,
            background: BTreeMap::new(),
        }],
    }
}
