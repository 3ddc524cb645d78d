//! File formats of the pipeline.
//!
//! Every CSV written here starts with a `# corisk <stage> seed=<seed>`
//! comment line; readers skip `#` lines. Floats are written in Rust's
//! shortest round-trip form, so a value read back is bit-identical.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use corisk_core::blocks::{BlockRecord, GroupSpec, SiteMap, SiteRegion, StandardizationReport, COVARIATES};
use corisk_core::detection::{BoundaryKind, BoundaryPolyline, EventKind, NearMissEvent, DENSIFY_SPACING};
use corisk_core::dynamics::VehicleSpec;
use corisk_core::geometry::Point;
use corisk_core::hbsgrp::PosteriorChain;
use corisk_core::kinematics::{ProcessedFrame, ProcessedTrack, RawFrame, RawTrack};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const PROCESSED_COLUMNS: [&str; 11] =
    ["agent_id", "t", "x", "y", "vx", "vy", "v", "a", "theta", "yaw_rate", "delta"];
pub const EVENT_COLUMNS: [&str; 8] = ["kind", "frame_t", "ego", "other", "t_c", "ttc", "j", "k_or_l"];
pub const GROUP_COLUMNS: [&str; 6] = ["kind", "group", "blocks", "events", "exposure_s", "small"];
pub const TRUTH_COLUMNS: [&str; 7] = ["scenario", "kind", "frame_t", "ego", "other", "t_c", "target_ttc"];

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn header_line(stage: &str, seed: u64) -> String {
    format!("# corisk {stage} seed={seed}\n")
}

/// Writes a CSV file with the stage header comment.
pub fn write_csv<I>(path: &Path, stage: &str, seed: u64, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut buf = header_line(stage, seed).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        w.write_record(columns).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_bytes(path, &buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: &csv::Error) -> CliError {
    match e.position() {
        Some(p) => CliError::Data(format!("{}:{}: {e}", path.display(), p.line())),
        None => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn row_error(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", path.display()))
}

/// Deserializes every data row with its line number.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let headers = r.byte_headers().map_err(|e| csv_error(path, &e))?.clone();
    let mut out = Vec::new();
    let mut record = csv::ByteRecord::new();
    loop {
        match r.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = record.deserialize(Some(&headers)).map_err(|e| row_error(path, line, e))?;
                out.push((line, row));
            }
            Err(e) => return Err(csv_error(path, &e)),
        }
    }
    Ok(out)
}

/// CSV files directly inside `dir`, sorted by name.
pub fn list_csv(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Agent ids become file names, so they are restricted to a portable set.
pub fn check_agent_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
}

#[derive(Debug, Deserialize)]
struct TrackRow {
    agent_id: String,
    t: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

/// Reads a raw trajectory file (`agent_id,t,x,y,vx,vy`), one track per
/// agent, frames sorted by time.
pub fn read_track_file(path: &Path) -> Result<Vec<RawTrack>> {
    let mut by_agent: BTreeMap<String, Vec<(u64, RawFrame)>> = BTreeMap::new();
    for (line, r) in read_rows::<TrackRow>(path)? {
        if !check_agent_id(&r.agent_id) {
            return Err(row_error(path, line, format!("agent id `{}` must use [A-Za-z0-9_.-]", r.agent_id)));
        }
        let f = RawFrame { t: r.t, x: r.x, y: r.y, vx: r.vx, vy: r.vy };
        if ![f.t, f.x, f.y, f.vx, f.vy].iter().all(|v| v.is_finite()) {
            return Err(row_error(path, line, "non-finite value"));
        }
        by_agent.entry(r.agent_id).or_default().push((line, f));
    }
    by_agent
        .into_iter()
        .map(|(id, mut frames)| {
            frames.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
            let first_line = frames.iter().map(|f| f.0).min().unwrap_or(0);
            RawTrack::new(id, frames.into_iter().map(|f| f.1).collect()).map_err(|e| row_error(path, first_line, e))
        })
        .collect()
}

pub fn write_track_file(path: &Path, stage: &str, seed: u64, tracks: &[(String, Vec<RawFrame>)]) -> Result<()> {
    let rows = tracks.iter().flat_map(|(id, frames)| {
        frames.iter().map(move |f| vec![id.clone(), num(f.t), num(f.x), num(f.y), num(f.vx), num(f.vy)])
    });
    write_csv(path, stage, seed, &["agent_id", "t", "x", "y", "vx", "vy"], rows)
}

#[derive(Debug, Deserialize)]
struct DimensionRow {
    agent_id: String,
    length: f64,
    width: f64,
    wheelbase: f64,
}

/// Vehicle dimensions (`agent_id,length,width,wheelbase`).
pub fn read_dimensions(path: &Path) -> Result<BTreeMap<String, VehicleSpec>> {
    let mut out = BTreeMap::new();
    for (line, r) in read_rows::<DimensionRow>(path)? {
        let spec = VehicleSpec::new(r.wheelbase, r.length, r.width).map_err(|e| row_error(path, line, e))?;
        if out.insert(r.agent_id.clone(), spec).is_some() {
            return Err(row_error(path, line, format!("agent `{}` listed twice", r.agent_id)));
        }
    }
    Ok(out)
}

pub fn write_dimensions(path: &Path, stage: &str, seed: u64, dims: &[(String, VehicleSpec)]) -> Result<()> {
    let rows = dims.iter().map(|(id, s)| vec![id.clone(), num(s.length), num(s.width), num(s.wheelbase)]);
    write_csv(path, stage, seed, &["agent_id", "length", "width", "wheelbase"], rows)
}

pub fn write_processed(path: &Path, seed: u64, track: &ProcessedTrack) -> Result<()> {
    let rows = track.frames.iter().map(|f| {
        vec![
            track.agent_id.clone(),
            num(f.t),
            num(f.x),
            num(f.y),
            num(f.vx),
            num(f.vy),
            num(f.speed),
            num(f.accel),
            num(f.heading),
            num(f.yaw_rate),
            num(f.steer),
        ]
    });
    write_csv(path, "preprocess", seed, &PROCESSED_COLUMNS, rows)
}

#[derive(Debug, Deserialize)]
struct ProcessedRow {
    agent_id: String,
    t: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    v: f64,
    a: f64,
    theta: f64,
    yaw_rate: f64,
    delta: f64,
}

/// Reads one processed track; `spec` supplies the vehicle dimensions.
pub fn read_processed(path: &Path, specs: &BTreeMap<String, VehicleSpec>) -> Result<ProcessedTrack> {
    let rows = read_rows::<ProcessedRow>(path)?;
    let Some((_, first)) = rows.first() else {
        return Err(CliError::Data(format!("{}: no frames", path.display())));
    };
    let agent_id = first.agent_id.clone();
    if let Some((line, _)) = rows.iter().find(|(_, r)| r.agent_id != agent_id) {
        return Err(row_error(path, *line, "processed file mixes agents"));
    }
    let frames: Vec<ProcessedFrame> = rows
        .iter()
        .map(|(_, r)| ProcessedFrame {
            t: r.t,
            x: r.x,
            y: r.y,
            vx: r.vx,
            vy: r.vy,
            speed: r.v,
            accel: r.a,
            heading: r.theta,
            yaw_rate: r.yaw_rate,
            steer: r.delta,
        })
        .collect();
    let n = frames.len();
    let sample_period = if n > 1 { (frames[n - 1].t - frames[0].t) / (n - 1) as f64 } else { 0.1 };
    let spec = specs.get(&agent_id).copied().unwrap_or_default();
    Ok(ProcessedTrack { agent_id, frames, spec, sample_period })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryEntry {
    id: String,
    kind: BoundaryKind,
    points: Vec<[f64; 2]>,
}

/// Reads boundary polylines and densifies them for detection.
pub fn read_boundaries(path: &Path) -> Result<Vec<BoundaryPolyline>> {
    let entries: Vec<BoundaryEntry> = read_json(path)?;
    let mut out: Vec<BoundaryPolyline> = Vec::with_capacity(entries.len());
    for e in entries {
        if out.iter().any(|b| b.id == e.id) {
            return Err(CliError::Data(format!("{}: boundary `{}` listed twice", path.display(), e.id)));
        }
        let points = e.points.iter().map(|p| Point::new(p[0], p[1])).collect();
        let b = BoundaryPolyline::new(e.id, e.kind, points)
            .map_err(|err| CliError::Data(format!("{}: {err}", path.display())))?;
        out.push(b.densify(DENSIFY_SPACING));
    }
    Ok(out)
}

pub fn write_boundaries(path: &Path, boundaries: &[BoundaryPolyline]) -> Result<()> {
    let entries: Vec<BoundaryEntry> = boundaries
        .iter()
        .map(|b| BoundaryEntry {
            id: b.id.clone(),
            kind: b.kind,
            points: b.points().iter().map(|p| [p.x, p.y]).collect(),
        })
        .collect();
    write_json(path, &entries)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegionEntry {
    #[serde(flatten)]
    spec: GroupSpec,
    polygon: Vec<[f64; 2]>,
}

pub fn read_site_map(path: &Path) -> Result<SiteMap> {
    let entries: Vec<RegionEntry> = read_json(path)?;
    let regions = entries
        .into_iter()
        .map(|e| SiteRegion { spec: e.spec, polygon: e.polygon.iter().map(|p| Point::new(p[0], p[1])).collect() })
        .collect();
    SiteMap::new(regions).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_site_map(path: &Path, regions: &[SiteRegion]) -> Result<()> {
    let entries: Vec<RegionEntry> = regions
        .iter()
        .map(|r| RegionEntry { spec: r.spec.clone(), polygon: r.polygon.iter().map(|p| [p.x, p.y]).collect() })
        .collect();
    write_json(path, &entries)
}

fn parse_kind(path: &Path, line: u64, code: &str) -> Result<EventKind> {
    EventKind::from_code(code).ok_or_else(|| row_error(path, line, format!("unknown kind `{code}`")))
}

pub fn write_events(path: &Path, seed: u64, events: &[NearMissEvent]) -> Result<()> {
    let rows = events.iter().map(|e| {
        vec![
            e.kind.code().to_string(),
            num(e.frame_t),
            e.ego.clone(),
            e.other.clone(),
            num(e.t_c),
            num(e.ttc),
            (e.corner + 1).to_string(),
            (e.target + 1).to_string(),
        ]
    });
    write_csv(path, "detect", seed, &EVENT_COLUMNS, rows)
}

#[derive(Debug, Deserialize)]
struct EventRow {
    kind: String,
    frame_t: f64,
    ego: String,
    other: String,
    t_c: f64,
    ttc: f64,
    j: usize,
    k_or_l: usize,
}

pub fn read_events(path: &Path) -> Result<Vec<NearMissEvent>> {
    read_rows::<EventRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            if r.j == 0 || r.k_or_l == 0 {
                return Err(row_error(path, line, "corner and target indices are 1-based"));
            }
            Ok(NearMissEvent {
                kind: parse_kind(path, line, &r.kind)?,
                frame_t: r.frame_t,
                ego: r.ego,
                other: r.other,
                t_c: r.t_c,
                ttc: r.ttc,
                corner: r.j - 1,
                target: r.k_or_l - 1,
            })
        })
        .collect()
}

fn block_columns() -> Vec<&'static str> {
    let mut c = vec!["kind", "group", "block", "z", "y", "frame_t", "ego", "other"];
    c.extend(COVARIATES.iter().map(|d| d.name));
    c
}

pub fn write_blocks(path: &Path, seed: u64, records: &[BlockRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let mut row = vec![
            r.kind.code().to_string(),
            r.group.to_string(),
            r.block.to_string(),
            num(r.z),
            r.y.to_string(),
            num(r.frame_t),
            r.ego.clone(),
            r.other.clone(),
        ];
        row.extend(r.covariates.iter().map(|&v| num(v)));
        row
    });
    write_csv(path, "blocks", seed, &block_columns(), rows)
}

pub fn read_blocks(path: &Path) -> Result<Vec<BlockRecord>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let headers = r.headers().map_err(|e| csv_error(path, &e))?.clone();
    let expected = block_columns();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::Data(format!("{}: unexpected columns", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| row_error(path, line, format!("column {}: {e}", expected[i])))
        };
        let u = |i: usize| -> Result<usize> {
            rec[i].parse::<usize>().map_err(|e| row_error(path, line, format!("column {}: {e}", expected[i])))
        };
        out.push(BlockRecord {
            kind: parse_kind(path, line, &rec[0])?,
            group: u(1)?,
            block: rec[2].parse().map_err(|e| row_error(path, line, format!("column block: {e}")))?,
            z: f(3)?,
            y: u(4)?,
            frame_t: f(5)?,
            ego: rec[6].to_string(),
            other: rec[7].to_string(),
            covariates: (8..expected.len()).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Block and event counts of one group, with its exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub kind: EventKind,
    pub group: usize,
    pub blocks: usize,
    pub events: usize,
    /// Seconds.
    pub exposure: f64,
    pub small: bool,
}

pub fn write_groups(path: &Path, seed: u64, rows: &[GroupRow]) -> Result<()> {
    let rows = rows.iter().map(|g| {
        vec![
            g.kind.code().to_string(),
            g.group.to_string(),
            g.blocks.to_string(),
            g.events.to_string(),
            num(g.exposure),
            g.small.to_string(),
        ]
    });
    write_csv(path, "blocks", seed, &GROUP_COLUMNS, rows)
}

#[derive(Debug, Deserialize)]
struct GroupCsvRow {
    kind: String,
    group: usize,
    blocks: usize,
    events: usize,
    exposure_s: f64,
    small: bool,
}

pub fn read_groups(path: &Path) -> Result<Vec<GroupRow>> {
    read_rows::<GroupCsvRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            Ok(GroupRow {
                kind: parse_kind(path, line, &r.kind)?,
                group: r.group,
                blocks: r.blocks,
                events: r.events,
                exposure: r.exposure_s,
                small: r.small,
            })
        })
        .collect()
}

/// Standardization of each interaction kind, keyed by kind code.
pub type Standardization = BTreeMap<String, StandardizationReport>;

/// Writes retained draws in long format (`iteration,chain,parameter,value`).
/// Iterations count sampler steps from zero, burn-in included.
pub fn write_chains(path: &Path, stage: &str, seed: u64, chain: &PosteriorChain) -> Result<()> {
    let rows = (0..chain.n_chains()).flat_map(move |c| {
        (0..chain.n_draws()).flat_map(move |i| {
            let iteration = chain.burn_in + i * chain.thin;
            chain
                .draw(c, i)
                .iter()
                .enumerate()
                .map(move |(j, &v)| vec![iteration.to_string(), c.to_string(), chain.names[j].clone(), num(v)])
        })
    });
    write_csv(path, stage, seed, &["iteration", "chain", "parameter", "value"], rows)
}

#[derive(Debug, Deserialize)]
struct ChainRow {
    iteration: usize,
    chain: usize,
    parameter: String,
    value: f64,
}

/// Reads draws written by [`write_chains`]. Parameter order follows the
/// first draw; every draw must list the same parameters.
pub fn read_chains(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let rows = read_rows::<ChainRow>(path)?;
    let mut names: Vec<String> = Vec::new();
    if let Some((_, first)) = rows.first() {
        for (_, r) in &rows {
            if r.chain != first.chain || r.iteration != first.iteration {
                break;
            }
            names.push(r.parameter.clone());
        }
    }
    let w = names.len();
    let mut chains: Vec<Vec<f64>> = Vec::new();
    for (i, (line, r)) in rows.iter().enumerate() {
        if w == 0 || r.parameter != names[i % w] {
            return Err(row_error(path, *line, "draws do not share one parameter order"));
        }
        if r.chain == chains.len() {
            chains.push(Vec::new());
        } else if r.chain + 1 != chains.len() {
            return Err(row_error(path, *line, "chains must be contiguous and in order"));
        }
        chains[r.chain].push(r.value);
    }
    Ok((names, chains))
}

/// A synthetic ground-truth near miss at a scenario's first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub scenario: usize,
    pub kind: EventKind,
    pub frame_t: f64,
    pub ego: String,
    pub other: String,
    pub t_c: f64,
    /// Scripted minimum TTC of the conflict, reached just before the
    /// evasive manoeuvre.
    pub target_ttc: f64,
}

pub fn write_truth(path: &Path, seed: u64, rows: &[TruthRow]) -> Result<()> {
    let rows = rows.iter().map(|g| {
        vec![
            g.scenario.to_string(),
            g.kind.code().to_string(),
            num(g.frame_t),
            g.ego.clone(),
            g.other.clone(),
            num(g.t_c),
            num(g.target_ttc),
        ]
    });
    write_csv(path, "synth", seed, &TRUTH_COLUMNS, rows)
}

#[derive(Debug, Deserialize)]
struct TruthCsvRow {
    scenario: usize,
    kind: String,
    frame_t: f64,
    ego: String,
    other: String,
    t_c: f64,
    target_ttc: f64,
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    read_rows::<TruthCsvRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            Ok(TruthRow {
                scenario: r.scenario,
                kind: parse_kind(path, line, &r.kind)?,
                frame_t: r.frame_t,
                ego: r.ego,
                other: r.other,
                t_c: r.t_c,
                target_ttc: r.target_ttc,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-12, 1e300, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn agent_ids() {
        assert!(check_agent_id("s001-a"));
        assert!(check_agent_id("veh_12.3"));
        assert!(!check_agent_id(""));
        assert!(!check_agent_id("../x"));
        assert!(!check_agent_id("a b"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "# c\nagent_id,t,x,y,vx,vy\na,0,0,0,1,0\na,0.1,oops,0,1,0\n").unwrap();
        let err = read_track_file(&p).unwrap_err().to_string();
        assert!(err.contains("t.csv:4"), "{err}");
    }
}
