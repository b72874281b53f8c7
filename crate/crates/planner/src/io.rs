//! Node files, PER curves and the header line every output starts with.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dap_core::scenario::{from_lat_lon, GeoOrigin, Node, NodeKind, Point};
use dap_core::NodeId;

use crate::config::{parse_bool, Settings};

/// Provenance line: tool version, seed and config hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    pub fn new(seed: u64, settings: &Settings) -> Header {
        Header { seed, config_hash: settings.hash() }
    }

    /// Without the leading `# `, as stored in JSON outputs.
    pub fn text(&self) -> String {
        format!("dap-planner {} seed={} config={}", env!("CARGO_PKG_VERSION"), self.seed, self.config_hash)
    }

    pub fn line(&self) -> String {
        format!("# {}\n", self.text())
    }
}

/// Raw node file coordinates before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub id: u32,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    pub height: Option<f64>,
    pub indoor: bool,
}

fn parse_kind(s: &str) -> Option<NodeKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "sm" => Some(NodeKind::SmartMeter),
        "pole" => Some(NodeKind::Pole),
        _ => None,
    }
}

/// Parses `id,kind,x,y,height,indoor` rows. Lines starting with `#` are
/// skipped; `height` and `indoor` may be empty. Errors name the line.
pub fn parse_node_rows<R: Read>(reader: R) -> Result<Vec<NodeRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().context("reading node file header")?.clone();
    let expected = ["id", "kind", "x", "y", "height", "indoor"];
    let found: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if found != expected {
        bail!("node file header must be `{}`, got `{}`", expected.join(","), found.join(","));
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.context("reading node file")?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let at = |msg: String| anyhow!("line {line}: {msg}");
        let id: u32 = field(0).parse().map_err(|_| at(format!("bad id {:?}", field(0))))?;
        if !seen.insert(id) {
            return Err(at(format!("duplicate id {id}")));
        }
        let kind = parse_kind(field(1)).ok_or_else(|| at(format!("unknown kind {:?}", field(1))))?;
        let coord = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = field(i).parse().map_err(|_| at(format!("bad {name} {:?}", field(i))))?;
            if !v.is_finite() {
                return Err(at(format!("non-finite {name}")));
            }
            Ok(v)
        };
        let x = coord(2, "x")?;
        let y = coord(3, "y")?;
        let height = match field(4) {
            "" => None,
            h => Some(h.parse::<f64>().ok().filter(|h| *h > 0.0 && h.is_finite()).ok_or_else(|| at(format!("bad height {h:?}")))?),
        };
        let indoor = parse_bool(field(5)).ok_or_else(|| at(format!("bad indoor flag {:?}", field(5))))?;
        rows.push(NodeRow { id, kind, x, y, height, indoor });
    }
    Ok(rows)
}

/// Turns rows into nodes, projecting longitude/latitude when configured.
/// Returns the projection origin used, if any.
pub fn rows_to_nodes(rows: &[NodeRow], settings: &Settings) -> Result<(Vec<Node>, Option<GeoOrigin>)> {
    let origin = if settings.latlon {
        Some(GeoOrigin::centroid(rows.iter().map(|r| (r.y, r.x))).ok_or_else(|| anyhow!("node file is empty"))?)
    } else {
        None
    };
    let nodes = rows
        .iter()
        .map(|r| {
            let position = match origin {
                Some(o) => from_lat_lon(o, r.y, r.x),
                None => Point::new(r.x, r.y),
            };
            let default_height = match r.kind {
                NodeKind::SmartMeter => settings.sm_height,
                NodeKind::Pole => settings.dap_height,
            };
            Node {
                id: NodeId(r.id),
                kind: r.kind,
                position,
                height: r.height.unwrap_or(default_height),
                indoor: r.indoor,
            }
        })
        .collect();
    Ok((nodes, origin))
}

pub fn read_nodes(path: &Path, settings: &Settings) -> Result<(Vec<Node>, Option<GeoOrigin>)> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = parse_node_rows(f).with_context(|| format!("in {}", path.display()))?;
    rows_to_nodes(&rows, settings)
}

pub fn write_nodes<W: Write>(mut w: W, header: &Header, nodes: &[Node]) -> Result<()> {
    w.write_all(header.line().as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "kind", "x", "y", "height", "indoor"])?;
    for n in nodes {
        let kind = match n.kind {
            NodeKind::SmartMeter => "sm",
            NodeKind::Pole => "pole",
        };
        out.write_record([
            n.id.0.to_string(),
            kind.to_string(),
            n.position.x.to_string(),
            n.position.y.to_string(),
            n.height.to_string(),
            n.indoor.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `sinr_db,per` points; SINR must increase strictly.
pub fn read_per_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening PER curve {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(f);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for rec in rdr.deserialize::<(f64, f64)>() {
        let (sinr, per) = rec.with_context(|| format!("in {}", path.display()))?;
        if !(0.0..=1.0).contains(&per) {
            bail!("{}: PER {per} outside [0,1]", path.display());
        }
        if points.last().is_some_and(|&(s, _)| sinr <= s) {
            bail!("{}: SINR values must increase strictly", path.display());
        }
        points.push((sinr, per));
    }
    if points.is_empty() {
        bail!("{}: no PER points", path.display());
    }
    Ok(points)
}
