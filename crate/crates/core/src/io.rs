//! File formats: graph, events and query CSVs in; density CSV and GeoJSON
//! out; TOML run configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use crate::engine::{DensityField, Method};
use crate::error::{Error, Result};
use crate::events::{ingest_events, EventRecord, EventStores};
use crate::kernels::KernelKind;
use crate::network::{load_graph, EdgeRecord, RoadNetwork};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Rows of a headed CSV file with their 1-based line numbers, after checking
/// that the header starts with `columns`.
fn read_rows(path: &Path, columns: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file);
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    for (i, want) in columns.iter().enumerate() {
        if header.get(i) != Some(want) {
            return Err(parse_err(path, 1, format!("expected header `{}`", columns.join(","))));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < columns.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", columns.len(), rec.len())));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("invalid {name} `{raw}`")))
}

/// Whole seconds, written either as an integer or as an integral decimal.
fn seconds(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<i64> {
    let raw = rec.get(i).unwrap_or("");
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(parse_err(path, line, format!("invalid {name} `{raw}` (whole seconds expected)"))),
    }
}

/// Parses `LINESTRING (x y, x y, ...)`.
pub fn parse_wkt_linestring(s: &str) -> Option<Vec<[f64; 2]>> {
    let s = s.trim();
    let rest = s.get(..10).filter(|p| p.eq_ignore_ascii_case("LINESTRING")).map(|_| &s[10..])?;
    let body = rest.trim().strip_prefix('(')?.strip_suffix(')')?;
    let pts: Option<Vec<[f64; 2]>> = body
        .split(',')
        .map(|p| {
            let mut it = p.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y))) => Some([x, y]),
                _ => None,
            }
        })
        .collect();
    pts.filter(|p| p.len() >= 2)
}

pub fn format_wkt_linestring(points: &[[f64; 2]]) -> String {
    let body: Vec<String> = points.iter().map(|[x, y]| format!("{x} {y}")).collect();
    format!("LINESTRING ({})", body.join(", "))
}

pub fn read_graph_records(path: &Path) -> Result<Vec<EdgeRecord>> {
    let rows = read_rows(path, &["edge_id", "from", "to", "length_m"])?;
    rows.iter()
        .map(|(line, rec)| {
            let mut r = EdgeRecord::new(&rec[0], &rec[1], &rec[2], field(path, *line, rec, 3, "length_m")?);
            if let Some(g) = rec.get(4).filter(|g| !g.is_empty()) {
                r.geometry = Some(parse_wkt_linestring(g).ok_or_else(|| parse_err(path, *line, "invalid LINESTRING geometry"))?);
            }
            Ok(r)
        })
        .collect()
}

pub fn read_graph(path: &Path) -> Result<RoadNetwork> {
    load_graph(read_graph_records(path)?)
}

pub fn read_event_records(path: &Path) -> Result<Vec<EventRecord>> {
    let rows = read_rows(path, &["edge_id", "offset_m", "timestamp"])?;
    rows.iter()
        .map(|(line, rec)| {
            let offset = field(path, *line, rec, 1, "offset_m")?;
            let t = seconds(path, *line, rec, 2, "timestamp")?;
            Ok(EventRecord::new(&rec[0], offset, t))
        })
        .collect()
}

pub fn read_events(path: &Path, net: &RoadNetwork) -> Result<EventStores> {
    ingest_events(read_event_records(path)?, net)
}

/// One row of a query batch file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryRow {
    pub t: i64,
    pub b_s: f64,
    pub b_t: f64,
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryRow>> {
    let rows = read_rows(path, &["t", "b_s", "b_t"])?;
    rows.iter()
        .map(|(line, rec)| {
            let q = QueryRow {
                t: seconds(path, *line, rec, 0, "t")?,
                b_s: field(path, *line, rec, 1, "b_s")?,
                b_t: field(path, *line, rec, 2, "b_t")?,
            };
            if !(q.b_s > 0.0 && q.b_s.is_finite() && q.b_t > 0.0 && q.b_t.is_finite()) {
                return Err(parse_err(path, *line, "bandwidths must be positive"));
            }
            Ok(q)
        })
        .collect()
}

pub fn write_graph(path: &Path, records: &[EdgeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let geo = records.iter().any(|r| r.geometry.is_some());
    let mut header = vec!["edge_id", "from", "to", "length_m"];
    if geo {
        header.push("geometry");
    }
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for r in records {
        let mut row = vec![r.id.clone(), r.from.clone(), r.to.clone(), r.length.to_string()];
        if geo {
            row.push(r.geometry.as_deref().map(format_wkt_linestring).unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_events(path: &Path, records: &[EventRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["edge_id", "offset_m", "timestamp"]).map_err(|e| csv_io(path, e))?;
    for r in records {
        w.write_record([r.edge_id.clone(), r.offset.to_string(), (r.timestamp as i64).to_string()])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => parse_err(path, 0, format!("{other:?}")),
    }
}

/// Nine significant digits, shortest form.
pub fn format_density(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Lixel order for output: edge id, then lixel index.
fn sorted_rows<'a>(net: &'a RoadNetwork, field: &'a DensityField) -> Vec<(&'a str, &'a crate::network::Lixel, f64)> {
    let mut rows: Vec<_> = field.iter().map(|(q, d)| (net.edge(q.edge).name.as_str(), q, d)).collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.index.cmp(&b.1.index)));
    rows
}

pub fn write_density_csv(path: &Path, net: &RoadNetwork, field: &DensityField) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "edge_id,lixel_index,center_offset_m,density").map_err(io_err(path))?;
    for (name, q, d) in sorted_rows(net, field) {
        writeln!(w, "{},{},{},{}", csv_field(name), q.index, q.center, format_density(d)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Point at fraction `f` along a polyline, and the vertex index after it.
fn point_along(poly: &[[f64; 2]], cum: &[f64], f: f64) -> ([f64; 2], usize) {
    let total = *cum.last().unwrap();
    let target = f.clamp(0.0, 1.0) * total;
    let i = cum.partition_point(|&c| c < target).clamp(1, poly.len() - 1);
    let seg = cum[i] - cum[i - 1];
    let r = if seg > 0.0 { (target - cum[i - 1]) / seg } else { 0.0 };
    let [x0, y0] = poly[i - 1];
    let [x1, y1] = poly[i];
    ([x0 + r * (x1 - x0), y0 + r * (y1 - y0)], i)
}

/// Piece of a polyline between two length fractions.
pub fn cut_polyline(poly: &[[f64; 2]], from: f64, to: f64) -> Vec<[f64; 2]> {
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let (p0, i0) = point_along(poly, &cum, from);
    let (p1, i1) = point_along(poly, &cum, to);
    let mut out = vec![p0];
    out.extend(poly[i0..i1].iter().copied().filter(|p| *p != p0));
    if out.last() != Some(&p1) || out.len() == 1 {
        out.push(p1);
    }
    out
}

pub fn density_geojson(net: &RoadNetwork, field: &DensityField) -> Result<serde_json::Value> {
    if !net.has_geometry() {
        return Err(Error::InvalidParameter("GeoJSON output needs a geometry column in the graph file".into()));
    }
    let mut features = Vec::with_capacity(field.len());
    for (name, q, d) in sorted_rows(net, field) {
        let edge = net.edge(q.edge);
        let poly = edge
            .geometry
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("edge `{name}` has no geometry")))?;
        let start = q.center - q.length / 2.0;
        let coords = cut_polyline(poly, start / edge.length, (start + q.length) / edge.length);
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {
                "edge_id": name,
                "lixel_index": q.index,
                "center_offset_m": q.center,
                "density": d,
            }
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

pub fn write_density_geojson(path: &Path, net: &RoadNetwork, field: &DensityField) -> Result<()> {
    let value = density_geojson(net, field)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub spatial: Option<KernelKind>,
    pub temporal: Option<KernelKind>,
}

/// Optional TOML run configuration; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub kernel: KernelSection,
    pub method: Option<String>,
    pub lixel_length: Option<f64>,
    pub depth: Option<u32>,
    pub quantize: Option<u32>,
    pub lixel_sharing: Option<bool>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

pub fn read_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {}", path.display(), e.message())))
}

/// `method` as written in a config file, including `oracle`.
pub fn parse_method(s: &str) -> Result<Option<Method>> {
    if s.eq_ignore_ascii_case("oracle") {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wkt_round_trip() {
        let p = parse_wkt_linestring("LINESTRING (0 0, 10 0, 10 5.5)").unwrap();
        assert_eq!(p, vec![[0.0, 0.0], [10.0, 0.0], [10.0, 5.5]]);
        assert_eq!(parse_wkt_linestring(&format_wkt_linestring(&p)).unwrap(), p);
        assert!(parse_wkt_linestring("POINT (1 2)").is_none());
        assert!(parse_wkt_linestring("LINESTRING (1 2)").is_none());
    }

    #[test]
    fn density_digits() {
        assert_eq!(format_density(0.123456789123), "0.123456789");
        assert_eq!(format_density(0.0), "0");
        assert_eq!(format_density(12345.678912), "12345.6789");
    }

    #[test]
    fn polyline_cut() {
        let poly = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        assert_eq!(cut_polyline(&poly, 0.25, 0.75), vec![[5.0, 0.0], [10.0, 0.0], [10.0, 5.0]]);
        assert_eq!(cut_polyline(&poly, 0.0, 0.5), vec![[0.0, 0.0], [10.0, 0.0]]);
    }

    #[test]
    fn config_parses() {
        let c: FileConfig = toml::from_str("method = \"rfs\"\n[kernel]\nspatial = \"cosine\"\ntemporal = \"triangular\"\n").unwrap();
        assert_eq!(c.kernel.spatial, Some(KernelKind::Cosine));
        assert_eq!(c.method.as_deref(), Some("rfs"));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<FileConfig>("[kernel]\nspatial = \"gaussian\"").is_err());
    }
}
