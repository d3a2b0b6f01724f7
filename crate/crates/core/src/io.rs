//! File formats: dataset CSV, chain files, curve documents, grid summaries
//! and wombling tables. Every writer has a reader that returns the same value.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write-then-read cycle is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curves::CurveDoc;
use crate::data::SpatialDataset;
use crate::differential::{GridField, GridSummary};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::mcmc::{ChainDraw, FitSettings, PosteriorChains, PriorConfig};
use crate::summary::{Significance, Summary};
use crate::wombling::{CurveSummary, MeasureSummary, SegmentSummary, WombMode, WomblingResult};

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, msg: format!("{kind:?}") },
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("column `{column}`: `{field}` is not a number"),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

// ---------------------------------------------------------------------------
// Datasets

/// Reads `s1,s2,y[,x1..xp]`. An intercept column is prepended to the design.
pub fn parse_dataset<R: Read>(reader: R) -> Result<SpatialDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "s1" || header[1] != "s2" || header[2] != "y" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must start with `s1,s2,y`, got `{}`", header.join(",")),
        });
    }
    let names = &header[3..];
    let mut locations = Vec::new();
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let s1 = parse_f64(&rec[0], line, "s1")?;
        let s2 = parse_f64(&rec[1], line, "s2")?;
        y.push(parse_f64(&rec[2], line, "y")?);
        locations.push([s1, s2]);
        for (k, name) in names.iter().enumerate() {
            cols[k].push(parse_f64(&rec[3 + k], line, name)?);
        }
    }
    if locations.is_empty() {
        return Err(Error::Parse { line: 1, msg: "dataset has no rows".into() });
    }
    let covariates = names.iter().cloned().zip(cols).collect();
    match SpatialDataset::new(locations, y, covariates) {
        // rows are reported 1-based as in the file, after the header line
        Err(Error::DuplicateLocation { first, second }) => Err(Error::DuplicateLocation {
            first: first + 2,
            second: second + 2,
        }),
        other => other,
    }
}

pub fn load_dataset(path: &Path) -> Result<SpatialDataset> {
    parse_dataset(open(path)?)
}

pub fn write_dataset_to<W: Write>(writer: W, data: &SpatialDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["s1".to_string(), "s2".into(), "y".into()];
    header.extend(data.covariates.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut row = vec![data.locations[i][0].to_string(), data.locations[i][1].to_string(), data.y[i].to_string()];
        row.extend((1..data.x.ncols()).map(|j| data.x[(i, j)].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &SpatialDataset) -> Result<()> {
    write_dataset_to(create(path)?, data)
}

// ---------------------------------------------------------------------------
// Chain files

#[derive(Serialize, Deserialize)]
struct ChainHeader {
    family: KernelFamily,
    priors: PriorConfig,
    settings: FitSettings,
    locations: Vec<[f64; 2]>,
    accept_trace: Vec<f64>,
}

const CHAIN_MAGIC: &str = "# curvwomb-chains ";

/// A `# curvwomb-chains {json}` line holding the run metadata, then one CSV
/// row per retained draw: `beta1..betap,sigma2,tau2,phi,z1..zL`.
pub fn write_chains_to<W: Write>(mut writer: W, chains: &PosteriorChains) -> Result<()> {
    let header = ChainHeader {
        family: chains.family,
        priors: chains.priors.clone(),
        settings: chains.settings,
        locations: chains.locations.clone(),
        accept_trace: chains.accept_trace.clone(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(writer, "{CHAIN_MAGIC}{json}")?;
    let p = chains.priors.mu_beta.len();
    let n = chains.locations.len();
    let mut w = csv::Writer::from_writer(writer);
    let mut cols: Vec<String> = (1..=p).map(|i| format!("beta{i}")).collect();
    cols.extend(["sigma2", "tau2", "phi"].map(String::from));
    cols.extend((1..=n).map(|i| format!("z{i}")));
    w.write_record(&cols).map_err(csv_err)?;
    for d in &chains.draws {
        let params = [d.sigma2, d.tau2, d.phi];
        let row = d.beta.iter().chain(&params).chain(&d.z).map(f64::to_string);
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_chains(path: &Path, chains: &PosteriorChains) -> Result<()> {
    write_chains_to(create(path)?, chains)
}

pub fn read_chains_from<R: BufRead>(mut reader: R) -> Result<PosteriorChains> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .trim_end()
        .strip_prefix(CHAIN_MAGIC)
        .ok_or_else(|| Error::Parse { line: 1, msg: "not a chain file (missing metadata line)".into() })?;
    let header: ChainHeader =
        serde_json::from_str(json).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let p = header.priors.mu_beta.len();
    let n = header.locations.len();
    let width = p + 3 + n;
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let cols = rdr.headers().map_err(csv_err)?.len();
    if cols != width {
        return Err(Error::Parse {
            line: 2,
            msg: format!("expected {width} columns, got {cols}"),
        });
    }
    let mut draws = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        // +1 for the metadata line ahead of the CSV section
        let line = rec.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        let vals = rec
            .iter()
            .map(|f| parse_f64(f, line, "draw"))
            .collect::<Result<Vec<f64>>>()?;
        draws.push(ChainDraw {
            beta: vals[..p].to_vec(),
            sigma2: vals[p],
            tau2: vals[p + 1],
            phi: vals[p + 2],
            z: vals[p + 3..].to_vec(),
        });
    }
    Ok(PosteriorChains {
        family: header.family,
        priors: header.priors,
        settings: header.settings,
        locations: header.locations,
        draws,
        accept_trace: header.accept_trace,
    })
}

pub fn read_chains(path: &Path) -> Result<PosteriorChains> {
    read_chains_from(open(path)?)
}

// ---------------------------------------------------------------------------
// Curve documents

pub fn parse_curve_doc(text: &str) -> Result<CurveDoc> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
}

pub fn curve_doc_to_string(doc: &CurveDoc) -> String {
    serde_json::to_string_pretty(doc).expect("curve documents always serialise")
}

pub fn read_curve_doc(path: &Path) -> Result<CurveDoc> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    parse_curve_doc(&text)
}

pub fn write_curve_doc(path: &Path, doc: &CurveDoc) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", curve_doc_to_string(doc))?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Grid summaries

/// One row of the long-format grid summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub field: GridField,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub flag: Significance,
}

pub fn grid_rows(gs: &GridSummary, fields: &[GridField]) -> Vec<GridRow> {
    let mut out = Vec::with_capacity(gs.points.len() * fields.len());
    for (p, s) in gs.points.iter().enumerate() {
        for &f in fields {
            let sm = gs.get(p, f);
            out.push(GridRow {
                x: s[0],
                y: s[1],
                field: f,
                median: sm.median,
                lower: sm.lower,
                upper: sm.upper,
                flag: sm.flag,
            });
        }
    }
    out
}

const GRID_COLUMNS: [&str; 7] = ["x", "y", "field", "median", "lower", "upper", "flag"];

/// `# alpha=…` then `x,y,field,median,lower,upper,flag`, one row per point
/// and field.
pub fn write_grid_rows_to<W: Write>(mut writer: W, alpha: f64, rows: &[GridRow]) -> Result<()> {
    writeln!(writer, "# alpha={alpha}")?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(GRID_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.x.to_string(),
            r.y.to_string(),
            r.field.name().to_string(),
            r.median.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.flag.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_summary_to<W: Write>(writer: W, gs: &GridSummary) -> Result<()> {
    write_grid_rows_to(writer, gs.alpha, &grid_rows(gs, &GridField::ALL))
}

pub fn write_grid_summary(path: &Path, gs: &GridSummary) -> Result<()> {
    write_grid_summary_to(create(path)?, gs)
}

fn parse_alpha_line(line: &str) -> Option<f64> {
    line.trim().strip_prefix("# alpha=")?.split_whitespace().next()?.parse().ok()
}

pub fn read_grid_rows_from<R: BufRead>(mut reader: R) -> Result<(f64, Vec<GridRow>)> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let alpha = parse_alpha_line(&first).ok_or_else(|| Error::Parse {
        line: 1,
        msg: "expected `# alpha=<value>`".into(),
    })?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != GRID_COLUMNS {
        return Err(Error::Parse { line: 2, msg: format!("unexpected columns `{}`", header.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        let bad = |msg: String| Error::Parse { line, msg };
        rows.push(GridRow {
            x: parse_f64(&rec[0], line, "x")?,
            y: parse_f64(&rec[1], line, "y")?,
            field: rec[2].parse().map_err(|e: Error| bad(e.to_string()))?,
            median: parse_f64(&rec[3], line, "median")?,
            lower: parse_f64(&rec[4], line, "lower")?,
            upper: parse_f64(&rec[5], line, "upper")?,
            flag: rec[6].parse().map_err(|e: Error| bad(e.to_string()))?,
        });
    }
    Ok((alpha, rows))
}

/// Reads a full grid summary: every point must list all fields in the
/// canonical order.
pub fn read_grid_summary_from<R: BufRead>(reader: R) -> Result<GridSummary> {
    let (alpha, rows) = read_grid_rows_from(reader)?;
    let nf = GridField::ALL.len();
    if rows.len() % nf != 0 {
        return Err(Error::Parse {
            line: 0,
            msg: format!("{} rows is not a multiple of {nf} fields", rows.len()),
        });
    }
    let mut points = Vec::with_capacity(rows.len() / nf);
    let mut summaries = Vec::with_capacity(rows.len() / nf);
    for (p, chunk) in rows.chunks(nf).enumerate() {
        let mut row = Vec::with_capacity(nf);
        for (k, (r, f)) in chunk.iter().zip(GridField::ALL).enumerate() {
            if r.field != f || r.x != chunk[0].x || r.y != chunk[0].y {
                return Err(Error::Parse {
                    line: 3 + p * nf + k,
                    msg: format!("expected field `{}` at ({}, {})", f.name(), chunk[0].x, chunk[0].y),
                });
            }
            row.push(Summary { median: r.median, lower: r.lower, upper: r.upper, flag: r.flag });
        }
        points.push([chunk[0].x, chunk[0].y]);
        summaries.push(row);
    }
    Ok(GridSummary { alpha, points, summaries })
}

pub fn read_grid_summary(path: &Path) -> Result<GridSummary> {
    read_grid_summary_from(open(path)?)
}

/// Wide plot table: one row per point with `<field>_median`, `_lower`,
/// `_upper` and `_flag` columns for every field.
pub fn write_plot_data_to<W: Write>(writer: W, gs: &GridSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x".to_string(), "y".to_string()];
    for f in GridField::ALL {
        for part in ["median", "lower", "upper", "flag"] {
            header.push(format!("{}_{part}", f.name()));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for (p, s) in gs.points.iter().enumerate() {
        let mut row = vec![s[0].to_string(), s[1].to_string()];
        for sm in &gs.summaries[p] {
            row.extend([sm.median.to_string(), sm.lower.to_string(), sm.upper.to_string(), sm.flag.as_str().into()]);
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_plot_data(path: &Path, gs: &GridSummary) -> Result<()> {
    write_plot_data_to(create(path)?, gs)
}

// ---------------------------------------------------------------------------
// Wombling tables

const WOMB_SCOPES: [&str; 2] = ["total", "average"];
const WOMB_MEASURES: [&str; 2] = ["gradient", "curvature"];

fn womb_header() -> Vec<String> {
    let mut h: Vec<String> = ["segment", "x0", "y0", "x1", "y1", "length", "failed"].map(String::from).to_vec();
    for scope in WOMB_SCOPES {
        for m in WOMB_MEASURES {
            for part in ["median", "lower", "upper", "flag"] {
                h.push(format!("{m}_{scope}_{part}"));
            }
        }
    }
    h
}

fn push_measures(row: &mut Vec<String>, total: &MeasureSummary, average: &MeasureSummary) {
    for ms in [total, average] {
        for s in [&ms.gradient, &ms.curvature] {
            row.extend([s.median.to_string(), s.lower.to_string(), s.upper.to_string(), s.flag.as_str().into()]);
        }
    }
}

/// `# alpha=… mode=…`, then one row per segment and a final `curve` row whose
/// endpoint columns are empty.
pub fn write_wombling_csv_to<W: Write>(mut writer: W, r: &WomblingResult) -> Result<()> {
    let mode = match r.mode {
        WombMode::Joint => "joint",
        WombMode::Fast => "fast",
    };
    writeln!(writer, "# alpha={} mode={mode}", r.alpha)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(womb_header()).map_err(csv_err)?;
    for s in &r.segments {
        let mut row = vec![
            s.index.to_string(),
            s.start[0].to_string(),
            s.start[1].to_string(),
            s.end[0].to_string(),
            s.end[1].to_string(),
            s.length.to_string(),
            s.failed.to_string(),
        ];
        push_measures(&mut row, &s.total, &s.average);
        w.write_record(&row).map_err(csv_err)?;
    }
    let mut row = vec!["curve".to_string(), String::new(), String::new(), String::new(), String::new()];
    row.push(r.curve.length.to_string());
    row.push(String::new());
    push_measures(&mut row, &r.curve.total, &r.curve.average);
    w.write_record(&row).map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub fn write_wombling_csv(path: &Path, r: &WomblingResult) -> Result<()> {
    write_wombling_csv_to(create(path)?, r)
}

fn read_measures(rec: &csv::StringRecord, line: usize) -> Result<(MeasureSummary, MeasureSummary)> {
    let mut s = Vec::with_capacity(4);
    for k in 0..4 {
        let base = 7 + 4 * k;
        s.push(Summary {
            median: parse_f64(&rec[base], line, "median")?,
            lower: parse_f64(&rec[base + 1], line, "lower")?,
            upper: parse_f64(&rec[base + 2], line, "upper")?,
            flag: rec[base + 3].parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?,
        });
    }
    Ok((
        MeasureSummary { gradient: s[0], curvature: s[1] },
        MeasureSummary { gradient: s[2], curvature: s[3] },
    ))
}

/// Reads a wombling table back. Per-draw totals are not part of the table.
pub fn read_wombling_csv_from<R: BufRead>(mut reader: R) -> Result<WomblingResult> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let alpha = parse_alpha_line(&first).ok_or_else(|| Error::Parse { line: 1, msg: "expected `# alpha=<value> mode=<mode>`".into() })?;
    let mode = match first.split_whitespace().find_map(|t| t.strip_prefix("mode=")) {
        Some("joint") => WombMode::Joint,
        Some("fast") => WombMode::Fast,
        other => return Err(Error::Parse { line: 1, msg: format!("unknown wombling mode {other:?}") }),
    };
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != womb_header() {
        return Err(Error::Parse { line: 2, msg: "unexpected wombling columns".into() });
    }
    let mut segments = Vec::new();
    let mut curve = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        let (total, average) = read_measures(&rec, line)?;
        let length = parse_f64(&rec[5], line, "length")?;
        if &rec[0] == "curve" {
            curve = Some(CurveSummary { length, total, average });
            continue;
        }
        let index = rec[0].parse().map_err(|_| Error::Parse { line, msg: format!("bad segment index `{}`", &rec[0]) })?;
        let failed = rec[6].parse().map_err(|_| Error::Parse { line, msg: format!("bad failed flag `{}`", &rec[6]) })?;
        segments.push(SegmentSummary {
            index,
            start: [parse_f64(&rec[1], line, "x0")?, parse_f64(&rec[2], line, "y0")?],
            end: [parse_f64(&rec[3], line, "x1")?, parse_f64(&rec[4], line, "y1")?],
            length,
            total,
            average,
            failed,
        });
    }
    let curve = curve.ok_or_else(|| Error::Parse { line: 0, msg: "missing `curve` row".into() })?;
    Ok(WomblingResult { alpha, mode, segments, curve, totals: Vec::new() })
}

pub fn read_wombling_csv(path: &Path) -> Result<WomblingResult> {
    read_wombling_csv_from(open(path)?)
}

pub fn wombling_to_json(r: &WomblingResult) -> String {
    serde_json::to_string_pretty(r).expect("wombling results always serialise")
}

pub fn wombling_from_json(text: &str) -> Result<WomblingResult> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{CurveDocKind, Orientation};
    use crate::differential::GridField;

    const SAMPLE: &str = "s1,s2,y\n0.1,0.2,1.5\n0.3,0.4,-2\n0.9,0.1,0.25\n";

    #[test]
    fn three_row_dataset() {
        let ds = parse_dataset(SAMPLE.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_covariates(), 1);
        assert_eq!(ds.y[1], -2.0);
    }

    #[test]
    fn covariate_schema() {
        let text = "s1,s2,y,elev,om\n0,0,1,7.9,13.6\n1,0,2,8.4,14\n0,1,3,7.3,13\n1,1,4,7.1,8\n";
        let ds = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.n_covariates(), 3);
        assert_eq!(ds.covariates, vec!["elev", "om"]);
        assert_eq!(ds.x[(1, 0)], 1.0);
        assert_eq!(ds.x[(1, 1)], 8.4);
    }

    #[test]
    fn bad_value_reports_line() {
        let text = "s1,s2,y\n0.1,0.2,1\n0.3,0.4,abc\n";
        match parse_dataset(text.as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        let text = "s1,s2,y\n0.1,0.2\n";
        assert!(matches!(parse_dataset(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let text = "s1,s2,y\n0.1,0.2,1\n0.5,0.5,2\n0.1,0.2,3\n";
        assert!(matches!(
            parse_dataset(text.as_bytes()),
            Err(Error::DuplicateLocation { first: 2, second: 4 })
        ));
    }

    #[test]
    fn bad_header() {
        assert!(matches!(parse_dataset("a,b,c\n1,2,3\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn dataset_round_trip() {
        let text = "s1,s2,y,elev\n0.1,0.2,1.5,3\n0.30000000000000004,0.4,-2,1e-300\n";
        let ds = parse_dataset(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &ds).unwrap();
        assert_eq!(parse_dataset(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn curve_doc_round_trip() {
        let mut doc = CurveDoc::polyline(vec![[0.1, 0.2], [0.7, 1.0 / 3.0]], true);
        doc.orientation = Orientation::Clockwise;
        assert_eq!(parse_curve_doc(&curve_doc_to_string(&doc)).unwrap(), doc);
        doc.kind = CurveDocKind::Level;
        doc.level = Some(-18.0);
        doc.near = Some([0.5, 0.25]);
        assert_eq!(parse_curve_doc(&curve_doc_to_string(&doc)).unwrap(), doc);
        assert!(matches!(parse_curve_doc("{\n\"kind\": 3}"), Err(Error::Parse { line: 2, .. })));
    }

    fn summary(m: f64) -> Summary {
        Summary { median: m, lower: m - 1.0, upper: m + 0.1, flag: Significance::from_interval(m - 1.0, m + 0.1) }
    }

    #[test]
    fn grid_round_trip() {
        let gs = GridSummary {
            alpha: 0.05,
            points: vec![[0.1, 0.2], [1.0 / 3.0, 0.9]],
            summaries: (0..2)
                .map(|p| (0..12).map(|f| summary(p as f64 * 0.7 - f as f64 / 7.0)).collect())
                .collect(),
        };
        let mut buf = Vec::new();
        write_grid_summary_to(&mut buf, &gs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "x,y,field,median,lower,upper,flag");
        assert_eq!(read_grid_summary_from(buf.as_slice()).unwrap(), gs);

        let rows = grid_rows(&gs, &[GridField::Laplacian]);
        let mut buf = Vec::new();
        write_grid_rows_to(&mut buf, gs.alpha, &rows).unwrap();
        assert_eq!(read_grid_rows_from(buf.as_slice()).unwrap(), (0.05, rows));

        let mut buf = Vec::new();
        write_plot_data_to(&mut buf, &gs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn wombling_round_trip() {
        let ms = |m: f64| MeasureSummary { gradient: summary(m), curvature: summary(-m) };
        let r = WomblingResult {
            alpha: 0.05,
            mode: WombMode::Fast,
            segments: vec![SegmentSummary {
                index: 0,
                start: [0.1, 0.2],
                end: [0.3, 0.4],
                length: 0.08_f64.sqrt(),
                total: ms(1.5),
                average: ms(0.25),
                failed: false,
            }],
            curve: CurveSummary { length: 0.08_f64.sqrt(), total: ms(1.5), average: ms(0.25) },
            totals: Vec::new(),
        };
        let mut buf = Vec::new();
        write_wombling_csv_to(&mut buf, &r).unwrap();
        assert_eq!(read_wombling_csv_from(buf.as_slice()).unwrap(), r);
        assert_eq!(wombling_from_json(&wombling_to_json(&r)).unwrap(), r);
    }

    #[test]
    fn chains_reject_foreign_files() {
        assert!(matches!(read_chains_from(SAMPLE.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
