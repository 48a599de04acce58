//! CSV / JSON / DOT emitters and the run manifest.
//!
//! Reals are written with six fixed decimals. Every emitter is a pure
//! function of its input, so identical inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cascade_det::CascadeTrace;
use crate::cascade_mc::{McReport, SyntheticComparison};
use crate::error::{Error, Result};
use crate::marketdata::{AssetMeta, DescriptiveStats, Region};
use crate::matrix::Matrix;
use crate::netbuild::NodeMetrics;
use crate::risk::RiskReport;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Real(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => fmt_real(*v),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

/// `{:.6}` without a negative sign on zero.
pub fn fmt_real(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

pub fn emit_csv<W: Write>(table: &Table, out: W) -> Result<()> {
    for (k, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "row {k} has {} cells, header has {}",
                row.len(),
                table.columns.len()
            )));
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes(table: &Table) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    emit_csv(table, &mut buf)?;
    Ok(buf)
}

/// Square matrix with a header row and first column of tickers.
pub fn matrix_table(tickers: &[String], m: &Matrix) -> Table {
    let mut t = Table::new(std::iter::once("ticker".to_string()).chain(tickers.iter().cloned()));
    for (i, row) in m.iter_rows().enumerate() {
        let mut cells = vec![Cell::Text(tickers[i].clone())];
        cells.extend(row.iter().map(|v| Cell::Real(*v)));
        t.push(cells);
    }
    t
}

/// Inverse of [`matrix_table`] + [`emit_csv`].
pub fn parse_matrix_csv<R: Read>(reader: R) -> Result<(Vec<String>, Matrix)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let tickers: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad matrix cell `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((tickers, Matrix::from_rows(rows)?))
}

pub fn stats_table(stats: &DescriptiveStats) -> Table {
    let mut t = Table::new(["asset", "mean", "std_dev", "min", "max"]);
    for (ticker, s) in stats.tickers.iter().zip(&stats.stats) {
        t.push(vec![ticker.as_str().into(), s.mean.into(), s.std_dev.into(), s.min.into(), s.max.into()]);
    }
    t
}

pub fn risk_table(report: &RiskReport) -> Table {
    let mut t = Table::new(["asset", "var", "cvar"]);
    for (ticker, m) in report.tickers.iter().zip(&report.measures) {
        t.push(vec![ticker.as_str().into(), m.var.into(), m.cvar.into()]);
    }
    t
}

/// Normalized prices with a leading `date` column.
pub fn dated_matrix_table(dates: &[chrono::NaiveDate], tickers: &[String], m: &Matrix) -> Table {
    let mut t = Table::new(std::iter::once("date".to_string()).chain(tickers.iter().cloned()));
    for (d, row) in dates.iter().zip(m.iter_rows()) {
        let mut cells = vec![Cell::Text(d.format("%Y-%m-%d").to_string())];
        cells.extend(row.iter().map(|v| Cell::Real(*v)));
        t.push(cells);
    }
    t
}

pub fn node_metrics_table(assets: &[AssetMeta], metrics: &NodeMetrics) -> Table {
    let mut t = Table::new(["asset", "region", "degree", "clustering"]);
    for (i, a) in assets.iter().enumerate() {
        t.push(vec![
            a.ticker.as_str().into(),
            a.region.as_str().into(),
            metrics.degree[i].into(),
            metrics.clustering[i].into(),
        ]);
    }
    t
}

pub fn region_table(value_column: &str, values: &BTreeMap<Region, f64>) -> Table {
    let mut t = Table::new(["region", value_column]);
    for (r, v) in values {
        t.push(vec![r.as_str().into(), (*v).into()]);
    }
    t
}

/// Heatmap matrix: one row per iteration, one 0/1 column per ticker.
pub fn trace_table(trace: &CascadeTrace) -> Table {
    let mut t = Table::new(std::iter::once("iteration".to_string()).chain(trace.tickers.iter().cloned()));
    for (k, state) in trace.iterations.iter().enumerate() {
        let mut cells = vec![Cell::from(k)];
        cells.extend(state.flags().iter().map(|&d| Cell::Int(d as i64)));
        t.push(cells);
    }
    t
}

#[derive(Serialize)]
struct TraceIterationJson<'a> {
    iteration: usize,
    defaulted: usize,
    newly_defaulted: Vec<&'a str>,
    state: Vec<u8>,
}

#[derive(Serialize)]
struct TraceJson<'a> {
    tickers: &'a [String],
    theta: f64,
    influence_threshold: &'a crate::cascade_det::InfluenceThreshold,
    converged: bool,
    iterations: Vec<TraceIterationJson<'a>>,
}

pub fn trace_json(trace: &CascadeTrace) -> Result<Vec<u8>> {
    let fresh = trace.newly_defaulted();
    let doc = TraceJson {
        tickers: &trace.tickers,
        theta: trace.theta,
        influence_threshold: &trace.influence_threshold,
        converged: trace.converged,
        iterations: trace
            .iterations
            .iter()
            .zip(fresh)
            .enumerate()
            .map(|(k, (s, f))| TraceIterationJson {
                iteration: k,
                defaulted: s.count(),
                newly_defaulted: f.iter().map(|&i| trace.tickers[i].as_str()).collect(),
                state: s.flags().iter().map(|&d| d as u8).collect(),
            })
            .collect(),
    };
    to_json(&doc)
}

/// Summary row in the layout `scenario,theta,failure_probability,avg_failed`.
pub fn mc_summary_table(reports: &[&McReport]) -> Table {
    let mut t = Table::new(["scenario", "theta", "failure_probability", "avg_failed"]);
    for r in reports {
        t.push(vec![
            r.scenario.as_str().into(),
            r.theta.into(),
            r.failure_probability.into(),
            r.avg_failed.into(),
        ]);
    }
    t
}

pub fn comparison_table(cmp: &SyntheticComparison) -> Table {
    let mut t = Table::new(["network_type", "failure_probability", "avg_failed"]);
    t.push(vec![
        "real".into(),
        cmp.real.failure_probability.into(),
        cmp.real.avg_failed.into(),
    ]);
    t.push(vec![
        "erdos_renyi".into(),
        cmp.synthetic.failure_probability.into(),
        cmp.synthetic.avg_failed.into(),
    ]);
    t
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    /// `graph` with one edge per unordered pair, weight = larger direction.
    Undirected,
    /// `digraph` with one edge per non-zero entry.
    Directed,
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT graph with `region` and `clustering` node attributes and a `weight`
/// edge attribute. Nodes and edges are ordered lexicographically by ticker.
pub fn emit_dot(network: &Matrix, metrics: &NodeMetrics, assets: &[AssetMeta], kind: GraphKind) -> Result<String> {
    let n = assets.len();
    network.ensure_square(n)?;
    for len in [metrics.clustering.len(), metrics.degree.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| assets[a].ticker.cmp(&assets[b].ticker));

    let (keyword, arrow) = match kind {
        GraphKind::Undirected => ("graph", "--"),
        GraphKind::Directed => ("digraph", "->"),
    };
    let mut out = String::new();
    writeln!(out, "{keyword} network {{").unwrap();
    for &i in &order {
        writeln!(
            out,
            "  {} [region={}, clustering=\"{}\"];",
            dot_id(&assets[i].ticker),
            dot_id(assets[i].region.as_str()),
            fmt_real(metrics.clustering[i])
        )
        .unwrap();
    }
    for (a, &i) in order.iter().enumerate() {
        let targets: &[usize] = match kind {
            GraphKind::Undirected => &order[a + 1..],
            GraphKind::Directed => &order,
        };
        for &j in targets {
            if i == j {
                continue;
            }
            let w = match kind {
                GraphKind::Undirected => {
                    let (x, y) = (network[(i, j)], network[(j, i)]);
                    if x == 0.0 && y == 0.0 {
                        continue;
                    }
                    if x == 0.0 {
                        y
                    } else if y == 0.0 {
                        x
                    } else {
                        x.max(y)
                    }
                }
                GraphKind::Directed => {
                    if network[(i, j)] == 0.0 {
                        continue;
                    }
                    network[(i, j)]
                }
            };
            writeln!(
                out,
                "  {} {arrow} {} [weight=\"{}\"];",
                dot_id(&assets[i].ticker),
                dot_id(&assets[j].ticker),
                fmt_real(w)
            )
            .unwrap();
        }
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: Vec::new(),
            config,
            outputs: Vec::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Collects named artifacts and writes them, plus `manifest.json`, into one
/// output directory.
pub struct OutputDir<'a> {
    root: &'a Path,
    manifest: RunManifest,
}

impl<'a> OutputDir<'a> {
    pub fn create(root: &'a Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root, manifest })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(name), bytes)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &csv_bytes(table)?)
    }

    pub fn finish(self) -> Result<RunManifest> {
        write_atomic(&self.root.join("manifest.json"), &to_json(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::AssetRisk;

    #[test]
    fn risk_csv_layout() {
        let r = RiskReport {
            alpha: 0.95,
            tickers: vec!["GOLL4.SA".into(), "AAPL".into()],
            measures: vec![
                AssetRisk { var: -0.063513, cvar: -0.104355 },
                AssetRisk { var: -0.027498, cvar: -0.041923 },
            ],
        };
        let s = String::from_utf8(csv_bytes(&risk_table(&r)).unwrap()).unwrap();
        assert_eq!(s, "asset,var,cvar\nGOLL4.SA,-0.063513,-0.104355\nAAPL,-0.027498,-0.041923\n");
    }

    #[test]
    fn empty_table_is_header_only() {
        let s = String::from_utf8(csv_bytes(&Table::new(["a", "b"])).unwrap()).unwrap();
        assert_eq!(s, "a,b\n");
    }

    #[test]
    fn ragged_table_is_rejected() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![Cell::Int(1)]);
        assert!(csv_bytes(&t).is_err());
    }

    #[test]
    fn quoting_and_zero_sign() {
        let mut t = Table::new(["name", "v"]);
        t.push(vec!["a,b".into(), Cell::Real(-0.0000001)]);
        assert_eq!(String::from_utf8(csv_bytes(&t).unwrap()).unwrap(), "name,v\n\"a,b\",0.000000\n");
    }

    fn two_assets() -> Vec<AssetMeta> {
        vec![
            AssetMeta::new("BOVA11.SA", Region::Brazil, 1.0),
            AssetMeta::new("BBAS3.SA", Region::Brazil, 1.0),
        ]
    }

    #[test]
    fn dot_single_edge() {
        let m = Matrix::from_rows(vec![vec![0.0, 0.7712], vec![0.7712, 0.0]]).unwrap();
        let metrics = NodeMetrics {
            clustering: vec![0.0, 0.0],
            degree: vec![1, 1],
        };
        let dot = emit_dot(&m, &metrics, &two_assets(), GraphKind::Undirected).unwrap();
        assert_eq!(
            dot,
            "graph network {\n  \"BBAS3.SA\" [region=\"Brazil\", clustering=\"0.000000\"];\n  \"BOVA11.SA\" [region=\"Brazil\", clustering=\"0.000000\"];\n  \"BBAS3.SA\" -- \"BOVA11.SA\" [weight=\"0.771200\"];\n}\n"
        );
        assert_eq!(dot, emit_dot(&m, &metrics, &two_assets(), GraphKind::Undirected).unwrap());
        let directed = emit_dot(&m, &metrics, &two_assets(), GraphKind::Directed).unwrap();
        assert_eq!(directed.matches(" -> ").count(), 2);
    }

    #[test]
    fn dot_empty_graph_lists_every_node() {
        let assets: Vec<AssetMeta> = (0..20).map(|i| AssetMeta::new(format!("A{i:02}"), Region::US, 1.0)).collect();
        let metrics = NodeMetrics {
            clustering: vec![0.0; 20],
            degree: vec![0; 20],
        };
        let dot = emit_dot(&Matrix::zeros(20, 20), &metrics, &assets, GraphKind::Undirected).unwrap();
        assert_eq!(dot.lines().filter(|l| l.contains("region=")).count(), 20);
        assert!(!dot.contains("--"));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = Matrix::from_rows(vec![vec![1.0, -0.123_456_789], vec![0.5, 1.0]]).unwrap();
        let tickers = vec!["A".to_string(), "B".to_string()];
        let bytes = csv_bytes(&matrix_table(&tickers, &m)).unwrap();
        let (t2, m2) = parse_matrix_csv(bytes.as_slice()).unwrap();
        assert_eq!(t2, tickers);
        assert!((m2[(0, 1)] - m[(0, 1)]).abs() <= 1e-6);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new("risk", serde_json::json!({"alpha": 0.95}));
        manifest.add_input(Path::new("p.csv"), b"abc");
        let mut out = OutputDir::create(dir.path(), manifest).unwrap();
        out.write("x.txt", b"hello").unwrap();
        out.write("x.txt", b"world").unwrap();
        let m = out.finish().unwrap();
        assert_eq!(std::fs::read(dir.path().join("x.txt")).unwrap(), b"world");
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(json["inputs"][0]["sha256"], m.inputs[0].sha256);
        assert_eq!(json["config"]["alpha"], 0.95);
    }
}
