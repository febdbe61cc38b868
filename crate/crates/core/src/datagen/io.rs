//! Plain-text formats.
//!
//! Data: comma-separated, UTF-8, one header row of node names, one row per
//! observation.
//!
//! Edge lists: one `src,dst` edge per line, endpoints given as 0-based
//! indices or node names. An optional third column holds a weight. Lines
//! starting with `#` are comments, except `# nodes=<d>` which fixes the
//! number of nodes. A leading `src,dst` (or `src,dst,weight`) header is
//! skipped.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let d = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != d {
            return Err(parse_err(
                path,
                line,
                format!("expected {d} fields, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("column {}: not a number: {cell:?}", col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    format!("column {}: non-finite value", col + 1),
                ));
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let x = DMatrix::from_row_slice(n, d, &values);
    Dataset::with_names(x, names)
}

fn shortest(v: f64) -> String {
    // `{}` prints the shortest representation that round-trips exactly
    format!("{v}")
}

pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_matrix_csv(path, data.names(), data.x())
}

/// Writes a matrix with a header row.
pub fn write_matrix_csv(path: impl AsRef<Path>, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| shortest(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Parsed edge list, possibly cyclic.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEdges {
    pub d: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedEdges {
    pub fn adjacency(&self) -> Result<Adjacency> {
        Adjacency::from_edges(self.d, self.edges.iter().map(|&(i, j, _)| (i, j)))
    }

    pub fn weights(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.d, self.d);
        for &(i, j, v) in &self.edges {
            w[(i, j)] = v;
        }
        w
    }
}

/// Reads an edge list without checking acyclicity. Missing weights read as
/// 1. `names`, when given, resolves named endpoints and fixes `d`.
pub fn load_weighted_edgelist(
    path: impl AsRef<Path>,
    names: Option<&[String]>,
) -> Result<WeightedEdges> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut declared: Option<usize> = names.map(|n| n.len());
    let mut raw: Vec<(usize, String, String, f64)> = Vec::new();
    let mut seen_data = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("nodes=") {
                let d: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad node count {v:?}")))?;
                if let Some(prev) = declared {
                    if prev != d {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("declares {d} nodes but {prev} are expected"),
                        ));
                    }
                }
                declared = Some(d);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_data && fields.len() >= 2 && fields[0] == "src" && fields[1] == "dst" {
            seen_data = true;
            continue;
        }
        seen_data = true;
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected src,dst[,weight], found {} fields", fields.len()),
            ));
        }
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, lineno, format!("bad weight {s:?}")))?,
            None => 1.0,
        };
        raw.push((lineno, fields[0].to_string(), fields[1].to_string(), w));
    }
    let resolve = |lineno: usize, token: &str| -> Result<usize> {
        if let Some(names) = names {
            if let Some(p) = names.iter().position(|n| n == token) {
                return Ok(p);
            }
        }
        token
            .parse::<usize>()
            .map_err(|_| parse_err(path, lineno, format!("unknown node {token:?}")))
    };
    let mut edges = Vec::with_capacity(raw.len());
    for (lineno, s, t, w) in &raw {
        let (i, j) = (resolve(*lineno, s)?, resolve(*lineno, t)?);
        if i == j {
            return Err(parse_err(path, *lineno, format!("self loop on node {i}")));
        }
        edges.push((*lineno, i, j, *w));
    }
    let max_index = edges
        .iter()
        .map(|&(_, i, j, _)| i.max(j) + 1)
        .max()
        .unwrap_or(0);
    let d = declared.unwrap_or(max_index);
    if let Some(&(lineno, i, j, _)) = edges.iter().find(|&&(_, i, j, _)| i >= d || j >= d) {
        return Err(parse_err(
            path,
            lineno,
            format!("edge ({i}, {j}) out of range for {d} nodes"),
        ));
    }
    Ok(WeightedEdges {
        d,
        edges: edges.into_iter().map(|(_, i, j, w)| (i, j, w)).collect(),
    })
}

/// Reads an edge list and rejects cyclic graphs.
pub fn load_edgelist(path: impl AsRef<Path>, names: Option<&[String]>) -> Result<Adjacency> {
    let path = path.as_ref();
    let adj = load_weighted_edgelist(path, names)?.adjacency()?;
    if !adj.is_acyclic() {
        return Err(parse_err(path, 0, "edge list contains a directed cycle"));
    }
    Ok(adj)
}

pub fn write_edgelist(path: impl AsRef<Path>, graph: &Adjacency) -> Result<()> {
    write_lines(
        path.as_ref(),
        graph.dim(),
        "src,dst",
        graph.edges().into_iter().map(|(i, j)| format!("{i},{j}")),
    )
}

/// Writes the edges of `graph` with their weights.
pub fn write_weighted_edgelist(
    path: impl AsRef<Path>,
    graph: &Adjacency,
    weights: &DMatrix<f64>,
) -> Result<()> {
    let lines = graph
        .edges()
        .into_iter()
        .map(|(i, j)| format!("{i},{j},{}", shortest(weights[(i, j)])));
    write_lines(path.as_ref(), graph.dim(), "src,dst,weight", lines)
}

fn write_lines(
    path: &Path,
    d: usize,
    header: &str,
    lines: impl Iterator<Item = String>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut body = format!("# nodes={d}\n{header}\n");
    for l in lines {
        body.push_str(&l);
        body.push('\n');
    }
    out.write_all(body.as_bytes()).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}
