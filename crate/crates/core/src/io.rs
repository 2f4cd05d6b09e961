//! File formats: event lists with a metadata sidecar, correlation grids in
//! text or packed binary form, and comma-separated tables.
//!
//! Floats are written in the shortest form that parses back to the identical
//! value, so every round trip is exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{CorrelationGrid, EventSet};

pub const EVENTS_HEADER: &str = "#fringecorr-events v1";
pub const GRID_HEADER: &str = "#fringecorr-grid v1";
pub const GRID_MAGIC: &[u8; 4] = b"FCG1";

/// Grid encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Text,
    Binary,
}

impl GridFormat {
    /// Binary for `.fcg`/`.bin` extensions, text otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("fcg") | Some("bin") => GridFormat::Binary,
            _ => GridFormat::Text,
        }
    }
}

/// Path of the metadata sidecar belonging to an event file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, reason: reason.into() }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| parse_err(path, line, format!("`{s}` is not a number")))
}

/// Writes events as `t_s,y_mm` lines plus a `key = value` sidecar.
pub fn write_events(path: &Path, events: &EventSet) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{EVENTS_HEADER}").map_err(io)?;
    writeln!(w, "#acquisition_time_s={}", events.acquisition_time()).map_err(io)?;
    writeln!(w, "#acquisition_length_mm={}", events.acquisition_length()).map_err(io)?;
    writeln!(w, "t_s,y_mm").map_err(io)?;
    for (t, y) in events.times().iter().zip(events.positions()) {
        writeln!(w, "{t},{y}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_metadata(&sidecar_path(path), &events.metadata)
}

pub fn write_metadata(path: &Path, metadata: &BTreeMap<String, String>) -> Result<()> {
    let mut w = create(path)?;
    for (k, v) in metadata {
        writeln!(w, "{k} = {v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(path, i + 1, "expected `key = value`"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Reads an event file; the sidecar is optional.
pub fn read_events(path: &Path) -> Result<EventSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = BTreeMap::new();
    let (mut t, mut y) = (Vec::new(), Vec::new());
    let mut seen_header = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let n = i + 1;
        if i == 0 {
            if line.trim() != EVENTS_HEADER {
                return Err(parse_err(path, n, format!("expected `{EVENTS_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                header.insert(k.trim().to_string(), (n, v.trim().to_string()));
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with("t_s") {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| parse_err(path, n, "expected `t,y`"))?;
        t.push(parse_f64(path, n, a)?);
        y.push(parse_f64(path, n, b)?);
    }
    if !seen_header {
        return Err(parse_err(path, 1, "empty event file"));
    }
    if t.is_empty() {
        return Err(Error::invalid(format!("{} contains no events", path.display())));
    }
    let get = |key: &str| -> Result<f64> {
        let (n, v) = header.get(key).ok_or_else(|| parse_err(path, 1, format!("missing `#{key}=` header")))?;
        parse_f64(path, *n, v)
    };
    let mut events = EventSet::from_columns(t, y, get("acquisition_time_s")?, get("acquisition_length_mm")?)?;
    let meta = sidecar_path(path);
    if meta.exists() {
        events.metadata = read_metadata(&meta)?;
    }
    Ok(events)
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn grid_fields(grid: &CorrelationGrid) -> Vec<(&'static str, String)> {
    vec![
        ("n_u", grid.n_u.to_string()),
        ("n_tau", grid.n_tau.to_string()),
        ("du_mm", grid.du.to_string()),
        ("dtau_s", grid.dtau.to_string()),
        ("tau_max_s", grid.tau_max.to_string()),
        ("u_max_mm", grid.u_max.to_string()),
        ("n_events", grid.n_events.to_string()),
        ("acquisition_time_s", grid.acquisition_time.to_string()),
        ("acquisition_length_mm", grid.acquisition_length.to_string()),
    ]
}

/// Writes a grid in the format implied by the file extension.
pub fn write_grid(path: &Path, grid: &CorrelationGrid) -> Result<()> {
    match GridFormat::from_path(path) {
        GridFormat::Text => write_grid_text(path, grid),
        GridFormat::Binary => write_grid_binary(path, grid),
    }
}

/// Text grid: header fields, then row-major sections; invalid bins are
/// written as `nan`.
pub fn write_grid_text(path: &Path, grid: &CorrelationGrid) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{GRID_HEADER}").map_err(io)?;
    for (k, v) in grid_fields(grid) {
        writeln!(w, "{k}={v}").map_err(io)?;
    }
    writeln!(w, "invalid=nan").map_err(io)?;
    writeln!(w, "#counts").map_err(io)?;
    for iu in 0..grid.n_u {
        let start = grid.index(iu, 0);
        writeln!(w, "{}", join(grid.counts[start..start + grid.n_tau].iter())).map_err(io)?;
    }
    writeln!(w, "#values").map_err(io)?;
    for iu in 0..grid.n_u {
        let row = (0..grid.n_tau).map(|it| if grid.is_valid(iu, it) { grid.value(iu, it) } else { f64::NAN });
        writeln!(w, "{}", join(row)).map_err(io)?;
    }
    if let Some(z) = &grid.zero_counts {
        writeln!(w, "#zero_counts").map_err(io)?;
        writeln!(w, "{}", join(z.iter())).map_err(io)?;
    }
    if let Some(z) = &grid.zero_values {
        writeln!(w, "#zero_values").map_err(io)?;
        writeln!(w, "{}", join(z.iter())).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn le_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn le_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Packed little-endian grid: magic `FCG1`, three u64 sizes, six f64
/// geometry fields, a flag byte for the zero row, then counts (u64) and
/// values (f64, NaN when invalid).
pub fn write_grid_binary(path: &Path, grid: &CorrelationGrid) -> Result<()> {
    let mut w = create(path)?;
    let body = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        w.write_all(GRID_MAGIC)?;
        for v in [grid.n_u as u64, grid.n_tau as u64, grid.n_events] {
            le_u64(w, v)?;
        }
        for v in [grid.du, grid.dtau, grid.tau_max, grid.u_max, grid.acquisition_time, grid.acquisition_length] {
            le_f64(w, v)?;
        }
        let flags = u8::from(grid.zero_counts.is_some()) | (u8::from(grid.zero_values.is_some()) << 1);
        w.write_all(&[flags])?;
        for &c in &grid.counts {
            le_u64(w, c)?;
        }
        for (v, ok) in grid.values.iter().zip(&grid.valid) {
            le_f64(w, if *ok { *v } else { f64::NAN })?;
        }
        if let Some(z) = &grid.zero_counts {
            for &c in z {
                le_u64(w, c)?;
            }
        }
        if let Some(z) = &grid.zero_values {
            for &v in z {
                le_f64(w, v)?;
            }
        }
        w.flush()
    };
    body(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads a grid, detecting the encoding from its first bytes.
pub fn read_grid(path: &Path) -> Result<CorrelationGrid> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(GRID_MAGIC) {
        read_grid_binary(path, &bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 1, "grid file is neither text nor FCG1"))?;
        read_grid_text(path, &text)
    }
}

fn check_geometry(path: &Path, grid: &CorrelationGrid) -> Result<()> {
    let ok = grid.n_u > 0
        && grid.n_tau > 0
        && grid.du > 0.0
        && grid.dtau > 0.0
        && grid.acquisition_time > 0.0
        && grid.acquisition_length > 0.0;
    if ok {
        Ok(())
    } else {
        Err(parse_err(path, 1, "grid geometry must be positive"))
    }
}

fn read_grid_text(path: &Path, text: &str) -> Result<CorrelationGrid> {
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l.trim() == GRID_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected `{GRID_HEADER}`"))),
    }
    let mut fields = BTreeMap::new();
    while let Some((i, l)) = lines.peek() {
        if l.starts_with('#') {
            break;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| parse_err(path, i + 1, "expected `key=value`"))?;
        fields.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        lines.next();
    }
    let field = |k: &str| -> Result<&(usize, String)> {
        fields.get(k).ok_or_else(|| parse_err(path, 1, format!("missing header field `{k}`")))
    };
    let int = |k: &str| -> Result<u64> {
        let (n, v) = field(k)?;
        v.parse().map_err(|_| parse_err(path, *n, format!("`{k}` is not an integer")))
    };
    let float = |k: &str| -> Result<f64> {
        let (n, v) = field(k)?;
        parse_f64(path, *n, v)
    };
    let (n_u, n_tau) = (int("n_u")? as usize, int("n_tau")? as usize);
    let mut grid = CorrelationGrid::empty(
        n_u,
        n_tau,
        float("du_mm")?,
        float("dtau_s")?,
        int("n_events")?,
        float("acquisition_time_s")?,
        float("acquisition_length_mm")?,
    );
    grid.tau_max = float("tau_max_s")?;
    grid.u_max = float("u_max_mm")?;
    check_geometry(path, &grid)?;
    let mut section = String::new();
    let mut rows: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for (i, l) in lines {
        if let Some(name) = l.strip_prefix('#') {
            section = name.trim().to_string();
            continue;
        }
        if l.trim().is_empty() {
            continue;
        }
        rows.entry(section.clone()).or_default().push((i + 1, l.to_string()));
    }
    let take = |name: &str, expect_rows: usize| -> Result<Option<Vec<(usize, String)>>> {
        match rows.get(name) {
            None => Ok(None),
            Some(r) if r.len() == expect_rows => Ok(Some(r.clone())),
            Some(r) => {
                Err(parse_err(path, r[0].0, format!("section `{name}` has {} rows, expected {expect_rows}", r.len())))
            }
        }
    };
    let split = |n: usize, line: &str, width: usize| -> Result<Vec<String>> {
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cells.len() != width {
            return Err(parse_err(path, n, format!("expected {width} columns, found {}", cells.len())));
        }
        Ok(cells)
    };
    let counts = take("counts", n_u)?.ok_or_else(|| parse_err(path, 1, "missing `#counts` section"))?;
    for (iu, (n, line)) in counts.iter().enumerate() {
        for (it, c) in split(*n, line, n_tau)?.iter().enumerate() {
            let idx = grid.index(iu, it);
            grid.counts[idx] = c.parse().map_err(|_| parse_err(path, *n, format!("`{c}` is not a count")))?;
        }
    }
    let values = take("values", n_u)?.ok_or_else(|| parse_err(path, 1, "missing `#values` section"))?;
    for (iu, (n, line)) in values.iter().enumerate() {
        for (it, c) in split(*n, line, n_tau)?.iter().enumerate() {
            let v = parse_f64(path, *n, c)?;
            let idx = grid.index(iu, it);
            grid.valid[idx] = !v.is_nan();
            grid.values[idx] = if v.is_nan() { 0.0 } else { v };
        }
    }
    if let Some(r) = take("zero_counts", 1)? {
        let (n, line) = &r[0];
        grid.zero_counts = Some(
            split(*n, line, n_u)?
                .iter()
                .map(|c| c.parse().map_err(|_| parse_err(path, *n, format!("`{c}` is not a count"))))
                .collect::<Result<_>>()?,
        );
    }
    if let Some(r) = take("zero_values", 1)? {
        let (n, line) = &r[0];
        grid.zero_values = Some(split(*n, line, n_u)?.iter().map(|c| parse_f64(path, *n, c)).collect::<Result<_>>()?);
    }
    Ok(grid)
}

fn read_grid_binary(path: &Path, bytes: &[u8]) -> Result<CorrelationGrid> {
    let mut pos = GRID_MAGIC.len();
    let truncated = || parse_err(path, 0, "binary grid is truncated");
    let next8 = |pos: &mut usize| -> Result<[u8; 8]> {
        let s = bytes.get(*pos..*pos + 8).ok_or_else(truncated)?;
        *pos += 8;
        Ok(s.try_into().expect("eight bytes"))
    };
    let n_u = u64::from_le_bytes(next8(&mut pos)?) as usize;
    let n_tau = u64::from_le_bytes(next8(&mut pos)?) as usize;
    let n_events = u64::from_le_bytes(next8(&mut pos)?);
    let mut geo = [0.0; 6];
    for g in geo.iter_mut() {
        *g = f64::from_le_bytes(next8(&mut pos)?);
    }
    let flags = *bytes.get(pos).ok_or_else(truncated)?;
    pos += 1;
    let cells = n_u.checked_mul(n_tau).ok_or_else(|| parse_err(path, 0, "grid dimensions overflow"))?;
    let zero_len = n_u * (usize::from(flags & 1 != 0) + usize::from(flags & 2 != 0));
    if bytes.len() != pos + 16 * cells + 8 * zero_len {
        return Err(parse_err(path, 0, "binary grid length does not match its header"));
    }
    let mut grid = CorrelationGrid::empty(n_u, n_tau, geo[0], geo[1], n_events, geo[4], geo[5]);
    grid.tau_max = geo[2];
    grid.u_max = geo[3];
    check_geometry(path, &grid)?;
    for c in grid.counts.iter_mut() {
        *c = u64::from_le_bytes(next8(&mut pos)?);
    }
    for i in 0..cells {
        let v = f64::from_le_bytes(next8(&mut pos)?);
        grid.valid[i] = !v.is_nan();
        grid.values[i] = if v.is_nan() { 0.0 } else { v };
    }
    if flags & 1 != 0 {
        grid.zero_counts = Some((0..n_u).map(|_| next8(&mut pos).map(u64::from_le_bytes)).collect::<Result<_>>()?);
    }
    if flags & 2 != 0 {
        grid.zero_values = Some((0..n_u).map(|_| next8(&mut pos).map(f64::from_le_bytes)).collect::<Result<_>>()?);
    }
    Ok(grid)
}

/// Comma-separated table with a unit-bearing header row.
pub fn write_table(path: &Path, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", headers.join(",")).map_err(io)?;
    for row in rows {
        if row.len() != headers.len() {
            return Err(Error::invalid("table row width differs from the header"));
        }
        writeln!(w, "{}", join(row.iter())).map_err(io)?;
    }
    w.flush().map_err(io)
}
