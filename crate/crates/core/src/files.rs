//! Result and overlay files.
//!
//! CSV: `#`-prefixed header lines, the second of which is a single-line JSON
//! record `{"metadata": …, "axes": …}`; then a column-name row and one row per
//! value: axis coordinates (slowest axis first), value, ε, ε-halving change,
//! flag. JSON: one object with the same record plus the four value columns;
//! NaN becomes `null` and infinities the strings `"inf"`/`"-inf"`.
//!
//! Numbers are written in shortest round-trip form, so parsing a file
//! reproduces the grid exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::atlas::Overlay;
use crate::error::{Error, Result};
use crate::grid::{Axis, Flag, Metadata, ResultGrid};

const CSV_MAGIC: &str = "# mollow result v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultFormat {
    #[default]
    Csv,
    Json,
}

impl ResultFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ResultFormat::Csv => "csv",
            ResultFormat::Json => "json",
        }
    }

    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(ResultFormat::Csv),
            "json" => Some(ResultFormat::Json),
            _ => None,
        }
    }
}

impl FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "json" => Ok(ResultFormat::Json),
            other => Err(Error::Format(format!("unknown result format {other:?}"))),
        }
    }
}

/// `<stem>.<ext>` for a result file.
pub fn result_path(stem: &Path, format: ResultFormat) -> PathBuf {
    with_suffix(stem, format.extension())
}

/// `<stem>.overlay.json`.
pub fn overlay_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "overlay.json")
}

pub(crate) fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct Header {
    metadata: Metadata,
    axes: Vec<Axis>,
}

fn number(v: f64) -> String {
    format!("{v:?}")
}

fn parse_number(s: &str) -> Result<f64> {
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Format(format!("not a number: {s:?}"))),
    }
}

fn check_shape(grid: &ResultGrid) -> Result<()> {
    let n = grid.axes.iter().map(Axis::len).product::<usize>();
    if [grid.values.len(), grid.changes.len(), grid.epsilons.len(), grid.flags.len()].iter().any(|&l| l != n) {
        return Err(Error::Format(format!("grid columns do not match its {n} axis points")));
    }
    Ok(())
}

pub fn to_csv_string(grid: &ResultGrid) -> Result<String> {
    check_shape(grid)?;
    let header = serde_json::to_string(&Header { metadata: grid.metadata.clone(), axes: grid.axes.clone() })
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut out = format!("{CSV_MAGIC}\n# {header}\n");
    let names: Vec<&str> = grid.axes.iter().map(|a| a.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push_str(if names.is_empty() { "value,epsilon,change,flag\n" } else { ",value,epsilon,change,flag\n" });
    for i in 0..grid.len() {
        for c in grid.coordinates(i) {
            out.push_str(&number(c));
            out.push(',');
        }
        let _ = writeln!(
            out,
            "{},{},{},{}",
            number(grid.values[i]),
            number(grid.epsilons[i]),
            number(grid.changes[i]),
            grid.flags[i].name()
        );
    }
    Ok(out)
}

pub fn from_csv_str(text: &str) -> Result<ResultGrid> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_MAGIC) {
        return Err(Error::Format("missing result header".into()));
    }
    let header: Header = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| Error::Format("missing metadata line".into()))
        .and_then(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("metadata: {e}"))))?;
    let columns = header.axes.len() + 4;
    lines.next().ok_or_else(|| Error::Format("missing column names".into()))?;
    let n = header.axes.iter().map(Axis::len).product::<usize>();
    let (mut values, mut epsilons, mut changes, mut flags) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (row, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Format(format!("row {row} has {} columns, expected {columns}", fields.len())));
        }
        let k = header.axes.len();
        values.push(parse_number(fields[k])?);
        epsilons.push(parse_number(fields[k + 1])?);
        changes.push(parse_number(fields[k + 2])?);
        flags.push(Flag::from_name(fields[k + 3]).ok_or_else(|| Error::Format(format!("unknown flag {:?}", fields[k + 3])))?);
    }
    let grid = ResultGrid { axes: header.axes, values, changes, epsilons, flags, metadata: header.metadata };
    check_shape(&grid)?;
    Ok(grid)
}

fn json_number(v: f64) -> Value {
    if v.is_nan() {
        Value::Null
    } else if v.is_infinite() {
        Value::String(if v > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        json!(v)
    }
}

fn from_json_number(v: &Value) -> Result<f64> {
    match v {
        Value::Null => Ok(f64::NAN),
        Value::String(s) => parse_number(s),
        Value::Number(n) => n.as_f64().ok_or_else(|| Error::Format(format!("bad number {n}"))),
        other => Err(Error::Format(format!("expected a number, got {other}"))),
    }
}

pub fn to_json_string(grid: &ResultGrid) -> Result<String> {
    check_shape(grid)?;
    let column = |v: &[f64]| Value::Array(v.iter().map(|&x| json_number(x)).collect());
    let doc = json!({
        "metadata": grid.metadata,
        "axes": grid.axes,
        "values": column(&grid.values),
        "epsilons": column(&grid.epsilons),
        "changes": column(&grid.changes),
        "flags": grid.flags.iter().map(|f| f.name()).collect::<Vec<_>>(),
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str(text: &str) -> Result<ResultGrid> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let field = |k: &str| doc.get(k).ok_or_else(|| Error::Format(format!("missing field {k:?}")));
    let column = |k: &str| -> Result<Vec<f64>> {
        field(k)?
            .as_array()
            .ok_or_else(|| Error::Format(format!("{k:?} is not an array")))?
            .iter()
            .map(from_json_number)
            .collect()
    };
    fn parse<T: serde::de::DeserializeOwned>(doc: &Value, k: &str) -> Result<T> {
        let v = doc.get(k).ok_or_else(|| Error::Format(format!("missing field {k:?}")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("{k}: {e}")))
    }
    let flags: Vec<String> = parse(&doc, "flags")?;
    let grid = ResultGrid {
        axes: parse(&doc, "axes")?,
        values: column("values")?,
        changes: column("changes")?,
        epsilons: column("epsilons")?,
        flags: flags
            .iter()
            .map(|f| Flag::from_name(f).ok_or_else(|| Error::Format(format!("unknown flag {f:?}"))))
            .collect::<Result<_>>()?,
        metadata: parse(&doc, "metadata")?,
    };
    check_shape(&grid)?;
    Ok(grid)
}

pub fn render(grid: &ResultGrid, format: ResultFormat) -> Result<String> {
    match format {
        ResultFormat::Csv => to_csv_string(grid),
        ResultFormat::Json => to_json_string(grid),
    }
}

pub fn parse(text: &str, format: ResultFormat) -> Result<ResultGrid> {
    match format {
        ResultFormat::Csv => from_csv_str(text),
        ResultFormat::Json => from_json_str(text),
    }
}

pub fn write_result(path: &Path, grid: &ResultGrid, format: ResultFormat) -> Result<()> {
    let text = render(grid, format)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a result file; the format follows the extension, defaulting to CSV.
pub fn read_result(path: &Path) -> Result<ResultGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, ResultFormat::from_path(path).unwrap_or_default())
}

pub fn write_overlay(path: &Path, overlay: &Overlay) -> Result<()> {
    let mut text = serde_json::to_string_pretty(overlay).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_overlay(path: &Path) -> Result<Overlay> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
}
