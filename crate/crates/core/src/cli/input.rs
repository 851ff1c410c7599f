use std::io::Read;
use std::path::Path;

use crate::estimators::Dataset;

use super::{CliError, CliResult};

/// Reads a CSV with columns `x`, `y`, `z` (any order, extra columns
/// ignored); `z` must be 0 or 1. Errors cite 1-based file line numbers.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_dataset(file).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_dataset<R: Read>(reader: R) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Input(format!("line 1: {e}")))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Input(format!("line 1: header lacks column `{name}`")))
    };
    let (cx, cy, cz) = (column("x")?, column("y")?, column("z")?);

    let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> CliResult<f64> {
            let raw = record.get(i).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Input(format!("line {line}: {name} = `{raw}` is not a finite number"))),
            }
        };
        x.push(field(cx, "x")?);
        y.push(field(cy, "y")?);
        z.push(match record.get(cz).unwrap_or("") {
            "0" => false,
            "1" => true,
            other => return Err(CliError::Input(format!("line {line}: z = `{other}` must be 0 or 1"))),
        });
    }
    if x.is_empty() {
        return Err(CliError::Input("no data rows".into()));
    }
    Ok(Dataset::new(x, y, z)?)
}
