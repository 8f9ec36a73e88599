//! CSV ingestion with column roles, and CSV output of simulated samples.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use twostep::estimators::{MatchingSample, SelectionSample};

use crate::{usage, CliError, Result};

/// Minimum usable rows after dropping incomplete ones.
pub const MIN_ROWS: usize = 20;

/// Column names per role. For matching, `z` (alias `treatment`) holds the
/// single treatment indicator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roles {
    pub y: Option<String>,
    pub z: Vec<String>,
    pub x: Vec<String>,
    pub d: Option<String>,
}

fn names(list: &str) -> Vec<String> {
    list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl Roles {
    /// Parses `role=<name[,name...]>` entries; later entries for a role replace earlier ones.
    pub fn parse(entries: &[String]) -> Result<Self> {
        let mut r = Roles::default();
        for e in entries {
            let Some((role, cols)) = e.split_once('=') else {
                return usage(format!("column role `{e}`: expected role=<name>"));
            };
            let cols = names(cols);
            if cols.is_empty() {
                return usage(format!("column role `{e}` names no column"));
            }
            let one = |cols: Vec<String>| -> Result<String> {
                match cols.as_slice() {
                    [c] => Ok(c.clone()),
                    _ => usage(format!("role `{}` takes exactly one column", role.trim())),
                }
            };
            match role.trim().to_ascii_lowercase().as_str() {
                "y" => r.y = Some(one(cols)?),
                "d" => r.d = Some(one(cols)?),
                "z" | "treatment" => r.z = cols,
                "x" => r.x = cols,
                other => return usage(format!("unknown column role `{other}`; expected y, z, x, d or treatment")),
            }
        }
        Ok(r)
    }

    /// Verifies the roles a command needs.
    pub fn check(&self, matching: bool) -> Result<()> {
        if self.y.is_none() {
            return usage("missing column role y");
        }
        if self.z.is_empty() {
            return usage(if matching { "missing column role z (treatment)" } else { "missing column role z" });
        }
        if self.x.is_empty() {
            return usage("missing column role x");
        }
        if matching {
            if self.z.len() != 1 {
                return usage("matching takes exactly one treatment column");
            }
            if self.d.is_some() {
                return usage("matching does not use a d column");
            }
        } else if self.d.is_none() {
            return usage("missing column role d");
        }
        Ok(())
    }

    pub fn to_entries(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(y) = &self.y {
            out.push(format!("y={y}"));
        }
        if !self.z.is_empty() {
            out.push(format!("z={}", self.z.join(",")));
        }
        if !self.x.is_empty() {
            out.push(format!("x={}", self.x.join(",")));
        }
        if let Some(d) = &self.d {
            out.push(format!("d={d}"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Selection(SelectionSample),
    Matching(MatchingSample),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSample {
    pub sample: Sample,
    /// Rows dropped for missing values in mapped columns.
    pub dropped: usize,
    pub warnings: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | ".")
}

fn binary(cell: &str, line: usize, col: &str) -> Result<bool> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(false),
        Ok(v) if v == 1.0 => Ok(true),
        _ => Err(CliError::Data(format!(
            "row {line}, column `{col}`: expected 0 or 1, got `{}`",
            cell.trim()
        ))),
    }
}

/// Reads a CSV with a header row and builds a selection sample (when the
/// `d` role is mapped) or a matching sample. Rows with a missing value in a
/// mapped column are dropped and reported; row numbers in errors are file
/// line numbers.
pub fn load_csv(path: &Path, roles: &Roles) -> Result<LoadedSample> {
    let matching = roles.d.is_none();
    roles.check(matching)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let index = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("column `{name}` not found in header {header:?}")))
    };
    let y_col = roles.y.as_deref().unwrap();
    let y_idx = index(y_col)?;
    let z_idx: Vec<usize> = roles.z.iter().map(|c| index(c)).collect::<Result<_>>()?;
    let x_idx: Vec<usize> = roles.x.iter().map(|c| index(c)).collect::<Result<_>>()?;
    let d_idx = roles.d.as_deref().map(index).transpose()?;

    let mut mapped: Vec<(usize, &str)> = vec![(y_idx, y_col)];
    mapped.extend(z_idx.iter().copied().zip(roles.z.iter().map(|s| s.as_str())));
    mapped.extend(x_idx.iter().copied().zip(roles.x.iter().map(|s| s.as_str())));
    if let (Some(i), Some(name)) = (d_idx, roles.d.as_deref()) {
        mapped.push((i, name));
    }

    let mut y = Vec::new();
    let mut z_rows: Vec<f64> = Vec::new();
    let mut x_rows: Vec<f64> = Vec::new();
    let mut d = Vec::new();
    let mut treat = Vec::new();
    let mut dropped = 0;
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| CliError::Data(format!("row {line}: {e}")))?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        if mapped.iter().any(|&(i, _)| is_missing(cell(i))) {
            dropped += 1;
            continue;
        }
        let number = |i: usize, name: &str| -> Result<f64> {
            let raw = cell(i).trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!("row {line}, column `{name}`: not a number: `{raw}`"))),
            }
        };
        let dv = match (d_idx, roles.d.as_deref()) {
            (Some(i), Some(name)) => Some(binary(cell(i), line, name)?),
            _ => None,
        };
        if matching {
            treat.push(binary(cell(z_idx[0]), line, &roles.z[0])?);
        } else {
            for (&i, name) in z_idx.iter().zip(&roles.z) {
                z_rows.push(number(i, name)?);
            }
        }
        for (&i, name) in x_idx.iter().zip(&roles.x) {
            x_rows.push(number(i, name)?);
        }
        y.push(number(y_idx, y_col)?);
        if let Some(v) = dv {
            d.push(v);
        }
    }
    let n = y.len();
    if n < MIN_ROWS {
        return Err(CliError::Data(format!(
            "{} usable rows after dropping {dropped} incomplete ones; at least {MIN_ROWS} required",
            n
        )));
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} row(s) with missing values in mapped columns; {n} remain"));
    }
    let x = DMatrix::from_row_slice(n, x_idx.len(), &x_rows);
    let sample = if matching {
        Sample::Matching(MatchingSample::new(y, treat, x)?)
    } else {
        let z = DMatrix::from_row_slice(n, z_idx.len(), &z_rows);
        Sample::Selection(SelectionSample::new(y, z, x, d)?)
    };
    Ok(LoadedSample {
        sample,
        dropped,
        warnings,
    })
}

/// Column names used by [`write_selection_csv`].
pub fn selection_roles(dz: usize, dx: usize) -> Roles {
    Roles {
        y: Some("y".into()),
        z: (1..=dz).map(|j| format!("z{j}")).collect(),
        x: (1..=dx).map(|j| format!("x{j}")).collect(),
        d: Some("d".into()),
    }
}

/// Writes `y, z1.., x1.., d` with shortest round-trip float formatting.
pub fn write_selection_csv(s: &SelectionSample, out: &mut impl Write) -> Result<()> {
    let roles = selection_roles(s.z.ncols(), s.x.ncols());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend(roles.z.iter().cloned());
    header.extend(roles.x.iter().cloned());
    header.push("d".into());
    w.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
    for i in 0..s.len() {
        let mut row = vec![s.y[i].to_string()];
        row.extend(s.z.row(i).iter().map(|v| v.to_string()));
        row.extend(s.x.row(i).iter().map(|v| v.to_string()));
        row.push(if s.d[i] { "1".into() } else { "0".into() });
        w.write_record(&row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn rows(n: usize, f: impl Fn(usize) -> String) -> String {
        let mut s = String::from("wage,educ,exper,score,work\n");
        for i in 0..n {
            s.push_str(&f(i));
            s.push('\n');
        }
        s
    }

    fn roles() -> Roles {
        Roles::parse(&["y=wage".into(), "z=educ,exper".into(), "x=score".into(), "d=work".into()]).unwrap()
    }

    #[test]
    fn missing_rows_are_dropped_with_a_warning() {
        let text = rows(25, |i| {
            if i == 4 {
                format!(",{i},{},{i}.5,1", i * 2)
            } else {
                format!("{}.0,{i},{},{}.5,{}", i, (i * 7) % 5, i, i % 2)
            }
        });
        let f = write(&text);
        let loaded = load_csv(f.path(), &roles()).unwrap();
        assert_eq!(loaded.dropped, 1);
        assert_eq!(loaded.warnings.len(), 1);
        match loaded.sample {
            Sample::Selection(s) => assert_eq!(s.len(), 24),
            _ => panic!("expected a selection sample"),
        }
    }

    #[test]
    fn bad_binary_names_row_and_column() {
        let text = rows(25, |i| format!("{i},{i},{},{i},{}", i % 3, if i == 6 { 2 } else { i % 2 }));
        let f = write(&text);
        let msg = load_csv(f.path(), &roles()).unwrap_err().to_string();
        assert!(msg.contains("row 8") && msg.contains("`work`"), "{msg}");
    }

    #[test]
    fn non_numeric_and_short_files_are_rejected() {
        let text = rows(25, |i| format!("{},{i},{},{i},{}", if i == 0 { "abc".into() } else { i.to_string() }, i % 3, i % 2));
        let msg = load_csv(write(&text).path(), &roles()).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("`wage`"), "{msg}");
        let short = rows(10, |i| format!("{i},{i},{},{i},{}", i % 3, i % 2));
        assert!(load_csv(write(&short).path(), &roles()).is_err());
        let unknown = Roles::parse(&["y=pay".into(), "z=educ".into(), "x=score".into(), "d=work".into()]).unwrap();
        assert!(load_csv(write(&short).path(), &unknown).unwrap_err().to_string().contains("pay"));
    }

    #[test]
    fn matching_roles_build_a_matching_sample() {
        let text = rows(30, |i| format!("{i},{},{},{}.25,0", i % 2, i % 4, i));
        let r = Roles::parse(&["y=wage".into(), "treatment=educ".into(), "x=exper,score".into()]).unwrap();
        match load_csv(write(&text).path(), &r).unwrap().sample {
            Sample::Matching(m) => {
                assert_eq!(m.z.iter().filter(|&&t| t).count(), 15);
                assert_eq!(m.x.ncols(), 2);
            }
            _ => panic!("expected a matching sample"),
        }
    }
}
