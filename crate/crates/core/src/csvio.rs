//! CSV serialization of solution fields.
//!
//! Hamilton-Jacobi fields use the header `x,t,q,S,p,status`, `pq` fields
//! `x,y,q,u,status` (for the `y`-scaled kind the `q` column holds the root
//! `p`). Rows are row-major: the second axis is outer. Numeric columns of
//! points without a value are empty. Floats carry 17 significant digits.

use std::io::{Read, Write};

use thiserror::Error;

use crate::field::{self, ActionField, ActionPoint, FieldPoint, PointStatus, SolutionField};

pub const HJ_HEADER: [&str; 6] = ["x", "t", "q", "S", "p", "status"];
pub const PQ_HEADER: [&str; 5] = ["x", "y", "q", "u", "status"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{0}")]
    Shape(String),
}

/// A field read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedField {
    Hj(ActionField),
    Pq(SolutionField),
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_action_field<W: Write>(out: W, field: &ActionField) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HJ_HEADER)?;
    let nx = field.x.len();
    for (k, p) in field.points.iter().enumerate() {
        let (x, t) = (field.x[k % nx], field.t[k / nx]);
        w.write_record([
            format_float(x),
            format_float(t),
            opt(p.q),
            opt(p.action),
            opt(p.momentum),
            p.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_solution_field<W: Write>(out: W, field: &SolutionField) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PQ_HEADER)?;
    let nx = field.axis1.len();
    for (k, p) in field.points.iter().enumerate() {
        let (x, y) = (field.axis1[k % nx], field.axis2[k / nx]);
        w.write_record([
            format_float(x),
            format_float(y),
            opt(p.q),
            opt(p.value),
            p.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_num(row: usize, name: &str, s: &str) -> Result<Option<f64>, CsvError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| CsvError::Row {
        row,
        message: format!("column {name}: `{s}` is not a number"),
    })
}

fn require(row: usize, name: &str, v: Option<f64>) -> Result<f64, CsvError> {
    v.ok_or_else(|| CsvError::Row {
        row,
        message: format!("column {name} is empty"),
    })
}

/// Recovers the two axes from row-major coordinates.
fn axes(coords: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>), CsvError> {
    let Some(&(_, first_y)) = coords.first() else {
        return Err(CsvError::Shape("no data rows".into()));
    };
    let nx = coords.iter().take_while(|c| c.1 == first_y).count();
    if !coords.len().is_multiple_of(nx) {
        return Err(CsvError::Shape(format!(
            "{} rows do not form complete rows of {nx} points",
            coords.len()
        )));
    }
    let xs: Vec<f64> = coords[..nx].iter().map(|c| c.0).collect();
    let ys: Vec<f64> = coords.chunks(nx).map(|c| c[0].1).collect();
    field::check_axis("x", &xs).map_err(CsvError::Shape)?;
    field::check_axis("second", &ys).map_err(CsvError::Shape)?;
    for (k, &(x, y)) in coords.iter().enumerate() {
        if x != xs[k % nx] || y != ys[k / nx] {
            return Err(CsvError::Shape(format!(
                "row {} breaks the row-major grid layout",
                k + 2
            )));
        }
    }
    Ok((xs, ys))
}

fn check_values(row: usize, status: PointStatus, values: &[Option<f64>]) -> Result<(), CsvError> {
    let present = values.iter().all(Option::is_some);
    let absent = values.iter().all(Option::is_none);
    if status.has_value() && !present {
        return Err(CsvError::Row {
            row,
            message: format!("status {status} requires numeric values"),
        });
    }
    if !status.has_value() && !absent {
        return Err(CsvError::Row {
            row,
            message: format!("status {status} must leave numeric values empty"),
        });
    }
    Ok(())
}

pub fn read_field<R: Read>(input: R) -> Result<LoadedField, CsvError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let is_hj = header == HJ_HEADER;
    if !is_hj && header != PQ_HEADER {
        return Err(CsvError::Shape(format!(
            "unrecognized header {}",
            header.join(",")
        )));
    }
    let mut coords = Vec::new();
    let mut hj_points = Vec::new();
    let mut pq_points = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = k + 2;
        let col = |i: usize| rec.get(i).unwrap_or("");
        let x = require(row, "x", parse_num(row, "x", col(0))?)?;
        let y = require(row, header[1].as_str(), parse_num(row, &header[1], col(1))?)?;
        coords.push((x, y));
        let status_col = header.len() - 1;
        let status: PointStatus = col(status_col)
            .parse()
            .map_err(|message| CsvError::Row { row, message })?;
        let q = parse_num(row, "q", col(2))?;
        let value = parse_num(row, &header[3], col(3))?;
        if is_hj {
            let p = parse_num(row, "p", col(4))?;
            check_values(row, status, &[q, value, p])?;
            hj_points.push(ActionPoint {
                status,
                q,
                action: value,
                momentum: p,
            });
        } else {
            check_values(row, status, &[q, value])?;
            pq_points.push(FieldPoint { status, q, value });
        }
    }
    let (xs, ys) = axes(&coords)?;
    Ok(if is_hj {
        LoadedField::Hj(ActionField {
            x: xs,
            t: ys,
            points: hj_points,
        })
    } else {
        LoadedField::Pq(SolutionField {
            axis1: xs,
            axis2: ys,
            points: pq_points,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ActionField {
        let mut points = Vec::new();
        for j in 0..2 {
            for i in 0..3 {
                let resolved = !(i == 1 && j == 1);
                points.push(if resolved {
                    ActionPoint {
                        status: PointStatus::Resolved,
                        q: Some(0.1 * (i + j) as f64 + 1.0 / 3.0),
                        action: Some(-(i as f64) * 1e-300),
                        momentum: Some(1e10 / 7.0),
                    }
                } else {
                    ActionPoint {
                        status: PointStatus::NoRoot,
                        q: None,
                        action: None,
                        momentum: None,
                    }
                });
            }
        }
        ActionField {
            x: vec![0.5, 1.0, 1.5],
            t: vec![0.0, 0.1],
            points,
        }
    }

    #[test]
    fn action_field_round_trips() {
        let field = sample();
        let mut buf = Vec::new();
        write_action_field(&mut buf, &field).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,t,q,S,p,status\n"));
        assert!(text.contains(",,,no_root\n"));
        assert_eq!(read_field(buf.as_slice()).unwrap(), LoadedField::Hj(field));
    }

    #[test]
    fn truncated_csv_is_rejected() {
        let mut buf = Vec::new();
        write_action_field(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let dropped = lines[..lines.len() - 1].join("\n");
        assert!(matches!(
            read_field(dropped.as_bytes()),
            Err(CsvError::Shape(_))
        ));
        let cut = &text[..text.len() - 20];
        assert!(read_field(cut.as_bytes()).is_err());
        assert!(read_field("x,t,q,S,p,status\n".as_bytes()).is_err());
        assert!(read_field("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn status_and_values_must_agree() {
        let text = "x,y,q,u,status\n0,0,1,2,no_root\n";
        assert!(read_field(text.as_bytes()).is_err());
        let text = "x,y,q,u,status\n0,0,,,resolved\n";
        assert!(read_field(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn floats_survive_formatting(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
