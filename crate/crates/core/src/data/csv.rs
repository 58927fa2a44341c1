//! Generic CSV layout: header `x,y[,t][,pen]`, one row per point.

use std::fmt::Write as _;

use super::{parse_f64, parse_time, warn_time_order, OnlineSignature, PenPoint};
use crate::{Error, Result};

pub fn parse_generic_csv(text: &str) -> Result<OnlineSignature> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let find = |name: &str| columns.iter().position(|c| c == name);
    let x_col = find("x").ok_or_else(|| Error::parse(1, "column x missing"))?;
    let y_col = find("y").ok_or_else(|| Error::parse(1, "column y missing"))?;
    let t_col = find("t");
    let pen_col = find("pen");

    let mut points = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::parse(
                lineno,
                format!("expected {} cells, found {}", columns.len(), cells.len()),
            ));
        }
        let mut p = PenPoint::new(parse_f64(cells[x_col], lineno)?, parse_f64(cells[y_col], lineno)?);
        if let Some(c) = t_col {
            if !cells[c].trim().is_empty() {
                p.t = Some(parse_time(cells[c], lineno)?);
            }
        }
        if let Some(c) = pen_col {
            if !cells[c].trim().is_empty() {
                p.pen_down = parse_f64(cells[c], lineno)? != 0.0;
            }
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::parse(1, "no points"));
    }
    warn_time_order(&points);
    Ok(OnlineSignature::from_points(points))
}

/// Serializes to the generic CSV layout. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_generic_csv(sig: &OnlineSignature) -> String {
    let with_t = sig.points.iter().any(|p| p.t.is_some());
    let mut out = String::from(if with_t { "x,y,t,pen\n" } else { "x,y,pen\n" });
    for p in &sig.points {
        let _ = write!(out, "{},{}", p.x, p.y);
        if with_t {
            match p.t {
                Some(t) => {
                    let _ = write!(out, ",{t}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(out, ",{}", u8::from(p.pen_down));
    }
    out
}
