//! SVC-2004 text format: a point count line followed by one
//! whitespace-separated record per point (x y [t [button [...]]]).

use std::fmt::Write as _;

use super::{parse_f64, parse_time, warn_time_order, OnlineSignature, PenPoint};
use crate::{Error, Result};

/// Parses one SVC signature file. Columns past the fourth (azimuth, altitude,
/// pressure) are ignored.
pub fn parse_svc_file(text: &str) -> Result<OnlineSignature> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (count_line, header) = lines.next().ok_or_else(|| Error::parse(1, "missing point count"))?;
    let declared: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::parse(count_line + 1, format!("malformed point count {:?}", header.trim())))?;
    if declared == 0 {
        return Err(Error::parse(count_line + 1, "signature declares zero points"));
    }

    let mut points = Vec::with_capacity(declared);
    for (idx, line) in lines.take(declared) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::parse(lineno, "expected at least 2 fields"));
        }
        let mut p = PenPoint::new(parse_f64(fields[0], lineno)?, parse_f64(fields[1], lineno)?);
        if let Some(t) = fields.get(2) {
            p.t = Some(parse_time(t, lineno)?);
        }
        if let Some(b) = fields.get(3) {
            p.pen_down = parse_f64(b, lineno)? != 0.0;
        }
        points.push(p);
    }
    if points.len() != declared {
        return Err(Error::parse(
            text.lines().count(),
            format!("expected {declared} points, found {}", points.len()),
        ));
    }
    warn_time_order(&points);
    Ok(OnlineSignature::from_points(points))
}

/// Writes the SVC layout. Timestamps default to the point index when absent.
pub fn write_svc_file(sig: &OnlineSignature) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", sig.points.len());
    for (i, p) in sig.points.iter().enumerate() {
        let t = p.t.unwrap_or(i as i64);
        let _ = writeln!(out, "{} {} {} {}", p.x, p.y, t, u8::from(p.pen_down));
    }
    out
}
