//! Line-based oriented-box text format:
//! `x1 y1 x2 y2 x3 y3 x4 y4 class [score]`, one object per line. Blank lines
//! and lines starting with `#` are skipped.

use super::polygon::{OrientedBox, Point};
use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct ObbRecord {
    pub bbox: OrientedBox,
    pub class: usize,
    /// Present for predictions, absent for ground truth.
    pub score: Option<f64>,
}

fn bad(detail: String) -> Error {
    Error::Format { what: "OBB line", detail }
}

pub fn parse_obb_line(line: &str) -> Result<ObbRecord> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 9 && tok.len() != 10 {
        return Err(bad(format!("expected 9 or 10 fields, got {}", tok.len())));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
    let mut c = [0.0; 8];
    for (v, s) in c.iter_mut().zip(&tok) {
        *v = num(s)?;
    }
    let class = tok[8].parse::<usize>().map_err(|e| bad(format!("class `{}`: {e}", tok[8])))?;
    let score = tok.get(9).map(|s| num(s)).transpose()?;
    Ok(ObbRecord {
        bbox: OrientedBox {
            corners: std::array::from_fn(|i| Point::new(c[2 * i], c[2 * i + 1])),
        },
        class,
        score,
    })
}

pub fn parse_obb(text: &str) -> Result<Vec<ObbRecord>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_obb_line)
        .collect()
}

pub fn format_obb_line(r: &ObbRecord) -> String {
    let mut s = String::new();
    for p in &r.bbox.corners {
        let _ = write!(s, "{} {} ", p.x, p.y);
    }
    let _ = write!(s, "{}", r.class);
    if let Some(score) = r.score {
        let _ = write!(s, " {score}");
    }
    s
}

pub fn format_obb(records: &[ObbRecord]) -> String {
    records.iter().map(|r| format_obb_line(r) + "\n").collect()
}
