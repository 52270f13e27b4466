//! Sparse text dump of an [`SdpProblem`].
//!
//! ```text
//! blocks d_1 ... d_p m
//! free n_f
//! equalities j ...
//! j block row col value
//! ```
//!
//! Constraint index 0 is the objective and `j >= 1` is constraint `j - 1`.
//! Block 0 carries the affine part: `row = k >= 1` is free variable `k - 1`,
//! `row = 0` is the constant. Blocks `1..=p` list upper-triangle entries with
//! 0-based `row <= col`.

use std::fmt::Write as _;

use super::{SdpConstraint, SdpProblem, SdpRow, Sense};
use crate::error::{Error, Result};

fn write_row(out: &mut String, j: usize, row: &SdpRow) {
    if row.constant != 0.0 {
        let _ = writeln!(out, "{j} 0 0 0 {:.16e}", row.constant);
    }
    for &(k, v) in &row.free {
        if v != 0.0 {
            let _ = writeln!(out, "{j} 0 {} 0 {v:.16e}", k + 1);
        }
    }
    for (b, entries) in row.blocks.iter().enumerate() {
        for &(r, c, v) in entries {
            if v != 0.0 {
                let _ = writeln!(out, "{j} {} {r} {c} {v:.16e}", b + 1);
            }
        }
    }
}

pub fn write_dump(problem: &SdpProblem) -> String {
    let mut out = String::from("blocks");
    for d in &problem.block_dims {
        let _ = write!(out, " {d}");
    }
    let _ = writeln!(out, " {}", problem.constraints.len());
    let _ = writeln!(out, "free {}", problem.num_free);
    let eqs: Vec<String> = problem
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.sense == Sense::Eq)
        .map(|(j, _)| (j + 1).to_string())
        .collect();
    if !eqs.is_empty() {
        let _ = writeln!(out, "equalities {}", eqs.join(" "));
    }
    write_row(&mut out, 0, &problem.objective);
    for (j, c) in problem.constraints.iter().enumerate() {
        write_row(&mut out, j + 1, &c.row);
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse(format!("line {line}: bad number {tok:?}")))
}

pub fn parse_dump(text: &str) -> Result<SdpProblem> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty dump".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"blocks") || toks.len() < 2 {
        return Err(Error::Parse("line 1: expected `blocks d_1 ... d_p m`".into()));
    }
    let nums: Vec<usize> = toks[1..].iter().map(|t| parse_num(t, 1)).collect::<Result<_>>()?;
    let (m, dims) = nums.split_last().expect("nonempty");
    let dims = dims.to_vec();
    let empty_row = || SdpRow { blocks: vec![Vec::new(); dims.len()], free: Vec::new(), constant: 0.0 };
    let mut rows: Vec<SdpRow> = (0..=*m).map(|_| empty_row()).collect();
    let mut senses = vec![Sense::Le; *m];
    let mut num_free = 0;

    for (idx, line) in lines {
        let ln = idx + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "free" => {
                num_free = parse_num(toks.get(1).copied().unwrap_or(""), ln)?;
            }
            "equalities" => {
                for t in &toks[1..] {
                    let j: usize = parse_num(t, ln)?;
                    if j == 0 || j > *m {
                        return Err(Error::Parse(format!("line {ln}: equality index {j} out of range")));
                    }
                    senses[j - 1] = Sense::Eq;
                }
            }
            _ => {
                if toks.len() != 5 {
                    return Err(Error::Parse(format!("line {ln}: expected 5 fields")));
                }
                let j: usize = parse_num(toks[0], ln)?;
                let b: usize = parse_num(toks[1], ln)?;
                let r: usize = parse_num(toks[2], ln)?;
                let c: usize = parse_num(toks[3], ln)?;
                let v: f64 = parse_num(toks[4], ln)?;
                let row = rows.get_mut(j).ok_or_else(|| Error::Parse(format!("line {ln}: constraint {j} out of range")))?;
                if b == 0 {
                    if r == 0 {
                        row.constant += v;
                    } else {
                        num_free = num_free.max(r);
                        row.free.push((r - 1, v));
                    }
                } else {
                    let d = *dims.get(b - 1).ok_or(Error::InvalidBlock { index: b, blocks: dims.len() })?;
                    if r > c || c >= d {
                        return Err(Error::Parse(format!("line {ln}: entry ({r},{c}) invalid for block of size {d}")));
                    }
                    row.blocks[b - 1].push((r, c, v));
                }
            }
        }
    }
    let mut rows = rows.into_iter();
    let objective = rows.next().expect("objective row");
    Ok(SdpProblem {
        block_dims: dims,
        num_free,
        objective,
        constraints: rows.zip(senses).map(|(row, sense)| SdpConstraint { row, sense }).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let pb = SdpProblem {
            block_dims: vec![2, 1],
            num_free: 2,
            objective: SdpRow { blocks: vec![vec![(0, 1, 0.1)], vec![]], free: vec![(1, 1.0)], constant: 0.0 },
            constraints: vec![
                SdpConstraint {
                    row: SdpRow { blocks: vec![vec![(0, 0, 1.0 / 3.0)], vec![(0, 0, -2.0)]], free: vec![(0, -1.0)], constant: std::f64::consts::PI },
                    sense: Sense::Le,
                },
                SdpConstraint {
                    row: SdpRow { blocks: vec![vec![(1, 1, 1e-300)], vec![]], free: vec![], constant: -1.0 },
                    sense: Sense::Eq,
                },
            ],
        };
        let text = write_dump(&pb);
        assert!(text.starts_with("blocks 2 1 2\n"));
        assert_eq!(parse_dump(&text).unwrap(), pb);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_dump("").is_err());
        assert!(parse_dump("blocks 2 1\n1 1 1 0 1.0\n").is_err());
        assert!(parse_dump("blocks 2 1\n1 3 0 0 1.0\n").is_err());
        assert!(parse_dump("blocks 2 1\n1 1 0 x 1.0\n").is_err());
    }
}
