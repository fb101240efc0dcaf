//! The `tpchain` text format for sparse target problems.
//!
//! ```text
//! tpchain 1 <n_states> <beta>
//! T: <state> <state> ...
//! <from> <to> <probability>
//! ...
//! ```
//!
//! The header carries the format version, the state count, and the
//! discount factor. The `T:` line lists the target states. Every further
//! line is one nonzero transition, with rows ascending and columns
//! ascending within a row. All numbers use 17 significant digits, which
//! round-trips every binary64 value exactly: rewriting a parsed file
//! reproduces it byte for byte.

use std::fmt::Write as _;

use tlump::TargetProblem;

use crate::error::{CliError, CliResult};

/// Renders a chain in `tpchain` text form.
pub fn write_chain(problem: &TargetProblem) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "tpchain 1 {} {:.16e}",
        problem.n_states(),
        problem.beta()
    )
    .unwrap();
    let targets: Vec<String> = problem.target().iter().map(|t| t.to_string()).collect();
    writeln!(out, "T: {}", targets.join(" ")).unwrap();
    for x in 0..problem.n_states() {
        let (cols, vals) = problem.row(x);
        for (&y, &p) in cols.iter().zip(vals) {
            writeln!(out, "{x} {y} {p:.16e}").unwrap();
        }
    }
    out
}

/// Parses and fully validates a `tpchain` document.
///
/// Both structural problems (bad header, short lines, unparsable numbers)
/// and semantic ones (rows out of order, row sums off, empty target) are
/// reported as data errors naming the offending line.
pub fn read_chain(text: &str) -> CliResult<TargetProblem> {
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::data("chain file is empty"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "tpchain" {
        return Err(CliError::data(
            "line 1: expected header `tpchain <version> <n_states> <beta>`",
        ));
    }
    if fields[1] != "1" {
        return Err(CliError::data(format!(
            "line 1: unsupported tpchain version {}",
            fields[1]
        )));
    }
    let n_states: usize = fields[2]
        .parse()
        .map_err(|_| CliError::data(format!("line 1: bad state count {:?}", fields[2])))?;
    let beta: f64 = fields[3]
        .parse()
        .map_err(|_| CliError::data(format!("line 1: bad discount factor {:?}", fields[3])))?;

    let (_, target_line) = lines
        .next()
        .ok_or_else(|| CliError::data("line 2: missing target line"))?;
    let rest = target_line
        .strip_prefix("T:")
        .ok_or_else(|| CliError::data("line 2: expected `T: <state> ...`"))?;
    let mut target = Vec::new();
    for tok in rest.split_whitespace() {
        let t: usize = tok
            .parse()
            .map_err(|_| CliError::data(format!("line 2: bad target state {tok:?}")))?;
        target.push(t);
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_states];
    let mut last_row = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (x, y, p) = match (toks.next(), toks.next(), toks.next(), toks.next()) {
            (Some(x), Some(y), Some(p), None) => (x, y, p),
            _ => {
                return Err(CliError::data(format!(
                    "line {line_no}: expected `<from> <to> <probability>`"
                )))
            }
        };
        let x: usize = x
            .parse()
            .map_err(|_| CliError::data(format!("line {line_no}: bad source state {x:?}")))?;
        let y: usize = y
            .parse()
            .map_err(|_| CliError::data(format!("line {line_no}: bad column state {y:?}")))?;
        let p: f64 = p
            .parse()
            .map_err(|_| CliError::data(format!("line {line_no}: bad probability {p:?}")))?;
        if x >= n_states {
            return Err(CliError::data(format!(
                "line {line_no}: state {x} out of range for {n_states} states"
            )));
        }
        if x < last_row {
            return Err(CliError::data(format!(
                "line {line_no}: rows must be ascending ({x} after {last_row})"
            )));
        }
        last_row = x;
        rows[x].push((y, p));
    }

    let problem = TargetProblem::new(n_states, rows, target, beta)
        .map_err(|e| CliError::data(format!("invalid chain: {e}")))?;
    if let Some(v) = problem.validate().first() {
        return Err(CliError::data(format!("invalid chain: {v}")));
    }
    Ok(problem)
}
