//! Line-oriented instance files.
//!
//! ```text
//! coverage <|U|> <|V|>
//! v<id>: u<id> u<id> ...
//!
//! facility <n_clients> <n_sites>
//! <similarity> <similarity> ...      (one row per client)
//! ```
//!
//! Identifiers are 1-based. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, ElementSet, Family, GroundSet, Record, SetFunction};
use crate::error::{Error, Result};

pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Parses `<prefix><id>` with `1 <= id <= max`, returning the 0-based index.
pub(crate) fn parse_label(token: &str, prefix: char, max: usize) -> Option<usize> {
    let id: usize = token.strip_prefix(prefix)?.parse().ok()?;
    (1..=max).contains(&id).then(|| id - 1)
}

pub(crate) fn parse_count(token: Option<&str>, what: &str, path: &Path, line: usize) -> Result<usize> {
    token
        .ok_or_else(|| parse_err(path, line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what}")))
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<SetFunction> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text, path)
}

/// Parses a coverage or facility-location instance; `path` is used for error messages.
pub fn parse_instance(text: &str, path: &Path) -> Result<SetFunction> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty instance file"))?;
    let mut tok = header.split_whitespace();
    match tok.next() {
        Some("coverage") => {
            let n_left = parse_count(tok.next(), "|U|", path, hline)?;
            let n_right = parse_count(tok.next(), "|V|", path, hline)?;
            let ground = GroundSet::numbered("u", n_left)?;
            let mut neighborhoods: Vec<Option<ElementSet>> = vec![None; n_right];
            for (ln, line) in lines {
                let (head, rest) = line
                    .split_once(':')
                    .ok_or_else(|| parse_err(path, ln, "expected `v<id>: u<id> ...`"))?;
                let v = parse_label(head.trim(), 'v', n_right)
                    .ok_or_else(|| parse_err(path, ln, format!("invalid right vertex `{}`", head.trim())))?;
                if neighborhoods[v].is_some() {
                    return Err(parse_err(path, ln, format!("duplicate line for v{}", v + 1)));
                }
                let mut nb = ElementSet::EMPTY;
                for t in rest.split_whitespace() {
                    let u = parse_label(t, 'u', n_left)
                        .ok_or_else(|| parse_err(path, ln, format!("invalid left vertex `{t}`")))?;
                    nb = nb.with(u);
                }
                neighborhoods[v] = Some(nb);
            }
            let records = neighborhoods.into_iter().map(|nb| Record::Neighbors(nb.unwrap_or_default())).collect();
            SetFunction::new(ground, Dataset::new(Family::Coverage, n_left, records)?)
        }
        Some("facility") => {
            let n_clients = parse_count(tok.next(), "client count", path, hline)?;
            let n_sites = parse_count(tok.next(), "site count", path, hline)?;
            let ground = GroundSet::numbered("s", n_sites)?;
            let mut rows = Vec::with_capacity(n_clients);
            for (ln, line) in lines {
                let row = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, ln, format!("invalid similarity `{t}`"))))
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != n_sites {
                    return Err(parse_err(path, ln, format!("expected {n_sites} similarities, found {}", row.len())));
                }
                if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(parse_err(path, ln, "similarities must lie in [0,1]"));
                }
                rows.push(row);
            }
            if rows.len() != n_clients {
                return Err(parse_err(path, hline, format!("expected {n_clients} client rows, found {}", rows.len())));
            }
            SetFunction::new(ground, Dataset::facility_location(n_sites, rows)?)
        }
        Some(other) => Err(parse_err(path, hline, format!("unknown instance kind `{other}`"))),
        None => Err(parse_err(path, hline, "missing instance kind")),
    }
}

/// Serializes coverage and facility-location instances in the format read by [`parse_instance`].
pub fn write_instance(f: &SetFunction) -> Result<String> {
    let d = f.dataset();
    let mut out = String::new();
    match d.family() {
        Family::Coverage => {
            writeln!(out, "coverage {} {}", d.n_elements(), d.len()).unwrap();
            for (v, r) in d.records().iter().enumerate() {
                if let Record::Neighbors(nb) = r {
                    write!(out, "v{}:", v + 1).unwrap();
                    for u in nb.iter() {
                        write!(out, " u{}", u + 1).unwrap();
                    }
                    out.push('\n');
                }
            }
        }
        Family::FacilityLocation => {
            writeln!(out, "facility {} {}", d.len(), d.n_elements()).unwrap();
            for r in d.records() {
                if let Record::Similarities(row) = r {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                    writeln!(out, "{}", cells.join(" ")).unwrap();
                }
            }
        }
        Family::CppAverage => {
            return Err(Error::input("averaging datasets have no instance file format"));
        }
    }
    Ok(out)
}
