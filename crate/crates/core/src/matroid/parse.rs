//! Matroid spec files.
//!
//! ```text
//! uniform <B>
//! partition <id>,<id>,...:<cap> <id>,...:<cap> ...
//! graphic <n_vertices>
//! edge <element_id> <u> <v>       (vertices are 0-based, one line per element)
//! ```
//!
//! Element ids refer to the instance's ground set. Partition blocks may continue on
//! following lines.

use std::path::Path;

use super::Matroid;
use crate::error::{Error, Result};
use crate::setfn::instance::{content_lines, parse_count, parse_err};
use crate::setfn::GroundSet;

pub fn read_matroid(path: impl AsRef<Path>, ground: &GroundSet) -> Result<Matroid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matroid(&text, path, ground)
}

pub fn parse_matroid(text: &str, path: &Path, ground: &GroundSet) -> Result<Matroid> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty matroid file"))?;
    let mut tok = header.split_whitespace();
    let lookup = |id: &str, ln: usize| {
        ground.index_of(id).map_err(|_| parse_err(path, ln, format!("unknown element `{id}`")))
    };
    let n = ground.len();
    let wrap = |e: Error, ln: usize| match e {
        Error::Input(msg) => parse_err(path, ln, msg),
        other => other,
    };
    match tok.next() {
        Some("uniform") => {
            let b = parse_count(tok.next(), "rank bound", path, hline)?;
            if let Some((ln, _)) = lines.next() {
                return Err(parse_err(path, ln, "unexpected content after uniform header"));
            }
            Matroid::uniform(n, b)
        }
        Some("partition") => {
            let mut blocks = Vec::new();
            let first = tok.map(|t| (hline, t)).collect::<Vec<_>>();
            let rest = lines.flat_map(|(ln, l)| l.split_whitespace().map(move |t| (ln, t)));
            for (ln, t) in first.into_iter().chain(rest) {
                let (ids, cap) =
                    t.rsplit_once(':').ok_or_else(|| parse_err(path, ln, format!("expected `ids:cap`, found `{t}`")))?;
                let cap: usize = cap.parse().map_err(|_| parse_err(path, ln, format!("invalid capacity `{cap}`")))?;
                let elements = ids.split(',').map(|id| lookup(id, ln)).collect::<Result<Vec<_>>>()?;
                blocks.push((elements, cap, ln));
            }
            let last = blocks.last().map_or(hline, |b| b.2);
            Matroid::partition(n, blocks.into_iter().map(|(e, c, _)| (e, c)).collect()).map_err(|e| wrap(e, last))
        }
        Some("graphic") => {
            let n_vertices = parse_count(tok.next(), "vertex count", path, hline)?;
            let mut edges: Vec<Option<(usize, usize)>> = vec![None; n];
            for (ln, line) in lines {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 4 || t[0] != "edge" {
                    return Err(parse_err(path, ln, "expected `edge <element_id> <u> <v>`"));
                }
                let e = lookup(t[1], ln)?;
                let vertex = |s: &str| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&v| v < n_vertices)
                        .ok_or_else(|| parse_err(path, ln, format!("invalid vertex `{s}` (expected 0..{n_vertices})")))
                };
                let (u, v) = (vertex(t[2])?, vertex(t[3])?);
                if edges[e].replace((u, v)).is_some() {
                    return Err(parse_err(path, ln, format!("duplicate edge line for `{}`", t[1])));
                }
            }
            let edges = edges
                .into_iter()
                .enumerate()
                .map(|(i, e)| e.ok_or_else(|| parse_err(path, hline, format!("no edge line for `{}`", ground.id(i)))))
                .collect::<Result<Vec<_>>>()?;
            Matroid::graphic(n_vertices, edges)
        }
        Some(other) => Err(parse_err(path, hline, format!("unknown matroid kind `{other}`"))),
        None => Err(parse_err(path, hline, "missing matroid kind")),
    }
}
