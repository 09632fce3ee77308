use std::collections::BTreeMap;
use std::path::Path;

use super::{KDataset, KFamily, KRecord};
use crate::error::{Error, Result};
use crate::setfn::instance::{content_lines, parse_count, parse_err, parse_label};
use crate::setfn::{ElementSet, GroundSet};

pub fn read_kinstance(path: impl AsRef<Path>) -> Result<(GroundSet, KDataset)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kinstance(&text, path)
}

/// Parses `ktopics <k> <|U|> <|V|>` followed by lines `v<id> t<i>: u<id> ...`, ids 1-based.
/// A missing `(v, t)` line means an empty neighbourhood.
pub fn parse_kinstance(text: &str, path: &Path) -> Result<(GroundSet, KDataset)> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty instance file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("ktopics") {
        return Err(parse_err(path, hline, "expected header `ktopics <k> <|U|> <|V|>`"));
    }
    let k = parse_count(toks.next(), "topic count", path, hline)?;
    let n_left = parse_count(toks.next(), "|U|", path, hline)?;
    let n_right = parse_count(toks.next(), "|V|", path, hline)?;
    if toks.next().is_some() {
        return Err(parse_err(path, hline, "trailing tokens after header"));
    }
    if k == 0 || k > u8::MAX as usize {
        return Err(parse_err(path, hline, format!("topic count must lie in 1..=255, got {k}")));
    }
    let mut seen = BTreeMap::new();
    let mut topics = vec![vec![ElementSet::EMPTY; k]; n_right];
    for (ln, line) in lines {
        let (head, rest) = line.split_once(':').ok_or_else(|| parse_err(path, ln, "expected `v<id> t<i>: u<id> ...`"))?;
        let head: Vec<&str> = head.split_whitespace().collect();
        if head.len() != 2 {
            return Err(parse_err(path, ln, "expected `v<id> t<i>` before the colon"));
        }
        let v = parse_label(head[0], 'v', n_right)
            .ok_or_else(|| parse_err(path, ln, format!("invalid right vertex `{}`", head[0])))?;
        let t = parse_label(head[1], 't', k).ok_or_else(|| parse_err(path, ln, format!("invalid topic `{}`", head[1])))?;
        if let Some(prev) = seen.insert((v, t), ln) {
            return Err(parse_err(path, ln, format!("duplicate entry for {} {}, first on line {prev}", head[0], head[1])));
        }
        for tok in rest.split_whitespace() {
            let u = parse_label(tok, 'u', n_left).ok_or_else(|| parse_err(path, ln, format!("invalid left vertex `{tok}`")))?;
            topics[v][t] = topics[v][t].with(u);
        }
    }
    let ground = GroundSet::numbered("u", n_left)?;
    let dataset = KDataset::new(KFamily::KTopicCoverage, n_left, k, topics.into_iter().map(KRecord::Topics).collect())?;
    Ok((ground, dataset))
}
