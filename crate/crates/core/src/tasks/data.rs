//! Token-per-line TSV for sequences and trees, and CSV for multiclass rows.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sentence from a TSV file. `heads` is present only when every token has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub words: Vec<String>,
    pub tags: Vec<String>,
    pub heads: Option<Vec<usize>>,
}

/// Reads `token<TAB>tag[<TAB>head]` lines; a blank line ends a sentence and
/// `_` marks an unknown head.
pub fn read_tsv<R: BufRead>(input: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut words = Vec::new();
    let mut tags = Vec::new();
    let mut heads: Vec<Option<usize>> = Vec::new();
    let mut finish = |words: &mut Vec<String>, tags: &mut Vec<String>, heads: &mut Vec<Option<usize>>| {
        if !words.is_empty() {
            let all: Option<Vec<usize>> = heads.iter().copied().collect();
            out.push(Sentence {
                words: std::mem::take(words),
                tags: std::mem::take(tags),
                heads: all,
            });
            heads.clear();
        }
    };
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut words, &mut tags, &mut heads);
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(Error::parse(n, format!("expected 2 or 3 tab-separated columns, got {}", cols.len())));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::parse(n, "empty token or tag"));
        }
        let head = match cols.get(2).copied() {
            None | Some("_") => None,
            Some(h) => Some(h.parse::<usize>().map_err(|_| Error::parse(n, format!("bad head '{h}'")))?),
        };
        words.push(cols[0].to_string());
        tags.push(cols[1].to_string());
        heads.push(head);
    }
    finish(&mut words, &mut tags, &mut heads);
    for (i, s) in out.iter().enumerate() {
        if let Some(h) = &s.heads {
            if h.iter().any(|&x| x > s.words.len()) {
                return Err(Error::Format(format!("sentence {} has a head past its end", i + 1)));
            }
        }
    }
    Ok(out)
}

pub fn write_tsv<W: Write>(mut out: W, sentences: &[Sentence]) -> Result<()> {
    for s in sentences {
        for i in 0..s.words.len() {
            let head = s.heads.as_ref().map_or("_".to_string(), |h| h[i].to_string());
            writeln!(out, "{}\t{}\t{}", s.words[i], s.tags[i], head)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Tag inventory; a tag's index is its action id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet(pub Vec<String>);

impl TagSet {
    /// Sorted distinct tags.
    pub fn from_sentences(sentences: &[Sentence]) -> Self {
        let mut tags: Vec<String> = sentences.iter().flat_map(|s| s.tags.iter().cloned()).collect();
        tags.sort();
        tags.dedup();
        Self(tags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index(&self, tag: &str) -> Option<usize> {
        self.0.binary_search_by(|t| t.as_str().cmp(tag)).ok()
    }

    pub fn encode(&self, tags: &[String]) -> Result<Vec<usize>> {
        tags.iter()
            .map(|t| self.index(t).ok_or_else(|| Error::Format(format!("unknown tag '{t}'"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassRow {
    pub features: Vec<(usize, f64)>,
    pub costs: Vec<f64>,
}

/// Reads rows of `"idx:val idx:val",c_1,...,c_k`; every row must have the same `k`.
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<MulticlassRow>> {
    let mut out: Vec<MulticlassRow> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (field, rest) = if let Some(stripped) = line.strip_prefix('"') {
            let end = stripped.find('"').ok_or_else(|| Error::parse(n, "unterminated quote"))?;
            let rest = stripped[end + 1..].strip_prefix(',').unwrap_or(&stripped[end + 1..]);
            (&stripped[..end], rest)
        } else {
            match line.split_once(',') {
                Some((f, r)) => (f, r),
                None => (line, ""),
            }
        };
        let mut features = Vec::new();
        for pair in field.split_whitespace() {
            let (i, v) = pair
                .split_once(':')
                .ok_or_else(|| Error::parse(n, format!("feature '{pair}' is not idx:val")))?;
            let i: usize = i.parse().map_err(|_| Error::parse(n, format!("bad feature index '{i}'")))?;
            let v: f64 = v.parse().map_err(|_| Error::parse(n, format!("bad feature value '{v}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(n, "non-finite feature value"));
            }
            features.push((i, v));
        }
        let costs = rest
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| Error::parse(n, format!("bad cost '{c}'"))))
            .collect::<Result<Vec<_>>>()?;
        if costs.is_empty() {
            return Err(Error::parse(n, "row has no costs"));
        }
        if let Some(&c) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::parse(n, format!("cost {c} must be finite and non-negative")));
        }
        if let Some(first) = out.first() {
            if first.costs.len() != costs.len() {
                return Err(Error::parse(n, format!("expected {} costs, got {}", first.costs.len(), costs.len())));
            }
        }
        out.push(MulticlassRow { features, costs });
    }
    Ok(out)
}

pub fn write_csv<W: Write>(mut out: W, rows: &[MulticlassRow]) -> Result<()> {
    for r in rows {
        let feats: Vec<String> = r.features.iter().map(|(i, v)| format!("{i}:{v}")).collect();
        let costs: Vec<String> = r.costs.iter().map(|c| c.to_string()).collect();
        writeln!(out, "\"{}\",{}", feats.join(" "), costs.join(","))?;
    }
    Ok(())
}
