use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{Edge, IdMaps, InteractionSet};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// `user<TAB>item[<TAB>rating[<TAB>timestamp]]`, no header.
    Tsv,
    /// `{"user": str, "item": str, "rating": number?, "ts": integer?}` per line.
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::InvalidInput(format!("unknown format `{other}`"))),
        }
    }
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "tsv" | "txt" => Some(Format::Tsv),
            "jsonl" | "json" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    user: String,
    item: String,
    #[serde(default)]
    rating: Option<f64>,
    #[serde(default)]
    ts: Option<i64>,
}

struct RawRecord {
    user: String,
    item: String,
    rating: Option<f64>,
    ts: Option<i64>,
}

pub fn load_interactions(
    path: &Path,
    format: Format,
    min_rating: Option<f64>,
) -> Result<InteractionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), format, min_rating, path)
}

/// Parses interaction records, drops those rated below `min_rating`,
/// collapses duplicate pairs and assigns dense indices in first-seen order.
///
/// Records without a rating always pass the rating filter.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: Format,
    min_rating: Option<f64>,
    label: &Path,
) -> Result<InteractionSet> {
    let mut set = InteractionSet::default();
    let mut slot: HashMap<(u32, u32), usize> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_line(&line, format).map_err(|msg| Error::Parse {
            path: label.to_path_buf(),
            line: lineno + 1,
            msg,
        })?;
        if let (Some(min), Some(r)) = (min_rating, rec.rating) {
            if r < min {
                continue;
            }
        }
        let u = set.ids.users.intern(&rec.user);
        let v = set.ids.items.intern(&rec.item);
        match slot.get(&(u, v)) {
            Some(&at) => {
                let kept = &mut set.edges[at];
                if let (Some(old), Some(new)) = (kept.ts, rec.ts) {
                    if new > old {
                        kept.ts = Some(new);
                        kept.rating = rec.rating;
                    }
                }
            }
            None => {
                slot.insert((u, v), set.edges.len());
                set.edges.push(Edge {
                    user: u,
                    item: v,
                    rating: rec.rating,
                    ts: rec.ts,
                    noise: false,
                });
            }
        }
    }

    if set.edges.is_empty() {
        return Err(Error::Empty(format!(
            "no interactions left in {} after filtering",
            label.display()
        )));
    }
    Ok(set)
}

fn parse_line(line: &str, format: Format) -> std::result::Result<RawRecord, String> {
    match format {
        Format::Tsv => {
            let cols: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
            if !(2..=4).contains(&cols.len()) {
                return Err(format!("expected 2 to 4 tab-separated columns, got {}", cols.len()));
            }
            if cols[0].is_empty() || cols[1].is_empty() {
                return Err("empty user or item id".into());
            }
            let rating = match cols.get(2) {
                Some(s) if !s.is_empty() => Some(
                    s.parse::<f64>()
                        .map_err(|_| format!("bad rating `{s}`"))?,
                ),
                _ => None,
            };
            let ts = match cols.get(3) {
                Some(s) if !s.is_empty() => {
                    Some(s.parse::<i64>().map_err(|_| format!("bad timestamp `{s}`"))?)
                }
                _ => None,
            };
            Ok(RawRecord {
                user: cols[0].to_owned(),
                item: cols[1].to_owned(),
                rating,
                ts,
            })
        }
        Format::Jsonl => {
            let rec: JsonRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
            Ok(RawRecord {
                user: rec.user,
                item: rec.item,
                rating: rec.rating,
                ts: rec.ts,
            })
        }
    }
}

/// Writes edges as TSV with raw ids. Rating and timestamp columns are
/// emitted only when present. Noise edges are skipped.
pub fn write_edges_tsv(set: &InteractionSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_edges(&mut w, &set.ids, &set.edges).map_err(|e| Error::io(path, e))
}

fn write_edges<W: Write>(w: &mut W, ids: &IdMaps, edges: &[Edge]) -> std::io::Result<()> {
    for e in edges.iter().filter(|e| !e.noise) {
        write!(w, "{}\t{}", ids.users.raw(e.user), ids.items.raw(e.item))?;
        match (e.rating, e.ts) {
            (Some(r), Some(t)) => write!(w, "\t{r}\t{t}")?,
            (Some(r), None) => write!(w, "\t{r}")?,
            (None, Some(t)) => write!(w, "\t\t{t}")?,
            (None, None) => {}
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Reads a TSV edge list against fixed id maps; unknown ids are an error.
pub(crate) fn read_edges_tsv(path: &Path, ids: &IdMaps) -> Result<Vec<Edge>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let rec = parse_line(&line, Format::Tsv).map_err(perr)?;
        let user = ids
            .users
            .get(&rec.user)
            .ok_or_else(|| perr(format!("unknown user `{}`", rec.user)))?;
        let item = ids
            .items
            .get(&rec.item)
            .ok_or_else(|| perr(format!("unknown item `{}`", rec.item)))?;
        edges.push(Edge {
            user,
            item,
            rating: rec.rating,
            ts: rec.ts,
            noise: false,
        });
    }
    Ok(edges)
}
