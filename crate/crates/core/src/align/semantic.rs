use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::IdMaps;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    User,
    Item,
}

impl std::fmt::Display for EntityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EntityKind::User => "user",
            EntityKind::Item => "item",
        })
    }
}

/// One line of the semantic embedding file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticRecord {
    pub id: String,
    pub kind: EntityKind,
    pub vec: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub generated_at: String,
}

/// Fixed-length semantic vectors for every user and item, indexed like the
/// interaction id maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticStore {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    pub provenance: Provenance,
}

impl SemanticStore {
    pub fn new(users: Array2<f64>, items: Array2<f64>, provenance: Provenance) -> Result<Self> {
        if users.ncols() != items.ncols() {
            return Err(Error::InvalidInput(format!(
                "user vectors have dimension {}, item vectors {}",
                users.ncols(),
                items.ncols()
            )));
        }
        if users.iter().chain(items.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite semantic vector".into()));
        }
        Ok(Self {
            users,
            items,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.users.ncols()
    }

    pub fn user(&self, u: usize) -> ArrayView1<'_, f64> {
        self.users.row(u)
    }

    pub fn item(&self, v: usize) -> ArrayView1<'_, f64> {
        self.items.row(v)
    }

    /// Assembles a store from records, requiring exactly one vector for every
    /// entity in `ids` and a single shared dimension. Records for unknown ids
    /// are ignored (they typically belong to entities removed by filtering).
    pub fn from_records<I>(records: I, ids: &IdMaps, provenance: Provenance) -> Result<Self>
    where
        I: IntoIterator<Item = SemanticRecord>,
    {
        let mut dim: Option<usize> = None;
        let mut users: Option<Array2<f64>> = None;
        let mut items: Option<Array2<f64>> = None;
        let mut seen: HashSet<(EntityKind, u32)> = HashSet::new();
        let mut ignored = 0usize;

        for rec in records {
            let d = *dim.get_or_insert(rec.vec.len());
            if rec.vec.len() != d || d == 0 {
                return Err(Error::InvalidInput(format!(
                    "{} `{}` has dimension {}, expected {d}",
                    rec.kind,
                    rec.id,
                    rec.vec.len()
                )));
            }
            let (map, table) = match rec.kind {
                EntityKind::User => (&ids.users, &mut users),
                EntityKind::Item => (&ids.items, &mut items),
            };
            let Some(idx) = map.get(&rec.id) else {
                ignored += 1;
                continue;
            };
            if !seen.insert((rec.kind, idx)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate semantic vector for {} `{}`",
                    rec.kind, rec.id
                )));
            }
            let table = table.get_or_insert_with(|| Array2::zeros((map.len(), d)));
            for (slot, &v) in table.row_mut(idx as usize).iter_mut().zip(&rec.vec) {
                *slot = v as f64;
            }
        }
        if ignored > 0 {
            log::warn!("ignored {ignored} semantic vectors for unknown entities");
        }

        let d = dim.ok_or_else(|| Error::Empty("no semantic vectors".into()))?;
        for (kind, map) in [(EntityKind::User, &ids.users), (EntityKind::Item, &ids.items)] {
            if let Some(missing) = (0..map.len() as u32).find(|i| !seen.contains(&(kind, *i))) {
                return Err(Error::InvalidInput(format!(
                    "no semantic vector for {kind} `{}`",
                    map.raw(missing)
                )));
            }
        }
        Self::new(
            users.unwrap_or_else(|| Array2::zeros((0, d))),
            items.unwrap_or_else(|| Array2::zeros((0, d))),
            provenance,
        )
    }

    pub fn load_jsonl(path: &Path, ids: &IdMaps) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SemanticRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records, ids, Provenance::default())
    }

    pub fn records(&self, ids: &IdMaps) -> Vec<SemanticRecord> {
        let row = |id: &str, kind, r: ArrayView1<'_, f64>| SemanticRecord {
            id: id.to_owned(),
            kind,
            vec: r.iter().map(|&v| v as f32).collect(),
        };
        ids.users
            .iter()
            .enumerate()
            .map(|(u, id)| row(id, EntityKind::User, self.user(u)))
            .chain(
                ids.items
                    .iter()
                    .enumerate()
                    .map(|(v, id)| row(id, EntityKind::Item, self.item(v))),
            )
            .collect()
    }

    /// Users first, then items, in index order.
    pub fn write_jsonl(&self, path: &Path, ids: &IdMaps) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in self.records(ids) {
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Permutes user vectors among users and item vectors among items,
    /// breaking the pairing between entities and their semantics.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let permute = |m: &Array2<f64>, rng: &mut ChaCha8Rng| {
            let mut order: Vec<usize> = (0..m.nrows()).collect();
            order.shuffle(rng);
            m.select(ndarray::Axis(0), &order)
        };
        let users = permute(&self.users, &mut rng);
        let items = permute(&self.items, &mut rng);
        Self {
            users,
            items,
            provenance: self.provenance.clone(),
        }
    }
}
