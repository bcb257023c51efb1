//! On-disk cache of profiles (keyed by prompt fingerprint and model) and
//! embeddings (keyed by model and text). Both files are append-only JSONL;
//! writes are serialized behind a lock.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::profile::Profile;
use crate::{Error, Result};

const PROFILES: &str = "profiles.jsonl";
const EMBEDDINGS: &str = "embeddings.jsonl";

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    key: String,
    vec: Vec<f64>,
}

#[derive(Default)]
struct Entries {
    profiles: HashMap<(String, String), Profile>,
    embeddings: HashMap<String, Vec<f64>>,
}

pub struct Cache {
    dir: PathBuf,
    entries: Mutex<Entries>,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path, mut each: impl FnMut(T)) -> Result<()> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        each(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(())
}

pub fn embedding_key(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

impl Cache {
    /// Opens (creating if needed) a cache directory and loads its entries.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Entries::default();
        read_lines(&dir.join(PROFILES), |p: Profile| {
            entries.profiles.insert((p.fp.clone(), p.model.clone()), p);
        })?;
        read_lines(&dir.join(EMBEDDINGS), |l: EmbeddingLine| {
            entries.embeddings.insert(l.key, l.vec);
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Mutex::new(entries),
        })
    }

    fn append<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut line = serde_json::to_string(value)?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn profile(&self, fp: &str, model: &str) -> Option<Profile> {
        let e = self.entries.lock().unwrap();
        e.profiles.get(&(fp.to_owned(), model.to_owned())).cloned()
    }

    pub fn put_profile(&self, p: &Profile) -> Result<()> {
        let mut e = self.entries.lock().unwrap();
        let key = (p.fp.clone(), p.model.clone());
        if e.profiles.contains_key(&key) {
            return Ok(());
        }
        self.append(PROFILES, p)?;
        e.profiles.insert(key, p.clone());
        Ok(())
    }

    pub fn embedding(&self, model: &str, text: &str) -> Option<Vec<f64>> {
        self.entries.lock().unwrap().embeddings.get(&embedding_key(model, text)).cloned()
    }

    pub fn put_embedding(&self, model: &str, text: &str, vec: &[f64]) -> Result<()> {
        let mut e = self.entries.lock().unwrap();
        let key = embedding_key(model, text);
        if e.embeddings.contains_key(&key) {
            return Ok(());
        }
        self.append(EMBEDDINGS, &EmbeddingLine { key: key.clone(), vec: vec.to_vec() })?;
        e.embeddings.insert(key, vec.to_vec());
        Ok(())
    }
}
