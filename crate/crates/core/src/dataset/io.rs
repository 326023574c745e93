use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, InteractionDataset, InteractionRecord, ItemId, SplitDataset, UserId};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const USERS_MAP: &str = "users.map";
pub const ITEMS_MAP: &str = "items.map";
pub const VALIDATION_FILE: &str = "validation.tsv";
pub const TEST_FILE: &str = "test.tsv";

/// On-disk manifest. Counts are derived on load and only written for
/// information.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    behaviors: Vec<String>,
    target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_items: Option<usize>,
}

fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    DatasetManifest::new(file.behaviors, file.target)
}

fn write_manifest(dir: &Path, ds: &InteractionDataset) -> Result<()> {
    let file = ManifestFile {
        behaviors: ds.behaviors().to_vec(),
        target: ds.target_name().to_string(),
        num_users: Some(ds.num_users()),
        num_items: Some(ds.num_items()),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Splits one data line into columns: tab separated, or whitespace
/// separated when the line holds no tab.
fn columns(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Reads `user<TAB>item[<TAB>timestamp]` lines, skipping blanks and `#`
/// comments.
fn read_pairs(path: &Path, allow_timestamp: bool) -> Result<Vec<(String, String, Option<u64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols = columns(line);
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let max_cols = if allow_timestamp { 3 } else { 2 };
        if cols.len() < 2 || cols.len() > max_cols {
            return Err(malformed(format!(
                "expected 2{} columns, found {}",
                if allow_timestamp { " or 3" } else { "" },
                cols.len()
            )));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(malformed("empty id".into()));
        }
        let ts = match cols.get(2) {
            Some(t) => Some(
                t.parse::<u64>()
                    .map_err(|_| malformed(format!("invalid timestamp '{t}'")))?,
            ),
            None => None,
        };
        out.push((cols[0].to_string(), cols[1].to_string(), ts));
    }
    Ok(out)
}

fn read_id_map(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let malformed = |message: &str| Error::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message: message.to_string(),
        };
        let (raw, dense) = line.split_once('\t').ok_or_else(|| malformed("expected raw_id<TAB>dense_id"))?;
        let dense: usize = dense.parse().map_err(|_| malformed("invalid dense id"))?;
        if dense != ids.len() {
            return Err(malformed("dense ids must be contiguous and in order"));
        }
        if ids.last().is_some_and(|prev: &String| prev.as_str() >= raw) {
            return Err(malformed("raw ids must be strictly sorted"));
        }
        ids.push(raw.to_string());
    }
    Ok(ids)
}

fn write_id_map(path: &Path, ids: &[String]) -> Result<()> {
    let mut out = Vec::new();
    for (dense, raw) in ids.iter().enumerate() {
        writeln!(out, "{raw}\t{dense}").expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn load_with<F>(dir: &Path, file_for: F) -> Result<InteractionDataset>
where
    F: Fn(&str) -> String,
{
    let manifest = read_manifest(dir)?;
    let mut records = Vec::new();
    for b in &manifest.behaviors {
        let path = dir.join(file_for(b));
        if !path.is_file() {
            return Err(Error::MissingBehaviorFile {
                behavior: b.clone(),
                path,
            });
        }
        for (user, item, timestamp) in read_pairs(&path, true)? {
            records.push(InteractionRecord {
                user,
                item,
                behavior: b.clone(),
                timestamp,
            });
        }
    }
    let users_map = dir.join(USERS_MAP);
    let items_map = dir.join(ITEMS_MAP);
    if users_map.is_file() && items_map.is_file() {
        let users = read_id_map(&users_map)?;
        let items = read_id_map(&items_map)?;
        InteractionDataset::from_records_with_maps(manifest, users, items, records)
    } else {
        InteractionDataset::from_records(manifest.behaviors, &manifest.target, records)
    }
}

/// Loads a dataset directory: `manifest.json` plus one `<behavior>.tsv` per
/// declared behavior. Persisted `users.map`/`items.map` files, when present,
/// fix the dense id assignment.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<InteractionDataset> {
    load_with(dir.as_ref(), |b| format!("{b}.tsv"))
}

fn write_edges(path: &Path, ds: &InteractionDataset, behavior: usize) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let users = ds.user_ids();
    let items = ds.item_ids();
    for e in ds.edges(behavior).iter() {
        let res = match e.timestamp {
            Some(t) => writeln!(w, "{}\t{}\t{}", users[e.user as usize], items[e.item as usize], t),
            None => writeln!(w, "{}\t{}", users[e.user as usize], items[e.item as usize]),
        };
        res.map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes a dataset in the same layout `load_dataset` reads, plus id maps.
pub fn write_dataset(ds: &InteractionDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    write_manifest(dir, ds)?;
    for (b, name) in ds.behaviors().iter().enumerate() {
        write_edges(&dir.join(format!("{name}.tsv")), ds, b)?;
    }
    write_id_map(&dir.join(USERS_MAP), ds.user_ids())?;
    write_id_map(&dir.join(ITEMS_MAP), ds.item_ids())
}

fn write_held_out(path: &Path, ds: &InteractionDataset, pairs: &[(UserId, ItemId)]) -> Result<()> {
    let mut out = Vec::new();
    for &(u, i) in pairs {
        writeln!(out, "{}\t{}", ds.user_ids()[u as usize], ds.item_ids()[i as usize])
            .expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn train_file(behavior: &str) -> String {
    format!("train.{behavior}.tsv")
}

/// Writes `train.<behavior>.tsv`, `validation.tsv`, `test.tsv`, the id maps
/// and the manifest.
pub fn write_split(split: &SplitDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let ds = &split.train;
    write_manifest(dir, ds)?;
    for (b, name) in ds.behaviors().iter().enumerate() {
        write_edges(&dir.join(train_file(name)), ds, b)?;
    }
    write_held_out(&dir.join(VALIDATION_FILE), ds, &split.validation)?;
    write_held_out(&dir.join(TEST_FILE), ds, &split.test)?;
    write_id_map(&dir.join(USERS_MAP), ds.user_ids())?;
    write_id_map(&dir.join(ITEMS_MAP), ds.item_ids())
}

fn read_held_out(path: &Path, ds: &InteractionDataset) -> Result<Vec<(UserId, ItemId)>> {
    let lookup = |ids: &[String], raw: &str, what: &str| -> Result<u32> {
        ids.binary_search_by(|probe| probe.as_str().cmp(raw))
            .map(|i| i as u32)
            .map_err(|_| Error::Manifest(format!("{what} '{raw}' in {} missing from id map", path.display())))
    };
    read_pairs(path, false)?
        .into_iter()
        .map(|(u, i, _)| {
            Ok((
                lookup(ds.user_ids(), &u, "user")?,
                lookup(ds.item_ids(), &i, "item")?,
            ))
        })
        .collect()
}

/// Returns true when `dir` looks like the output of `write_split`.
pub fn is_split_dir(dir: impl AsRef<Path>) -> bool {
    let dir = dir.as_ref();
    dir.join(TEST_FILE).is_file() && dir.join(VALIDATION_FILE).is_file()
}

/// Reads a directory produced by `write_split`.
pub fn read_split(dir: impl AsRef<Path>) -> Result<SplitDataset> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    for map in [USERS_MAP, ITEMS_MAP] {
        if !dir.join(map).is_file() {
            return Err(Error::io(
                dir.join(map),
                std::io::Error::new(std::io::ErrorKind::NotFound, "split directory lacks id map"),
            ));
        }
    }
    let train = load_with(&dir, train_file)?;
    let validation = read_held_out(&dir.join(VALIDATION_FILE), &train)?;
    let test = read_held_out(&dir.join(TEST_FILE), &train)?;
    Ok(SplitDataset::from_parts(train, validation, test))
}
