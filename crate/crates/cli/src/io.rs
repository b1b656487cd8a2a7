//! Reading inputs and writing outputs.
//!
//! Every output goes through [`write_atomic`]: the bytes land in a temporary
//! file next to the destination, which is then renamed over it.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mtscale_core::lawfit::Observation;
use mtscale_core::ledger::ModelArch;
use mtscale_core::mixer::DatasetSpec;
use mtscale_core::packer::{self, PackedShard, SamplePair, SpecialTokens};
use mtscale_core::Error;
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Directory searched for relative config files (registries, architectures)
/// that do not exist relative to the working directory.
pub const CONFIG_DIR_ENV: &str = "MTSCALE_CONFIG_DIR";

pub fn resolve_config(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) => {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                candidate
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}: row {}", path.display(), i + 1)))
        .collect()
}

fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Dataset manifest: CSV with `id,group,size` columns or a JSON array of the
/// same records. `group` may be omitted.
pub fn read_datasets(path: &Path) -> Result<Vec<DatasetSpec>> {
    match extension(path).as_str() {
        "json" => read_json(path),
        _ => read_csv(path),
    }
}

#[derive(Deserialize)]
struct ObservationRow {
    model: String,
    #[serde(alias = "N")]
    n: f64,
    #[serde(alias = "D")]
    d: f64,
    loss: f64,
    #[serde(default)]
    direction: Option<String>,
    #[serde(default)]
    domain: Option<String>,
}

impl From<ObservationRow> for Observation {
    fn from(row: ObservationRow) -> Self {
        let tag = |t: Option<String>| t.filter(|s| !s.trim().is_empty());
        Observation {
            direction: tag(row.direction),
            domain: tag(row.domain),
            ..Observation::new(row.model, row.n, row.d, row.loss)
        }
    }
}

/// Observations: CSV (`model,N,D,loss,direction,domain`), JSON lines
/// (`.jsonl`, `.ndjson`) or a JSON array.
pub fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let rows: Vec<ObservationRow> = match extension(path).as_str() {
        "jsonl" | "ndjson" => read_json_lines(path)?,
        "json" => read_json(path)?,
        _ => read_csv(path)?,
    };
    Ok(rows.into_iter().map(Observation::from).collect())
}

/// Sentence pairs, one JSON object per line.
pub fn read_samples(path: &Path) -> Result<Vec<SamplePair>> {
    read_json_lines(path)
}

/// Registry: a flat JSON object mapping control-token names to ids.
pub fn read_registry(path: &Path, vocab_size: u32) -> Result<SpecialTokens> {
    let path = resolve_config(path);
    let named: std::collections::BTreeMap<String, u32> = read_json(&path)?;
    let registry =
        SpecialTokens::from_named(named.iter().map(|(k, &v)| (k.as_str(), v)), vocab_size)
            .with_context(|| format!("registry {}", path.display()))?;
    Ok(registry)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

/// Architectures: one JSON object or an array of them.
pub fn read_archs(path: &Path) -> Result<Vec<ModelArch>> {
    let path = resolve_config(path);
    let archs: Vec<ModelArch> = match read_json(&path)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(a) => vec![a],
    };
    if archs.is_empty() {
        return Err(
            Error::InvalidInput(format!("{} lists no architectures", path.display())).into(),
        );
    }
    for arch in &archs {
        arch.validate()?;
    }
    Ok(archs)
}

pub fn read_shard(path: &Path) -> Result<PackedShard> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    packer::decode_shard(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Writes `bytes` to `path` so that readers see either the old file or the
/// complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Serializes records as CSV with a header row.
pub fn to_csv<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    Ok(writer.into_inner().map_err(|e| e.into_error())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_formats_agree() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("obs.csv");
        fs::write(
            &csv_path,
            "model,N,D,loss,direction,domain\n70M,7e7,1000,3.5,en-fr,\n410M, 4e8 ,1000,3.1,,general\n",
        )
        .unwrap();
        let jsonl_path = dir.path().join("obs.jsonl");
        fs::write(
            &jsonl_path,
            "{\"model\":\"70M\",\"N\":7e7,\"D\":1000,\"loss\":3.5,\"direction\":\"en-fr\"}\n\n\
             {\"model\":\"410M\",\"n\":4e8,\"d\":1000,\"loss\":3.1,\"domain\":\"general\"}\n",
        )
        .unwrap();
        let a = read_observations(&csv_path).unwrap();
        let b = read_observations(&jsonl_path).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].direction.as_deref(), Some("en-fr"));
        assert_eq!(a[0].domain, None);
        assert_eq!(a[1].n, 4e8);
    }

    #[test]
    fn dataset_manifest_group_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "id,size\na,10\nb,3\n").unwrap();
        let specs = read_datasets(&path).unwrap();
        assert_eq!(specs[1], DatasetSpec::new("b", "", 3));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn bad_json_line_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        fs::write(&path, "{\"oops\": 1}\n").unwrap();
        let err = format!("{:#}", read_samples(&path).unwrap_err());
        assert!(err.contains("line 1"), "{err}");
    }
}
