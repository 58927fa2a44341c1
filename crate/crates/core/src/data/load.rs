//! Directory loaders for the SVC naming convention and JSON-lines manifests.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_generic_csv, parse_svc_file, Dataset, Label, OnlineSignature};
use crate::{Error, Result};

/// Manifest file name looked up in the dataset root for [`Naming::CsvManifest`].
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// SVC sample indices above this value are skilled forgeries.
const SVC_GENUINE_MAX: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Naming {
    /// `USER<c>_<s>.TXT`, s in 1..=20 genuine and 21..=40 skilled forgery.
    Svc,
    /// `manifest.jsonl` listing every file with its identity. Files ending in
    /// `.csv` use the generic CSV parser, anything else the SVC parser.
    CsvManifest,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub client_id: String,
    pub label: Label,
    pub sample_index: u32,
}

pub fn load_dataset(root: &Path, naming: Naming) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", root.display())));
    }
    let signatures = match naming {
        Naming::Svc => load_svc(root)?,
        Naming::CsvManifest => load_manifest(root)?,
    };
    if signatures.is_empty() {
        return Err(Error::Dataset(format!("no signature files in {}", root.display())));
    }
    Dataset::from_signatures(signatures)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits `USER12_7.TXT` into ("12", 7).
fn svc_identity(name: &str) -> Option<(String, u32)> {
    let upper = name.to_ascii_uppercase();
    let stem = upper.strip_suffix(".TXT")?.strip_prefix("USER")?;
    let (client, sample) = stem.split_once('_')?;
    if client.is_empty() || !client.chars().all(|c| c.is_ascii_alphanumeric()) {
        return None;
    }
    Some((client.to_string(), sample.parse().ok()?))
}

fn load_svc(root: &Path) -> Result<Vec<OnlineSignature>> {
    let mut entries: Vec<(PathBuf, String, u32)> = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        match svc_identity(&name) {
            Some((client, sample)) => entries.push((entry.path(), client, sample)),
            None => log::debug!("skipping {name}: not an SVC signature file"),
        }
    }
    entries.sort_by(|a, b| (&a.1, a.2).cmp(&(&b.1, b.2)));
    entries
        .into_iter()
        .map(|(path, client, sample)| {
            let label = if sample <= SVC_GENUINE_MAX {
                Label::Genuine
            } else {
                Label::SkilledForgery
            };
            let sig = parse_svc_file(&read(&path)?).map_err(|e| e.in_file(&path))?;
            Ok(sig.with_identity(client, label, sample))
        })
        .collect()
}

fn load_manifest(root: &Path) -> Result<Vec<OnlineSignature>> {
    let manifest = root.join(MANIFEST_FILE);
    let text = read(&manifest)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()).in_file(&manifest))?;
        if !seen.insert((entry.client_id.clone(), entry.label, entry.sample_index)) {
            return Err(Error::parse(
                i + 1,
                format!(
                    "duplicate sample {} {} {}",
                    entry.client_id, entry.label, entry.sample_index
                ),
            )
            .in_file(&manifest));
        }
        let path = root.join(&entry.path);
        let text = read(&path)?;
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let sig = if is_csv {
            parse_generic_csv(&text)
        } else {
            parse_svc_file(&text)
        }
        .map_err(|e| e.in_file(&path))?;
        out.push(sig.with_identity(entry.client_id, entry.label, entry.sample_index));
    }
    Ok(out)
}

/// Writes every signature of `dataset` as a generic CSV file under `root`
/// together with a manifest that [`load_dataset`] reads back with
/// [`Naming::CsvManifest`].
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::new();
    for sig in dataset.signatures() {
        let client: String = sig
            .client_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let kind = match sig.label {
            Label::Genuine => 'g',
            Label::SkilledForgery => 'f',
        };
        let name = PathBuf::from(format!("{client}_{kind}{:03}.csv", sig.sample_index));
        let path = root.join(&name);
        fs::write(&path, super::write_generic_csv(sig)).map_err(|e| Error::io(&path, e))?;
        let entry = ManifestEntry {
            path: name,
            client_id: sig.client_id.clone(),
            label: sig.label,
            sample_index: sig.sample_index,
        };
        manifest.push_str(&serde_json::to_string(&entry).expect("manifest entry serializes"));
        manifest.push('\n');
    }
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
