use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approx::{load_mlp, load_tabular, save_mlp, save_tabular};
use crate::error::{Error, Result};
use crate::pvo::{ValueBackend, ValueFunction};
use crate::scalar::Scalar;

use super::sha256_hex;

/// Metadata written next to every value snapshot as `<snapshot>.meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSidecar {
    pub backend: String,
    pub gamma: f64,
    pub demo_file_hash: String,
    pub seed: u64,
    pub epochs: usize,
}

pub fn sidecar_path(snapshot: &Path) -> PathBuf {
    let mut name = snapshot.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn digest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".sha256");
    PathBuf::from(name)
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Records the digest of `path` so a later run can reuse it.
pub(crate) fn seal(path: &Path) -> Result<String> {
    let digest = hash_file(path)?;
    let side = digest_path(path);
    fs::write(&side, &digest).map_err(|e| Error::io(&side, e))?;
    Ok(digest)
}

/// Digest of a previously sealed file that is still intact.
pub(crate) fn sealed_digest(path: &Path) -> Option<String> {
    let recorded = fs::read_to_string(digest_path(path)).ok()?;
    let actual = hash_file(path).ok()?;
    (recorded.trim() == actual).then_some(actual)
}

pub fn save_values<S: Scalar>(
    vf: &ValueFunction<S>,
    path: impl AsRef<Path>,
    sidecar: &ValueSidecar,
) -> Result<()> {
    let path = path.as_ref();
    match &vf.backend {
        ValueBackend::Mlp(net) => save_mlp(net, path)?,
        ValueBackend::Tabular(t) => save_tabular(t, path)?,
    }
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_values<S: Scalar>(path: impl AsRef<Path>) -> Result<(ValueFunction<S>, ValueSidecar)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: ValueSidecar =
        serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    let vf = match sidecar.backend.as_str() {
        "mlp" => ValueFunction::mlp(load_mlp(path)?, sidecar.gamma),
        "tabular" => ValueFunction::tabular(load_tabular(path)?, sidecar.gamma),
        other => return Err(Error::Config(format!("unknown value backend {other:?}"))),
    };
    Ok((vf, sidecar))
}
