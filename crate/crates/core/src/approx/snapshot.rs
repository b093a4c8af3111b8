//! Parameter snapshots.
//!
//! Network: one JSON header line `{"schema_version":1,"layer_sizes":[..]}`
//! followed by the flat parameters as little-endian `f64`.
//! Table: a JSON document mapping observation keys to output vectors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpFn, TabularFn};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MlpHeader {
    schema_version: u32,
    layer_sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TabularDoc {
    schema_version: u32,
    default: Vec<f64>,
    table: BTreeMap<String, Vec<f64>>,
    counts: BTreeMap<String, u64>,
}

pub fn write_mlp<S: Scalar, W: Write>(net: &MlpFn<S>, mut out: W) -> std::io::Result<()> {
    let header = MlpHeader {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        layer_sizes: net.layer_sizes().to_vec(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for p in net.params() {
        out.write_all(&p.as_f64().to_le_bytes())?;
    }
    out.flush()
}

pub fn read_mlp<S: Scalar, R: Read>(input: R) -> Result<MlpFn<S>> {
    let mut reader = BufReader::new(input);
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::parse(1, e.to_string()))?;
    let header: MlpHeader =
        serde_json::from_slice(&line).map_err(|e| Error::parse(1, e.to_string()))?;
    if header.schema_version != SNAPSHOT_SCHEMA_VERSION {
        return Err(Error::parse(
            1,
            format!("unsupported schema version {}", header.schema_version),
        ));
    }
    let mut body = Vec::new();
    reader
        .read_to_end(&mut body)
        .map_err(|e| Error::parse(2, e.to_string()))?;
    if body.len() % 8 != 0 {
        return Err(Error::parse(2, "parameter block is not a whole number of f64"));
    }
    let params: Vec<S> = body
        .chunks_exact(8)
        .map(|c| S::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    MlpFn::from_params(&header.layer_sizes, params).map_err(|e| Error::parse(2, e.to_string()))
}

pub fn save_mlp<S: Scalar>(net: &MlpFn<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_mlp(net, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_mlp<S: Scalar>(path: impl AsRef<Path>) -> Result<MlpFn<S>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_mlp(file)
}

pub fn write_tabular<S: Scalar, W: Write>(t: &TabularFn<S>, out: W) -> std::io::Result<()> {
    let mut table = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (key, values, count) in t.entries() {
        table.insert(key.to_string(), values.iter().map(|v| v.as_f64()).collect());
        if count > 0 {
            counts.insert(key.to_string(), count);
        }
    }
    let doc = TabularDoc {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        default: t.default_value().iter().map(|v| v.as_f64()).collect(),
        table,
        counts,
    };
    serde_json::to_writer(out, &doc)?;
    Ok(())
}

pub fn read_tabular<S: Scalar, R: Read>(input: R) -> Result<TabularFn<S>> {
    let doc: TabularDoc =
        serde_json::from_reader(input).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    if doc.schema_version != SNAPSHOT_SCHEMA_VERSION {
        return Err(Error::parse(
            1,
            format!("unsupported schema version {}", doc.schema_version),
        ));
    }
    let mut t = TabularFn::new(doc.default.into_iter().map(S::of).collect());
    let bad_key = |k: &str| Error::parse(1, format!("bad table key {k:?}"));
    for (k, values) in doc.table {
        let key: u64 = k.parse().map_err(|_| bad_key(&k))?;
        t.set_key(key, values.into_iter().map(S::of).collect())?;
    }
    for (k, n) in doc.counts {
        let key: u64 = k.parse().map_err(|_| bad_key(&k))?;
        t.set_count(key, n);
    }
    Ok(t)
}

pub fn save_tabular<S: Scalar>(t: &TabularFn<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tabular(t, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_tabular<S: Scalar>(path: impl AsRef<Path>) -> Result<TabularFn<S>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tabular(BufReader::new(file))
}
