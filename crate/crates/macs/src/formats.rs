//! JSON-lines files: variation pools and training examples. Each file
//! starts with a header line naming its format, version and attribute ids;
//! attribute values are keyed by id on every line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use macs_core::attr::{MultiConstraint, ThresholdWindow};
use macs_core::editpair::{EditPair, PoolMember, TrainingExample, VariationPool};
use macs_core::eval::{Domain, ScoredSequence};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::WireSequence;

pub const POOL_FORMAT: &str = "macs-pool";
pub const TRAIN_FORMAT: &str = "macs-train";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub attr_ids: Vec<String>,
    #[serde(default)]
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolLine {
    group_id: String,
    seq: String,
    attrs: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    origin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainLine {
    group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<WireSequence>,
    source: WireSequence,
    target: WireSequence,
    windows: Vec<ThresholdWindow>,
    reward: f64,
    weight: f64,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_line(out: &mut impl Write, path: &Path, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::format(path, e))?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn read_header(path: &Path, lines: &[(usize, String)], format: &str) -> Result<Header> {
    let (_, first) = lines.first().ok_or_else(|| Error::format(path, "empty file"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| Error::format(path, format!("line 1: {e}")))?;
    if header.format != format {
        return Err(Error::format(path, format!("expected format `{format}`, found `{}`", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", header.version)));
    }
    Ok(header)
}

fn to_scored(wire: WireSequence, header: &Header, path: &Path, line: usize) -> Result<ScoredSequence> {
    if wire.attrs.len() != header.attr_ids.len() {
        return Err(Error::format(
            path,
            format!("line {line}: {} attributes, header declares {}", wire.attrs.len(), header.attr_ids.len()),
        ));
    }
    let attrs = wire
        .vector(&header.attr_ids)
        .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
    Ok(ScoredSequence::new(wire.seq, attrs.0, header.domain))
}

/// Attribute ids and domain of a pool file, from its header alone.
pub fn pool_header(path: &Path) -> Result<Header> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    read_header(path, &[(1, first)], POOL_FORMAT)
}

pub fn write_pools(path: &Path, attr_ids: &[String], domain: Domain, pools: &[VariationPool]) -> Result<()> {
    let mut out = create(path)?;
    write_line(
        &mut out,
        path,
        &Header {
            format: POOL_FORMAT.into(),
            version: VERSION,
            attr_ids: attr_ids.to_vec(),
            domain,
        },
    )?;
    for pool in pools {
        for m in &pool.members {
            let wire = WireSequence::new(&m.seq, attr_ids);
            let line = PoolLine {
                group_id: pool.group_id.clone(),
                seq: wire.seq,
                attrs: wire.attrs,
                origin: m.origin.clone(),
            };
            write_line(&mut out, path, &line)?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads pools, grouping lines by `group_id` in order of first appearance.
pub fn read_pools(path: &Path) -> Result<(Header, Vec<VariationPool>)> {
    let lines = read_lines(path)?;
    let header = read_header(path, &lines, POOL_FORMAT)?;
    let mut pools: Vec<VariationPool> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (n, text) in &lines[1..] {
        let line: PoolLine = serde_json::from_str(text).map_err(|e| Error::format(path, format!("line {n}: {e}")))?;
        let seq = to_scored(
            WireSequence {
                seq: line.seq,
                attrs: line.attrs,
            },
            &header,
            path,
            *n,
        )?;
        let i = *slot.entry(line.group_id.clone()).or_insert_with(|| {
            pools.push(VariationPool::new(line.group_id.clone(), Vec::new()));
            pools.len() - 1
        });
        pools[i].members.push(PoolMember {
            seq,
            origin: line.origin,
        });
    }
    Ok((header, pools))
}

/// Reads several pool files that must agree on attribute ids and domain.
pub fn read_pool_files(paths: &[impl AsRef<Path>]) -> Result<(Header, Vec<VariationPool>)> {
    let mut header: Option<Header> = None;
    let mut all = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let (h, pools) = read_pools(p)?;
        if let Some(first) = &header {
            if first.attr_ids != h.attr_ids || first.domain != h.domain {
                return Err(Error::format(p, "attribute ids or domain differ from the first pool file"));
            }
        } else {
            header = Some(h);
        }
        all.extend(pools);
    }
    let header = header.ok_or_else(|| Error::Config("no pool files given".into()))?;
    Ok((header, all))
}

pub fn write_examples(path: &Path, attr_ids: &[String], domain: Domain, examples: &[TrainingExample]) -> Result<()> {
    let mut out = create(path)?;
    write_line(
        &mut out,
        path,
        &Header {
            format: TRAIN_FORMAT.into(),
            version: VERSION,
            attr_ids: attr_ids.to_vec(),
            domain,
        },
    )?;
    for ex in examples {
        let line = TrainLine {
            group_id: ex.pair.group_id.clone(),
            anchor: ex.anchor.as_ref().map(|a| WireSequence::new(a, attr_ids)),
            source: WireSequence::new(&ex.pair.source, attr_ids),
            target: WireSequence::new(&ex.pair.target, attr_ids),
            windows: ex.windows.windows.clone(),
            reward: ex.reward,
            weight: ex.weight,
            meta: ex.meta.clone(),
        };
        write_line(&mut out, path, &line)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_examples(path: &Path) -> Result<(Header, Vec<TrainingExample>)> {
    let lines = read_lines(path)?;
    let header = read_header(path, &lines, TRAIN_FORMAT)?;
    let mut out = Vec::with_capacity(lines.len().saturating_sub(1));
    for (n, text) in &lines[1..] {
        let line: TrainLine = serde_json::from_str(text).map_err(|e| Error::format(path, format!("line {n}: {e}")))?;
        if line.windows.len() != header.attr_ids.len() {
            return Err(Error::format(path, format!("line {n}: window count does not match the header")));
        }
        out.push(TrainingExample {
            pair: EditPair {
                source: to_scored(line.source, &header, path, *n)?,
                target: to_scored(line.target, &header, path, *n)?,
                group_id: line.group_id,
            },
            windows: MultiConstraint::new(line.windows),
            anchor: line.anchor.map(|a| to_scored(a, &header, path, *n)).transpose()?,
            reward: line.reward,
            weight: line.weight,
            meta: line.meta,
        });
    }
    Ok((header, out))
}
