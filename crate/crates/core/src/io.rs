//! File formats.
//!
//! * Interactions: UTF-8 TSV, one `user<TAB>item` pair per line. Tokens map
//!   to dense indices in order of first appearance; repeated pairs collapse.
//! * Token maps: TSV `index<TAB>token`, one line per index.
//! * Features (`.fpmm`), all integers little-endian:
//!
//!   | bytes | field                                        |
//!   |-------|----------------------------------------------|
//!   | 4     | magic `FPMM`                                 |
//!   | 4     | version, `u32` = 1                           |
//!   | 8     | item count, `u64`                            |
//!   | 8     | dimension, `u64`                             |
//!   | 4     | label byte length, `u32`                     |
//!   | n     | label, UTF-8                                 |
//!   | 4·N·D | row-major `f32` payload                      |
//!
//! * Masks: one line per item, `1` known and `0` missing.
//! * Graphs: Matrix Market coordinate format, 1-based, every stored entry
//!   written (`general` symmetry), weights in shortest round-trip decimal.
//! * Sweep reports: CSV and JSON with identical fields.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::eval::SweepReport;
use crate::features::{MissingMask, ModalityFeatureSet};
use crate::graph::{GraphStage, InteractionMatrix, ItemItemGraph};
use crate::sparse::CsrMatrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"FPMM";
pub const FEATURE_VERSION: u32 = 1;

/// Interactions with the token of every user and item index.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionData {
    pub matrix: InteractionMatrix,
    pub user_tokens: Vec<String>,
    pub item_tokens: Vec<String>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn intern(map: &mut HashMap<String, usize>, tokens: &mut Vec<String>, tok: &str) -> usize {
    if let Some(&i) = map.get(tok) {
        return i;
    }
    let i = tokens.len();
    map.insert(tok.to_string(), i);
    tokens.push(tok.to_string());
    i
}

pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionData> {
    load_interactions_with_items(path, None)
}

/// Like [`load_interactions`], but with `items` fixing the item index order.
/// Every item token in the file must then appear in `items`; catalogue items
/// without interactions are kept as isolated items.
pub fn load_interactions_with_items(
    path: impl AsRef<Path>,
    items: Option<&[String]>,
) -> Result<InteractionData> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut users = HashMap::new();
    let mut user_tokens = Vec::new();
    let mut item_tokens: Vec<String> = items.map(<[String]>::to_vec).unwrap_or_default();
    let mut item_ids: HashMap<String, usize> = item_tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let fixed = items.is_some();
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            path: path.into(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                reason: format!("expected `user<TAB>item`, got {line:?}"),
            });
        }
        let u = intern(&mut users, &mut user_tokens, fields[0]);
        let i = if fixed {
            *item_ids.get(fields[1]).ok_or_else(|| Error::Parse {
                path: path.into(),
                line: n + 1,
                reason: format!("item {:?} is not in the item vocabulary", fields[1]),
            })?
        } else {
            intern(&mut item_ids, &mut item_tokens, fields[1])
        };
        pairs.push((u, i));
    }
    if pairs.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            reason: "no interactions".into(),
        });
    }
    let matrix = InteractionMatrix::from_pairs(user_tokens.len(), item_tokens.len(), pairs)?;
    Ok(InteractionData {
        matrix,
        user_tokens,
        item_tokens,
    })
}

/// Writes interactions user by user, items ascending.
pub fn save_interactions(path: impl AsRef<Path>, data: &InteractionData) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (u, i) in data.matrix.pairs() {
        writeln!(w, "{}\t{}", data.user_tokens[u], data.item_tokens[i])
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_token_map(path: impl AsRef<Path>, tokens: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (i, t) in tokens.iter().enumerate() {
        writeln!(w, "{i}\t{t}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_token_map(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut tokens = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            path: path.into(),
            line: n + 1,
            reason,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let (idx, tok) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `index<TAB>token`".into()))?;
        if idx.parse::<usize>().ok() != Some(tokens.len()) {
            return Err(bad(format!("index {idx:?} out of sequence")));
        }
        tokens.push(tok.to_string());
    }
    Ok(tokens)
}

/// Features are stored as `f32`; values are rounded to nearest on save.
pub fn save_features(path: impl AsRef<Path>, set: &ModalityFeatureSet) -> Result<()> {
    let path = path.as_ref();
    let label = set.modality().as_bytes();
    let label_len = u32::try_from(label.len()).map_err(|_| Error::Format {
        path: path.into(),
        reason: "modality label too long".into(),
    })?;
    let mut buf = Vec::with_capacity(32 + label.len() + set.values().as_slice().len() * 4);
    buf.extend_from_slice(&FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.num_items() as u64).to_le_bytes());
    buf.extend_from_slice(&(set.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&label_len.to_le_bytes());
    buf.extend_from_slice(label);
    for &v in set.values().as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<ModalityFeatureSet> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_features(path, &bytes)
}

fn decode_features(path: &Path, bytes: &[u8]) -> Result<ModalityFeatureSet> {
    let format = |reason: String| Error::Format {
        path: path.into(),
        reason,
    };
    let mut at = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        let chunk = bytes
            .get(at..at + n)
            .ok_or_else(|| format(format!("header truncated in {what}")))?;
        at += n;
        Ok(chunk)
    };
    if take(4, "magic")? != FEATURE_MAGIC {
        return Err(format("bad magic, not an FPMM feature file".into()));
    }
    let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let items = u64::from_le_bytes(take(8, "item count")?.try_into().unwrap());
    let dim = u64::from_le_bytes(take(8, "dimension")?.try_into().unwrap());
    let label_len = u32::from_le_bytes(take(4, "label length")?.try_into().unwrap()) as usize;
    let label = std::str::from_utf8(take(label_len, "label")?)
        .map_err(|_| format("modality label is not UTF-8".into()))?
        .to_string();
    let header = 28 + label_len;
    let expected = items
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format(format!("{items}x{dim} payload overflows")))?;
    let actual = (bytes.len() - header) as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(format(format!(
            "{} trailing bytes after a {expected}-byte payload",
            actual - expected
        )));
    }
    let data: Vec<f64> = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let values = DenseMatrix::from_vec(items as usize, dim as usize, data)?;
    ModalityFeatureSet::new(label, values)
}

pub fn save_mask(path: impl AsRef<Path>, mask: &MissingMask) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for &k in mask.known() {
        writeln!(w, "{}", u8::from(k)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MissingMask> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut known = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match line.trim() {
            "1" => known.push(true),
            "0" => known.push(false),
            other => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: n + 1,
                    reason: format!("expected 0 or 1, got {other:?}"),
                })
            }
        }
    }
    Ok(MissingMask::from_known(known))
}

pub fn save_graph(path: impl AsRef<Path>, g: &ItemItemGraph) -> Result<()> {
    let path = path.as_ref();
    let m = g.adjacency();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
    writeln!(w, "% featprop {} item-item graph", g.stage()).map_err(io)?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz()).map_err(io)?;
    for r in 0..m.nrows() {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {}", r + 1, c + 1, v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads a graph written by [`save_graph`] as `stage`.
pub fn load_graph(path: impl AsRef<Path>, stage: GraphStage) -> Result<ItemItemGraph> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut size: Option<(usize, usize, usize)> = None;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut seen = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            path: path.into(),
            line: n + 1,
            reason,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if n == 0 {
            if !line.starts_with("%%MatrixMarket matrix coordinate real general") {
                return Err(bad(
                    "not a Matrix Market coordinate real general file".into()
                ));
            }
            continue;
        }
        if line.starts_with('%') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected three fields, got {}", fields.len())));
        }
        match size {
            None => {
                let parse = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
                let (r, c, nnz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                rows = vec![Vec::new(); r];
                size = Some((r, c, nnz));
            }
            Some((nr, nc, _)) => {
                let parse = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
                let (r, c) = (parse(fields[0])?, parse(fields[1])?);
                let v: f64 = fields[2].parse().map_err(|e| bad(format!("{e}")))?;
                if r == 0 || c == 0 || r > nr || c > nc {
                    return Err(bad(format!("entry ({r},{c}) outside {nr}x{nc}")));
                }
                rows[r - 1].push((c - 1, v));
                seen += 1;
            }
        }
    }
    let (_, ncols, nnz) = size.ok_or_else(|| Error::Format {
        path: path.into(),
        reason: "missing size line".into(),
    })?;
    if seen != nnz {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("size line announces {nnz} entries, found {seen}"),
        });
    }
    let adjacency = CsrMatrix::from_row_lists(ncols, rows)?;
    ItemItemGraph::from_adjacency(stage, adjacency)
}

fn report_header(report: &SweepReport, include_runtime: bool) -> Vec<String> {
    let mut header: Vec<String> = ["method", "rate", "seed", "k", "recall_at_k"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(report.modalities.iter().map(|m| format!("cosine_{m}")));
    if include_runtime {
        header.push("runtime_ms".into());
    }
    header
}

/// CSV with columns `method, rate, seed, k, recall_at_k, cosine_<modality>…,
/// runtime_ms`.
pub fn write_report_csv<W: Write>(w: W, report: &SweepReport, include_runtime: bool) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(report_header(report, include_runtime))
        .map_err(ser)?;
    for row in &report.rows {
        let mut rec = vec![
            row.method.to_string(),
            row.missing_rate.to_string(),
            row.seed.to_string(),
            row.k.to_string(),
            row.recall_at_k.to_string(),
        ];
        rec.extend(row.cosine.iter().map(|c| c.cosine.to_string()));
        if include_runtime {
            rec.push(row.runtime_ms.to_string());
        }
        out.write_record(&rec).map_err(ser)?;
    }
    out.flush().map_err(|e| Error::Serialize(e.to_string()))
}

/// JSON array of flat objects carrying the CSV fields.
pub fn report_to_json(report: &SweepReport) -> Value {
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let mut obj = Map::new();
            obj.insert("method".into(), Value::from(row.method.as_str()));
            obj.insert("rate".into(), Value::from(row.missing_rate));
            obj.insert("seed".into(), Value::from(row.seed));
            obj.insert("k".into(), Value::from(row.k));
            obj.insert("recall_at_k".into(), Value::from(row.recall_at_k));
            for c in &row.cosine {
                obj.insert(format!("cosine_{}", c.modality), Value::from(c.cosine));
            }
            obj.insert("runtime_ms".into(), Value::from(row.runtime_ms));
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

pub fn save_report(dir: impl AsRef<Path>, report: &SweepReport) -> Result<()> {
    let dir = dir.as_ref();
    let csv_path = dir.join("sweep.csv");
    let mut w = create(&csv_path)?;
    write_report_csv(&mut w, report, true)?;
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let json_path = dir.join("sweep.json");
    let mut w = create(&json_path)?;
    serde_json::to_writer_pretty(&mut w, &report_to_json(report))
        .map_err(|e| Error::Serialize(e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(&json_path, e))?;
    w.flush().map_err(|e| Error::io(&json_path, e))
}
