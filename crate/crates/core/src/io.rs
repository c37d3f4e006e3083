//! File formats: the matrix container used for network exports and MLP
//! checkpoints, dataset CSV/binary files and JSON sidecars.
//!
//! # Matrix container (version 1)
//!
//! All integers and floats are little-endian.
//!
//! | field        | type      | meaning                                           |
//! |--------------|-----------|---------------------------------------------------|
//! | magic        | 8 bytes   | `SWAVEMAT`                                        |
//! | version      | u32       | 1                                                 |
//! | payload      | u32       | 0 = hard-function network, 1 = MLP checkpoint      |
//! | n            | u64       | input dimension                                   |
//! | hidden       | u64       | hidden unit count (first hidden layer for an MLP) |
//! | activation   | u32       | gate code (sigmoid 0, relu 1, softplus 2, softsign 3) |
//! | s            | f64       | gate sharpness (1 for MLP hidden layers)          |
//! | scale        | f64       | output scale                                      |
//! | bias         | f64       | output bias                                       |
//! | matrices     | u32       | number of matrices that follow                    |
//! | per matrix   |           | rows u64, cols u64, rows·cols f64 row-major       |
//!
//! A network stores three matrices: hidden weights (h×n), hidden biases
//! (h×1) and output weights (h×1). A checkpoint stores, per layer, the
//! weights (out×in) followed by the biases (out×1); its scale and bias are
//! the target standardization.
//!
//! # Dataset binary (version 1)
//!
//! magic `SWAVEDS\0`, version u32, n u64, count u64, then `count` rows of
//! `n + 1` f64 values `x1..xn, y`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::activation::{ActivationKind, Gate};
use crate::dist::{label_rows, DatasetMeta, InputDistN, LabeledSampleSet, Rounding};
use crate::error::{Error, Result};
use crate::hardfam::{HardFunction, NetworkRep};
use crate::linalg::Matrix;
use crate::mlp::{HiddenActivation, Mlp, MlpSpec};

pub const MATRIX_MAGIC: &[u8; 8] = b"SWAVEMAT";
pub const DATASET_MAGIC: &[u8; 8] = b"SWAVEDS\0";
pub const FORMAT_VERSION: u32 = 1;
const PAYLOAD_NETWORK: u32 = 0;
const PAYLOAD_MLP: u32 = 1;
/// Rows generated per batch when streaming a dataset to disk.
const STREAM_BATCH: usize = 8192;
/// Largest matrix accepted when reading, to reject corrupt headers early.
const MAX_ENTRIES: u64 = 1 << 32;

struct Header {
    payload: u32,
    n: u64,
    hidden: u64,
    activation: u32,
    s: f64,
    scale: f64,
    bias: f64,
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_container(w: &mut impl Write, h: &Header, mats: &[(usize, usize, &[f64])]) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, h.payload)?;
    put_u64(w, h.n)?;
    put_u64(w, h.hidden)?;
    put_u32(w, h.activation)?;
    put_f64(w, h.s)?;
    put_f64(w, h.scale)?;
    put_f64(w, h.bias)?;
    put_u32(w, mats.len() as u32)?;
    for &(rows, cols, data) in mats {
        put_u64(w, rows as u64)?;
        put_u64(w, cols as u64)?;
        for &v in data {
            put_f64(w, v)?;
        }
    }
    Ok(())
}

fn read_container(r: &mut impl Read) -> Result<(Header, Vec<Matrix>)> {
    let mut magic = [0; 8];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("not a matrix container (bad magic)".into()));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let h = Header {
        payload: get_u32(r)?,
        n: get_u64(r)?,
        hidden: get_u64(r)?,
        activation: get_u32(r)?,
        s: get_f64(r)?,
        scale: get_f64(r)?,
        bias: get_f64(r)?,
    };
    let count = get_u32(r)?;
    let mut mats = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let rows = get_u64(r)?;
        let cols = get_u64(r)?;
        if rows.saturating_mul(cols) > MAX_ENTRIES {
            return Err(Error::Format(format!("matrix of {rows}x{cols} entries is too large")));
        }
        let mut data = Vec::with_capacity((rows * cols) as usize);
        for _ in 0..rows * cols {
            data.push(get_f64(r)?);
        }
        mats.push(Matrix::from_rows(rows as usize, cols as usize, data)?);
    }
    Ok((h, mats))
}

pub fn write_network(w: &mut impl Write, net: &NetworkRep) -> Result<()> {
    net.validate()?;
    let h = net.hidden();
    write_container(
        w,
        &Header {
            payload: PAYLOAD_NETWORK,
            n: net.n() as u64,
            hidden: h as u64,
            activation: net.activation.gate.code(),
            s: net.activation.sharpness,
            scale: net.output_scale,
            bias: net.output_bias,
        },
        &[(h, net.n(), &net.hidden_weights.data), (h, 1, &net.hidden_biases), (h, 1, &net.output_weights)],
    )
}

pub fn read_network(r: &mut impl Read) -> Result<NetworkRep> {
    let (h, mut mats) = read_container(r)?;
    if h.payload != PAYLOAD_NETWORK || mats.len() != 3 {
        return Err(Error::Format("container does not hold a hard-function network".into()));
    }
    let gate = Gate::from_code(h.activation).ok_or_else(|| Error::Format(format!("unknown activation code {}", h.activation)))?;
    let out = mats.pop().expect("three matrices");
    let bias = mats.pop().expect("three matrices");
    let weights = mats.pop().expect("three matrices");
    if weights.rows as u64 != h.hidden || weights.cols as u64 != h.n {
        return Err(Error::Format("weight shape disagrees with header".into()));
    }
    let net = NetworkRep {
        hidden_weights: weights,
        hidden_biases: bias.data,
        output_weights: out.data,
        output_bias: h.bias,
        activation: ActivationKind::new(gate, h.s).map_err(|e| Error::Format(e.to_string()))?,
        output_scale: h.scale,
    };
    net.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(net)
}

pub fn write_checkpoint(w: &mut impl Write, m: &Mlp) -> Result<()> {
    let spec = &m.spec;
    let mut mats: Vec<(usize, usize, &[f64])> = Vec::new();
    let mut off = 0;
    for win in spec.layer_sizes.windows(2) {
        let (i, o) = (win[0], win[1]);
        mats.push((o, i, &m.params[off..off + i * o]));
        mats.push((o, 1, &m.params[off + i * o..off + i * o + o]));
        off += i * o + o;
    }
    let act = match spec.hidden_activation {
        HiddenActivation::Sigmoid => Gate::Sigmoid,
        HiddenActivation::Relu => Gate::Relu,
    };
    write_container(
        w,
        &Header {
            payload: PAYLOAD_MLP,
            n: spec.input_dim() as u64,
            hidden: spec.layer_sizes[1] as u64,
            activation: act.code(),
            s: 1.0,
            scale: m.target_scale,
            bias: m.target_mean,
        },
        &mats,
    )
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Mlp> {
    let (h, mats) = read_container(r)?;
    if h.payload != PAYLOAD_MLP || mats.is_empty() || mats.len() % 2 != 0 {
        return Err(Error::Format("container does not hold an MLP checkpoint".into()));
    }
    let act = match Gate::from_code(h.activation) {
        Some(Gate::Sigmoid) => HiddenActivation::Sigmoid,
        Some(Gate::Relu) => HiddenActivation::Relu,
        _ => return Err(Error::Format(format!("unsupported MLP activation code {}", h.activation))),
    };
    let mut sizes = vec![h.n as usize];
    let mut params = Vec::new();
    for pair in mats.chunks(2) {
        let (w, b) = (&pair[0], &pair[1]);
        if w.cols != *sizes.last().expect("nonempty") || b.rows != w.rows || b.cols != 1 {
            return Err(Error::Format("inconsistent layer shapes in checkpoint".into()));
        }
        sizes.push(w.rows);
        params.extend_from_slice(&w.data);
        params.extend_from_slice(&b.data);
    }
    let spec = MlpSpec { layer_sizes: sizes, hidden_activation: act };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(Mlp { spec, params, target_mean: h.bias, target_scale: h.scale })
}

/// Dataset file encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Binary,
        }
    }
}

fn csv_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    h.push("y".into());
    h
}

/// Writes rows `x1..xn, y` without touching metadata.
struct RowSink {
    inner: SinkKind,
    n: usize,
}

enum SinkKind {
    Csv(csv::Writer<BufWriter<File>>),
    Bin(BufWriter<File>),
}

impl RowSink {
    fn create(path: &Path, format: DatasetFormat, n: usize, count: usize) -> Result<Self> {
        let file = BufWriter::new(File::create(path)?);
        let inner = match format {
            DatasetFormat::Csv => {
                let mut w = csv::Writer::from_writer(file);
                w.write_record(csv_header(n))?;
                SinkKind::Csv(w)
            }
            DatasetFormat::Binary => {
                let mut w = file;
                w.write_all(DATASET_MAGIC)?;
                put_u32(&mut w, FORMAT_VERSION)?;
                put_u64(&mut w, n as u64)?;
                put_u64(&mut w, count as u64)?;
                SinkKind::Bin(w)
            }
        };
        Ok(RowSink { inner, n })
    }

    fn write(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        for (row, &label) in x.chunks(self.n).zip(y) {
            match &mut self.inner {
                // Debug formatting is the shortest text that parses back exactly.
                SinkKind::Csv(w) => w.write_record(row.iter().chain(std::iter::once(&label)).map(|v| format!("{v:?}")))?,
                SinkKind::Bin(w) => {
                    for &v in row {
                        put_f64(w, v)?;
                    }
                    put_f64(w, label)?;
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.inner {
            SinkKind::Csv(mut w) => w.flush()?,
            SinkKind::Bin(mut w) => w.flush()?,
        }
        Ok(())
    }
}

/// Path of the JSON sidecar next to a dataset file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes a dataset and its metadata sidecar.
pub fn write_dataset(path: &Path, ds: &LabeledSampleSet, format: DatasetFormat) -> Result<()> {
    let mut sink = RowSink::create(path, format, ds.dim(), ds.len())?;
    sink.write(&ds.inputs, &ds.labels)?;
    sink.finish()?;
    write_json(&sidecar_path(path), &ds.meta)
}

/// Generates and writes a dataset batch by batch, so memory use does not
/// grow with `count`. The rows equal those of `make_dataset`.
pub fn stream_dataset(
    path: &Path,
    format: DatasetFormat,
    f: &HardFunction,
    dist: &InputDistN,
    count: usize,
    seed: u64,
    rounding: Option<Rounding>,
) -> Result<DatasetMeta> {
    if dist.dim() != f.n {
        return Err(crate::error::invalid("distribution dimension does not match function dimension"));
    }
    if count == 0 {
        return Err(crate::error::invalid("count must be at least 1"));
    }
    let meta = DatasetMeta { n: f.n, count, seed, dist: *dist, function: f.clone(), rounding };
    let mut sink = RowSink::create(path, format, f.n, count)?;
    let mut start = 0;
    while start < count {
        let len = STREAM_BATCH.min(count - start);
        let x = crate::dist::sample_rows(dist, start, len, seed);
        let y = label_rows(f, &x, rounding);
        sink.write(&x, &y)?;
        start += len;
    }
    sink.finish()?;
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

/// Reads a dataset file and its sidecar.
pub fn read_dataset(path: &Path) -> Result<LabeledSampleSet> {
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let (inputs, labels) = read_rows(path)?;
    if labels.len() != meta.count || inputs.len() != meta.count * meta.n {
        return Err(Error::Format(format!("{} holds {} rows, sidecar says {}", path.display(), labels.len(), meta.count)));
    }
    Ok(LabeledSampleSet { inputs, labels, meta })
}

/// Reads the rows of a dataset file, detecting the format from its content.
pub fn read_rows(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0; 8];
    let is_bin = r.read_exact(&mut magic).is_ok() && &magic == DATASET_MAGIC;
    if is_bin {
        let version = get_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let n = get_u64(&mut r)? as usize;
        let count = get_u64(&mut r)?;
        if (count as u128) * (n as u128 + 1) > MAX_ENTRIES as u128 {
            return Err(Error::Format("dataset header is implausibly large".into()));
        }
        let mut x = Vec::with_capacity(count as usize * n);
        let mut y = Vec::with_capacity(count as usize);
        for _ in 0..count {
            for _ in 0..n {
                x.push(get_f64(&mut r)?);
            }
            y.push(get_f64(&mut r)?);
        }
        return Ok((x, y));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let n = header.len().checked_sub(1).ok_or_else(|| Error::Format("empty CSV header".into()))?;
    if header.iter().collect::<Vec<_>>() != csv_header(n).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Format("CSV header must be x1..xn,y".into()));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Format(format!("bad number '{field}'")))?;
            if i < n {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    Ok((x, y))
}

/// Writes `value` as one JSON line.
pub fn append_jsonl<T: Serialize>(w: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::dist::make_dataset;
    use crate::hardfam::{to_network, Subset, WaveParams};
    use crate::mlp::init_params;

    fn small_fn() -> HardFunction {
        let mut p = WaveParams::new(ActivationKind::sigmoid(1.0).unwrap());
        p.m = Some(2);
        HardFunction::new(p.build(3, 1.0).unwrap(), Subset::from_indices(6, &[0, 2, 5]).unwrap()).unwrap()
    }

    #[test]
    fn network_roundtrip() {
        let net = to_network(&small_fn());
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        assert_eq!(&buf[..8], MATRIX_MAGIC);
        assert_eq!(read_network(&mut buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let spec = MlpSpec::new(5, &[7, 3], HiddenActivation::Sigmoid).unwrap();
        let mut m = init_params(&spec, 4).unwrap();
        m.target_mean = 0.3;
        m.target_scale = 2.0;
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), m);
        assert!(read_network(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn corrupt_container_rejected() {
        assert!(matches!(read_network(&mut &b"NOTAMAGIC-------"[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        write_network(&mut buf, &to_network(&small_fn())).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_network(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn dataset_roundtrip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_dataset(&small_fn(), &InputDistN::gaussian(6), 50, 9, Some(Rounding::new(17).unwrap())).unwrap();
        for (name, fmt) in [("d.csv", DatasetFormat::Csv), ("d.bin", DatasetFormat::Binary)] {
            let p = dir.path().join(name);
            write_dataset(&p, &ds, fmt).unwrap();
            assert_eq!(read_dataset(&p).unwrap(), ds);
        }
        let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert!(text.starts_with("x1,x2,x3,x4,x5,x6,y\n"));
    }

    #[test]
    fn streaming_matches_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let f = small_fn();
        let dist = InputDistN::gaussian(6);
        let count = STREAM_BATCH + 17;
        let p = dir.path().join("s.bin");
        stream_dataset(&p, DatasetFormat::Binary, &f, &dist, count, 3, None).unwrap();
        let ds = make_dataset(&f, &dist, count, 3, None).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), ds);
        let again = dir.path().join("t.bin");
        stream_dataset(&again, DatasetFormat::Binary, &f, &dist, count, 3, None).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn csv_header_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_rows(&p), Err(Error::Format(_))));
    }
}
