//! Readers and writers for every on-disk format.
//!
//! | data            | formats                                          |
//! |-----------------|--------------------------------------------------|
//! | dataset         | JSON `{"dim","points"}`, CSV with `x0,x1,…`      |
//! | kernel matrix   | JSON `{"n","entries"}`, headerless row-major CSV |
//! | eigen report    | JSON `{"lambda_min","clamped","raw"}`            |
//! | spectrum table  | CSV `activation,d,r,c_rd`                        |
//! | parameters      | `NTKP` binary container, JSON                    |
//! | layer trace     | CSV `layer,quantity,value`                       |
//! | bound report    | JSON                                             |

use std::io::{Read, Write};

use ntk_eigen_core::bounds::BoundReport;
use ntk_eigen_core::kernel::{EigenReport, KernelMatrix};
use ntk_eigen_core::ntk::{self, DeepParams, LayerTrace, ShallowParams};
use ntk_eigen_core::specfun::SpectrumTable;
use ntk_eigen_core::Dataset;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e15)` so tiny values stay short.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    dim: usize,
    points: Vec<Vec<f64>>,
}

pub fn write_dataset_json<W: Write>(data: &Dataset, w: W) -> Result<()> {
    let file = DatasetFile { dim: data.dim(), points: data.iter().map(<[f64]>::to_vec).collect() };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

pub fn read_dataset_json<R: Read>(r: R) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_reader(r)?;
    if let Some(bad) = file.points.iter().position(|p| p.len() != file.dim) {
        return Err(HarnessError::format("dataset", format!("point {bad} has {} coordinates, expected {}", file.points[bad].len(), file.dim)));
    }
    Ok(Dataset::from_points(file.dim, file.points)?)
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((0..data.dim()).map(|j| format!("x{j}")))?;
    for p in data.iter() {
        out.write_record(p.iter().map(|&v| fmt_f64(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    for (j, h) in headers.iter().enumerate() {
        if h.trim() != format!("x{j}") {
            return Err(HarnessError::format("dataset csv header", format!("column {j} is {h:?}, expected \"x{j}\"")));
        }
    }
    let dim = headers.len();
    let mut points = Vec::new();
    for rec in rdr.records() {
        points.push(parse_row(&rec?, "dataset csv")?);
    }
    Ok(Dataset::from_points(dim, points)?)
}

fn parse_row(rec: &csv::StringRecord, what: &'static str) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| s.trim().parse::<f64>().map_err(|e| HarnessError::format(what, format!("{s:?}: {e}"))))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelFile {
    n: usize,
    entries: Vec<Vec<f64>>,
}

pub fn write_kernel_json<W: Write>(k: &KernelMatrix, w: W) -> Result<()> {
    let file = KernelFile { n: k.n(), entries: (0..k.n()).map(|i| k.row(i).to_vec()).collect() };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

pub fn read_kernel_json<R: Read>(r: R) -> Result<KernelMatrix> {
    let file: KernelFile = serde_json::from_reader(r)?;
    if file.entries.len() != file.n || file.entries.iter().any(|row| row.len() != file.n) {
        return Err(HarnessError::format("kernel json", format!("entries are not {0}×{0}", file.n)));
    }
    Ok(KernelMatrix::new(file.n, file.entries.concat())?)
}

pub fn write_kernel_csv<W: Write>(k: &KernelMatrix, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..k.n() {
        out.write_record(k.row(i).iter().map(|&v| fmt_f64(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_kernel_csv<R: Read>(r: R) -> Result<KernelMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut entries = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        entries.extend(parse_row(&rec?, "kernel csv")?);
        rows += 1;
    }
    if entries.len() != rows * rows {
        return Err(HarnessError::format("kernel csv", format!("{rows} rows but {} entries", entries.len())));
    }
    Ok(KernelMatrix::new(rows, entries)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenFile {
    pub lambda_min: f64,
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
}

impl From<EigenReport> for EigenFile {
    fn from(r: EigenReport) -> Self {
        EigenFile { lambda_min: r.lambda_min, clamped: r.clamped, raw: Some(r.raw) }
    }
}

pub fn write_eigen_json<W: Write>(r: EigenReport, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &EigenFile::from(r))?;
    Ok(())
}

pub fn write_spectrum_csv<'a, W: Write>(tables: impl IntoIterator<Item = &'a SpectrumTable>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["activation", "d", "r", "c_rd"])?;
    for t in tables {
        for (r, c) in t.coeffs().iter().enumerate() {
            out.write_record([t.activation().name().to_string(), t.dim().to_string(), r.to_string(), fmt_f64(*c)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_bound_report_json<W: Write>(r: &BoundReport, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, r)?;
    Ok(())
}

/// Parameters of either architecture. A shallow network is stored as
/// widths `[d0, d1, 1]` with layers `W` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Shallow(ShallowParams),
    Deep(DeepParams),
}

const MAGIC: &[u8; 4] = b"NTKP";
const FORMAT_VERSION: u32 = 1;

impl Params {
    fn parts(&self) -> (u8, Vec<usize>, u64, Vec<&[f64]>) {
        match self {
            Params::Shallow(p) => (0, vec![p.d0, p.d1, 1], p.seed, vec![&p.w, &p.v]),
            Params::Deep(p) => (1, p.widths.clone(), p.seed, p.weights.iter().map(Vec::as_slice).collect()),
        }
    }

    fn from_parts(kind: u8, widths: Vec<usize>, seed: u64, mut weights: Vec<Vec<f64>>) -> Result<Self> {
        match kind {
            0 => {
                if widths.len() != 3 || widths[2] != 1 || weights.len() != 2 {
                    return Err(HarnessError::format("params", "shallow parameters need widths [d0, d1, 1]"));
                }
                let v = weights.pop().unwrap_or_default();
                let w = weights.pop().unwrap_or_default();
                let mut p = ShallowParams::from_parts(widths[0], w, v)?;
                p.seed = seed;
                Ok(Params::Shallow(p))
            }
            1 => {
                let mut p = DeepParams::from_weights(widths, weights)?;
                p.seed = seed;
                Ok(Params::Deep(p))
            }
            k => Err(HarnessError::format("params", format!("unknown kind tag {k}"))),
        }
    }
}

/// Binary layout, all little-endian:
///
/// ```text
/// "NTKP" | u32 version | u8 kind (0 shallow, 1 deep) | u64 seed
///        | u32 count | count × u64 widths | f64 weights, layer by layer, row-major
/// ```
pub fn write_params_binary<W: Write>(p: &Params, mut w: W) -> Result<()> {
    let (kind, widths, seed, layers) = p.parts();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[kind])?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&(widths.len() as u32).to_le_bytes())?;
    for &d in &widths {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for layer in layers {
        for &x in layer {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_params_binary<R: Read>(mut r: R) -> Result<Params> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HarnessError::format("params", "bad magic"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(HarnessError::format("params", format!("unsupported version {version}")));
    }
    let [kind] = read_array::<1>(&mut r)?;
    let seed = u64::from_le_bytes(read_array(&mut r)?);
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if !(2..=64).contains(&count) {
        return Err(HarnessError::format("params", format!("implausible width count {count}")));
    }
    let widths = (0..count)
        .map(|_| read_array(&mut r).map(|b| u64::from_le_bytes(b) as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(count - 1);
    for pair in widths.windows(2) {
        let len = pair[0].checked_mul(pair[1]).ok_or_else(|| HarnessError::format("params", "layer size overflows"))?;
        let mut bytes = Vec::new();
        r.by_ref().take(len as u64 * 8).read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(HarnessError::format("params", "truncated weights"));
        }
        weights.push(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    Params::from_parts(kind, widths, seed, weights)
}

fn read_array<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ParamsKind {
    Shallow,
    Deep,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    kind: ParamsKind,
    widths: Vec<usize>,
    seed: u64,
    weights: Vec<Vec<f64>>,
}

pub fn write_params_json<W: Write>(p: &Params, w: W) -> Result<()> {
    let (kind, widths, seed, layers) = p.parts();
    let file = ParamsFile {
        kind: if kind == 0 { ParamsKind::Shallow } else { ParamsKind::Deep },
        widths,
        seed,
        weights: layers.into_iter().map(<[f64]>::to_vec).collect(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn read_params_json<R: Read>(r: R) -> Result<Params> {
    let file: ParamsFile = serde_json::from_reader(r)?;
    let kind = match file.kind {
        ParamsKind::Shallow => 0,
        ParamsKind::Deep => 1,
    };
    Params::from_parts(kind, file.widths, file.seed, file.weights)
}

/// One row per (layer, quantity). Per-point quantities carry the point
/// index in brackets, e.g. `feature_ratio[3]`.
pub fn write_layer_trace_csv<W: Write>(p: &DeepParams, trace: &LayerTrace, data: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["layer", "quantity", "value"])?;
    let depth = p.depth();
    let mut row = |layer: usize, quantity: String, value: f64| out.write_record([layer.to_string(), quantity, fmt_f64(value)]);
    for l in 1..depth {
        let width = p.widths[l] as f64;
        for i in 0..data.n() {
            let f = trace.feature(l, i);
            let active = f.iter().filter(|&&v| v > 0.0).count() as f64;
            let norm_sq: f64 = f.iter().map(|v| v * v).sum();
            row(l, format!("feature_ratio[{i}]"), norm_sq / ntk::feature_scale(&p.widths, l))?;
            row(l, format!("active_fraction[{i}]"), active / width)?;
        }
    }
    for (i, x) in data.iter().enumerate() {
        for b in ntk::backprop_norm_profile(p, x)? {
            let scale = ntk::backprop_scale(&p.widths, b.layer);
            row(b.layer, format!("s_w_ratio[{i}]"), b.s_w_sq / scale)?;
            row(b.layer, format!("s_frobenius_ratio[{i}]"), b.frobenius_sq / scale)?;
            row(b.layer, format!("s_operator_sq[{i}]"), b.operator_sq)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ntk_eigen_core::sphere::sample_uniform_sphere;

    #[test]
    fn dataset_round_trips_bit_exactly() {
        let data = sample_uniform_sphere(4, 7, 3).unwrap();
        let mut buf = Vec::new();
        write_dataset_json(&data, &mut buf).unwrap();
        assert_eq!(read_dataset_json(buf.as_slice()).unwrap(), data);
        buf.clear();
        write_dataset_csv(&data, &mut buf).unwrap();
        assert!(buf.starts_with(b"x0,x1,x2,x3\n"));
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn dataset_rejects_ragged_and_non_unit() {
        assert!(read_dataset_json(br#"{"dim":2,"points":[[1,0],[0]]}"#.as_slice()).is_err());
        assert!(read_dataset_json(br#"{"dim":2,"points":[[1,1]]}"#.as_slice()).is_err());
        assert!(read_dataset_csv(b"a,b\n1,0\n".as_slice()).is_err());
    }

    #[test]
    fn kernel_round_trips() {
        let k = KernelMatrix::new(2, vec![2.0, 0.1, 0.1, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_kernel_json(&k, &mut buf).unwrap();
        assert_eq!(read_kernel_json(buf.as_slice()).unwrap(), k);
        buf.clear();
        write_kernel_csv(&k, &mut buf).unwrap();
        assert_eq!(read_kernel_csv(buf.as_slice()).unwrap(), k);
        assert!(read_kernel_csv(b"1,2\n2\n".as_slice()).is_err());
    }

    #[test]
    fn params_round_trip_both_formats() {
        for p in [Params::Shallow(ntk::init_shallow(3, 5, 9).unwrap()), Params::Deep(ntk::init_deep(&[3, 4, 2, 1], 9).unwrap())] {
            let mut buf = Vec::new();
            write_params_binary(&p, &mut buf).unwrap();
            assert_eq!(&buf[..4], b"NTKP");
            assert_eq!(read_params_binary(buf.as_slice()).unwrap(), p);
            buf.clear();
            write_params_json(&p, &mut buf).unwrap();
            assert_eq!(read_params_json(buf.as_slice()).unwrap(), p);
        }
    }

    #[test]
    fn params_binary_rejects_truncation() {
        let mut buf = Vec::new();
        write_params_binary(&Params::Deep(ntk::init_deep(&[2, 3, 1], 1).unwrap()), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_params_binary(buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_params_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn eigen_json_has_contract_fields() {
        let mut buf = Vec::new();
        write_eigen_json(EigenReport::from_raw(-1e-15), &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["lambda_min"], 0.0);
        assert_eq!(v["clamped"], true);
    }
}
