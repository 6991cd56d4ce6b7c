use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sgs::complex::ComplexFile;
use sgs::optim::OptimizerTrace;
use sgs::{Barcode, FilterVector, SimplicialComplex};

pub fn read_complex(path: &Path) -> Result<SimplicialComplex> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ComplexFile =
        serde_json::from_str(&text).with_context(|| format!("parsing complex {}", path.display()))?;
    SimplicialComplex::try_from(file).with_context(|| format!("invalid complex {}", path.display()))
}

/// A JSON array of numbers, or CSV values (any mix of commas and newlines).
pub fn read_filter(path: &Path) -> Result<FilterVector> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values: Vec<f64> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).with_context(|| format!("parsing filter {}", path.display()))?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut out = Vec::new();
        for record in reader.records() {
            for field in record?.iter().filter(|f| !f.is_empty()) {
                out.push(
                    field
                        .parse()
                        .with_context(|| format!("parsing filter value {field:?}"))?,
                );
            }
        }
        out
    };
    FilterVector::new(values).with_context(|| format!("invalid filter {}", path.display()))
}

pub fn read_diagram(path: &Path) -> Result<Barcode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let b: Barcode =
        serde_json::from_str(&text).with_context(|| format!("parsing diagram {}", path.display()))?;
    if let Some(i) = b.intervals().iter().find(|i| i.birth.is_nan() || i.death.is_nan()) {
        bail!("diagram {} has a NaN endpoint: {i:?}", path.display());
    }
    Ok(b)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct TraceRow {
    k: usize,
    f: f64,
    g_norm: f64,
    eps_k: f64,
    t_k: f64,
    #[serde(rename = "C_k")]
    c_k: Option<f64>,
    strata: usize,
    wall_ms: f64,
}

pub fn write_trace(path: &Path, trace: &OptimizerTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    if trace.records.is_empty() {
        w.write_record(["k", "f", "g_norm", "eps_k", "t_k", "C_k", "strata", "wall_ms"])?;
    }
    for r in &trace.records {
        w.serialize(TraceRow {
            k: r.k,
            f: r.f,
            g_norm: r.g_norm,
            eps_k: r.eps_k,
            t_k: r.t_k,
            c_k: r.c_k.is_finite().then_some(r.c_k),
            strata: r.strata,
            wall_ms: r.wall_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}
