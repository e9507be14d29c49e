use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use cds_core::diffcore::Tensor;
use cds_core::trainers::IterRecord;
use serde::{Deserialize, Serialize};

const METRICS_HEADER: [&str; 6] = [
    "iter",
    "loss_s",
    "loss_sc",
    "grad_norm",
    "nfe_cum",
    "wall_ms",
];

/// Streams training metrics (`iter,loss_s,loss_sc,grad_norm,nfe_cum,wall_ms`).
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(METRICS_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &IterRecord) -> Result<()> {
        self.inner.write_record([
            r.iter.to_string(),
            r.loss_s.to_string(),
            r.loss_sc.to_string(),
            r.grad_norm.to_string(),
            r.nfe_cum.to_string(),
            r.wall_ms.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_metrics_csv(path: &Path, records: &[IterRecord]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

/// One sample per row, header `x1,...,xd`.
pub fn write_samples_csv(path: &Path, samples: &Tensor) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record((1..=samples.cols()).map(|j| format!("x{j}")))?;
    for i in 0..samples.rows() {
        w.write_record(samples.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Tensor> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            bail!(
                "row {} has {} fields, expected {}",
                rows + 1,
                rec.len(),
                cols
            );
        }
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad number '{field}'"))?,
            );
        }
        rows += 1;
    }
    Ok(Tensor::matrix(rows, cols, data)?)
}

/// One evaluation result (`target,sampler,nfe,metric,value,n,seed,converged`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub target: String,
    pub sampler: String,
    pub nfe: usize,
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
    /// Empty for metrics without an iterative solver.
    pub converged: Option<bool>,
}

/// Results CSV, optionally preceded by `# ` note lines.
pub struct ResultsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl ResultsWriter {
    pub fn create(path: &Path, notes: &[String]) -> Result<Self> {
        let mut file = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        for note in notes {
            writeln!(file, "# {note}")?;
        }
        Ok(Self {
            inner: csv::Writer::from_writer(file),
        })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}
