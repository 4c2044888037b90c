//! Output tables. Every file is staged in a temporary directory inside the
//! output directory and renamed into place only after all files are written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use panel_trend::ingest::Measure;
use panel_trend::panel::Panel;
use panel_trend::pipeline::EstimationReport;
use panel_trend::trend::RollingRow;
use serde::Serialize;
use tempfile::TempDir;

pub struct Staged {
    dir: TempDir,
    out: PathBuf,
    files: Vec<&'static str>,
}

impl Staged {
    pub fn new(out: &Path) -> Result<Staged> {
        let dir = tempfile::Builder::new()
            .prefix(".panel-trend-")
            .tempdir_in(out)
            .with_context(|| format!("staging in {}", out.display()))?;
        Ok(Staged {
            dir,
            out: out.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(
        &mut self,
        name: &'static str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = self.dir.path().join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w).with_context(|| format!("writing {name}"))?;
        w.flush()?;
        self.files.push(name);
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        for name in &self.files {
            let target = self.out.join(name);
            std::fs::rename(self.dir.path().join(name), &target)
                .with_context(|| format!("moving {name} into {}", self.out.display()))?;
        }
        Ok(())
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

pub fn a_hat_csv<W: Write>(w: W, report: &EstimationReport, case: &str, measure: Measure) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["region", "measure", "case", "bandwidth", "h", "a_hat"])?;
    for b in &report.bandwidths {
        out.write_record([
            report.region.code(),
            measure.as_str(),
            case,
            b.label,
            &num(b.h),
            &num(b.a_hat),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `t` is the 1-based period of the earlier eigenvalue in `R_{t+1,t}`,
/// `c_index` its 1-based position in the evaluation set.
pub fn r_series_csv<W: Write>(w: W, report: &EstimationReport, panel: &Panel) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "c_index", "date", "r"])?;
    let c_first = report.c_set[0];
    for e in &report.r_series.entries {
        let t = e.t + 1;
        out.write_record([
            t.to_string(),
            (report.c_set.binary_search(&t).map_or(t + 1 - c_first, |k| k + 1)).to_string(),
            panel.time_labels()[e.t].to_string(),
            num(e.r),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per period and unit; `q` is blank where the reference loading vanishes.
pub fn q_series_csv<W: Write>(w: W, report: &EstimationReport, panel: &Panel) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "u", "date", "unit", "reference", "q"])?;
    for col in &report.q_series {
        let date = panel.time_labels()[col.t].to_string();
        for (i, id) in panel.unit_ids().iter().enumerate() {
            out.write_record([
                (col.t + 1).to_string(),
                num(col.u),
                date.clone(),
                id.clone(),
                report.reference.clone(),
                opt(col.values.as_ref().map(|v| v[i])),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn rolling_csv<W: Write>(w: W, rows: &[RollingRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["end_date", "a_hat", "r_bar", "h", "n_units", "status"])?;
    for r in rows {
        out.write_record([
            r.end_date.to_string(),
            opt(r.a_hat),
            opt(r.r_bar),
            opt(r.h),
            r.n_units.to_string(),
            r.status.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}
