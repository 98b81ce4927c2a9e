//! CSV artifacts. Every file has a fixed header; reals are written with
//! nine significant digits in scientific notation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::autodiff::{predict, residuals};
use crate::error::{GasError, Result};
use crate::metrics::RoundMetrics;
use crate::network::{save_checkpoint, MlpParams};
use crate::pde::PdeProblem;
use crate::points::BoxDomain;
use crate::trainer::{Adaptation, RoundObserver};

pub const METRICS_HEADER: &str = "round,interior,boundary,fns,ans,loss,mse,rel_l2";
pub const FIELD_HEADER: &str = "x1,x2,u_pred,u_exact,abs_err,residual";

pub fn fmt_real(v: f64) -> String {
    format!("{v:.8e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn metrics_row(m: &RoundMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        m.round,
        m.interior,
        m.boundary,
        m.fns,
        m.ans,
        fmt_real(m.loss),
        fmt_opt(m.mse),
        fmt_opt(m.rel_l2)
    )
}

pub fn sampler_header(dim: usize) -> String {
    let mut h = String::from("round,component_id");
    for k in 1..=dim {
        h.push_str(&format!(",mean_{k}"));
    }
    for k in 1..=dim {
        h.push_str(&format!(",var_{k}"));
    }
    h.push_str(",n_drawn");
    h
}

pub fn added_points_header(dim: usize) -> String {
    let mut h = String::from("round");
    for k in 1..=dim {
        h.push_str(&format!(",x{k}"));
    }
    h.push_str(",component_id");
    h
}

fn join_reals(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",")
}

/// Rows of `x1,x2,u_pred,u_exact,abs_err,residual` over the `grid_n²`
/// lattice on `[-1, 1]²`, last coordinate fastest.
pub fn field_rows(params: &MlpParams, problem: &PdeProblem, grid_n: usize) -> Result<Vec<[f64; 6]>> {
    if problem.dim != 2 || params.input_dim() != 2 {
        return Err(GasError::InvalidArgument("field export needs a 2-D problem".into()));
    }
    let lattice = BoxDomain::lattice(2, grid_n, 1.0);
    let u = predict(params, &lattice)?;
    let r = residuals(params, problem, &lattice)?;
    Ok(lattice
        .iter()
        .zip(u.iter().zip(&r))
        .map(|(x, (&up, &rv))| {
            let ue = problem.exact_solution(x);
            [x[0], x[1], up, ue, (up - ue).abs(), rv]
        })
        .collect())
}

pub fn write_field_csv(path: &Path, rows: &[[f64; 6]]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{FIELD_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", join_reals(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `sampler_log.csv`, `added_points.csv` and one
/// checkpoint per round into a directory, flushing after every stage.
pub struct ArtifactWriter {
    dir: PathBuf,
    metrics: BufWriter<File>,
    sampler: BufWriter<File>,
    added: BufWriter<File>,
    pub checkpoints: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path, dim: usize) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(metrics, "{METRICS_HEADER}")?;
        let mut sampler = BufWriter::new(File::create(dir.join("sampler_log.csv"))?);
        writeln!(sampler, "{}", sampler_header(dim))?;
        let mut added = BufWriter::new(File::create(dir.join("added_points.csv"))?);
        writeln!(added, "{}", added_points_header(dim))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            sampler,
            added,
            checkpoints: Vec::new(),
        })
    }

    pub fn checkpoint_path(&self, round: usize) -> PathBuf {
        self.dir.join("checkpoints").join(format!("round_{round:03}.json"))
    }
}

impl RoundObserver for ArtifactWriter {
    fn on_round(&mut self, m: &RoundMetrics, params: &MlpParams, _trace: &[f64]) -> Result<()> {
        writeln!(self.metrics, "{}", metrics_row(m))?;
        self.metrics.flush()?;
        let path = self.checkpoint_path(m.round);
        save_checkpoint(params, &path)?;
        self.checkpoints.push(path);
        Ok(())
    }

    fn on_adaptation(&mut self, a: &Adaptation) -> Result<()> {
        for row in &a.sampler_log {
            writeln!(
                self.sampler,
                "{},{},{},{},{}",
                row.round,
                row.component_id,
                join_reals(&row.mean),
                join_reals(&row.variances),
                row.n_drawn
            )?;
        }
        self.sampler.flush()?;
        for (i, p) in a.added.iter().enumerate() {
            // -1 marks uniform draws.
            let id = a
                .component_ids
                .as_ref()
                .map(|ids| ids[i] as i64)
                .unwrap_or(-1);
            writeln!(self.added, "{},{},{}", a.round, join_reals(p), id)?;
        }
        self.added.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_real(1.0e-5), "1.00000000e-5");
        assert_eq!(fmt_real(1234.5678912345), "1.23456789e3");
        assert_eq!(fmt_real(-0.5), "-5.00000000e-1");
    }

    #[test]
    fn headers() {
        assert_eq!(sampler_header(2), "round,component_id,mean_1,mean_2,var_1,var_2,n_drawn");
        assert_eq!(added_points_header(2), "round,x1,x2,component_id");
    }

    #[test]
    fn metrics_row_leaves_missing_columns_empty() {
        let m = RoundMetrics {
            round: 9,
            interior: 5000,
            boundary: 2000,
            fns: 5000,
            ans: 27500,
            loss: 0.25,
            mse: Some(1e-5),
            rel_l2: None,
        };
        assert_eq!(
            metrics_row(&m),
            "9,5000,2000,5000,27500,2.50000000e-1,1.00000000e-5,"
        );
    }
}
