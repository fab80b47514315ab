//! Per-iteration and per-epoch run records and their CSV form.
//!
//! Iteration CSV columns: `k,epoch,minibatch_loss,grad_norm,alpha,lambda_k,Lambda_k,flush,wall_ms`
//!
//! * `minibatch_loss`: mean loss over the batch at `x_k`
//! * `grad_norm`: `‖g̃_k‖`, the norm of the gradient estimate the step used
//! * `lambda_k`, `Lambda_k`: eigenvalue bounds of the operator applied at step `k`
//! * `flush`: 1 when pairs were discarded before step `k`
//! * `wall_ms`: milliseconds since the run started (0 when timing is off)
//!
//! Epoch CSV columns: `epoch,full_loss,full_grad_norm,val_metric`. Row 0
//! describes the starting point; `val_metric` is empty when the problem
//! has none. Floats use Rust's shortest round-trip formatting.

use std::io::{self, Write};

use crate::optimizer::Method;

pub const ITER_CSV_HEADER: &str = "k,epoch,minibatch_loss,grad_norm,alpha,lambda_k,Lambda_k,flush,wall_ms";
pub const EPOCH_CSV_HEADER: &str = "epoch,full_loss,full_grad_norm,val_metric";

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: u64,
    pub epoch: usize,
    pub minibatch_loss: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub flush: bool,
    /// Pairs in the operator that produced the step.
    pub memory_len: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub full_loss: f64,
    pub full_grad_norm: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub method: Method,
    pub iters: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
    pub final_x: Vec<f64>,
}

impl RunTrace {
    pub fn new(method: Method) -> Self {
        Self { method, iters: Vec::new(), epochs: Vec::new(), final_x: Vec::new() }
    }

    pub fn flush_count(&self) -> usize {
        self.iters.iter().filter(|r| r.flush).count()
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn max_upper_bound(&self) -> f64 {
        self.iters.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.lambda_hi))
    }

    pub fn min_lower_bound(&self) -> f64 {
        self.iters.iter().fold(f64::INFINITY, |m, r| m.min(r.lambda_lo))
    }

    pub fn write_iter_csv<W: Write>(&self, mut w: W, timing: bool) -> io::Result<()> {
        writeln!(w, "{ITER_CSV_HEADER}")?;
        for r in &self.iters {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.3}",
                r.k,
                r.epoch,
                r.minibatch_loss,
                r.grad_norm,
                r.alpha,
                r.lambda_lo,
                r.lambda_hi,
                u8::from(r.flush),
                if timing { r.wall_ms } else { 0.0 }
            )?;
        }
        Ok(())
    }

    pub fn write_epoch_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{EPOCH_CSV_HEADER}")?;
        for e in &self.epochs {
            write!(w, "{},{},{},", e.epoch, e.full_loss, e.full_grad_norm)?;
            match e.val_metric {
                Some(v) => writeln!(w, "{v}")?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = RunTrace::new(Method::Varchen);
        t.iters.push(IterRecord {
            k: 0,
            epoch: 1,
            minibatch_loss: 0.5,
            grad_norm: 2.0,
            alpha: 0.1,
            lambda_lo: 1.0,
            lambda_hi: f64::INFINITY,
            flush: true,
            memory_len: 1,
            wall_ms: 12.3456,
        });
        t.epochs.push(EpochRecord { epoch: 0, full_loss: 1.0, full_grad_norm: 3.0, val_metric: None });
        t.epochs.push(EpochRecord { epoch: 1, full_loss: 0.5, full_grad_norm: 1.0, val_metric: Some(0.75) });
        let mut buf = Vec::new();
        t.write_iter_csv(&mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{ITER_CSV_HEADER}\n0,1,0.5,2,0.1,1,inf,1,12.346\n"));
        let mut buf = Vec::new();
        t.write_iter_csv(&mut buf, false).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with(",0.000\n"));
        let mut buf = Vec::new();
        t.write_epoch_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{EPOCH_CSV_HEADER}\n0,1,3,\n1,0.5,1,0.75\n"));
    }
}
