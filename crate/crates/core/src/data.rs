//! Observational datasets: covariates, binary treatment, observed outcome,
//! and (for synthetic data) both potential outcomes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CcnError, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_bit(t: u8) -> Result<Arm> {
        match t {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            other => Err(CcnError::InvalidData(format!("treatment must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    p: usize,
    covariates: Vec<S>,
    treatment: Vec<u8>,
    outcome: Vec<S>,
    potential: Option<[Vec<S>; 2]>,
}

impl<S: Real> Dataset<S> {
    /// `covariates` is row-major `n x p`.
    pub fn new(covariates: Vec<S>, p: usize, treatment: Vec<u8>, outcome: Vec<S>) -> Result<Self> {
        let n = outcome.len();
        if p == 0 {
            return Err(CcnError::InvalidData("covariate dimension must be positive".into()));
        }
        if covariates.len() != n * p {
            return Err(CcnError::DimensionMismatch {
                context: "covariate matrix",
                expected: n * p,
                actual: covariates.len(),
            });
        }
        if treatment.len() != n {
            return Err(CcnError::DimensionMismatch {
                context: "treatment vector",
                expected: n,
                actual: treatment.len(),
            });
        }
        if let Some(t) = treatment.iter().find(|&&t| t > 1) {
            return Err(CcnError::InvalidData(format!("treatment must be 0 or 1, got {t}")));
        }
        if covariates.iter().chain(&outcome).any(|v| !v.is_finite()) {
            return Err(CcnError::InvalidData("NaN or infinite value in data".into()));
        }
        Ok(Dataset { p, covariates, treatment, outcome, potential: None })
    }

    /// Attaches both potential outcomes. The observed outcome must agree
    /// with the potential outcome of the assigned arm.
    pub fn with_potential_outcomes(mut self, y0: Vec<S>, y1: Vec<S>) -> Result<Self> {
        if y0.len() != self.n() || y1.len() != self.n() {
            return Err(CcnError::DimensionMismatch {
                context: "potential outcomes",
                expected: self.n(),
                actual: y0.len().min(y1.len()),
            });
        }
        for i in 0..self.n() {
            let y = if self.treatment[i] == 1 { y1[i] } else { y0[i] };
            if y != self.outcome[i] {
                return Err(CcnError::InvalidData(format!(
                    "row {i}: observed outcome differs from its potential outcome"
                )));
            }
        }
        self.potential = Some([y0, y1]);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn covariates(&self) -> &[S] {
        &self.covariates
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn arm(&self, i: usize) -> Arm {
        if self.treatment[i] == 1 {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn outcome(&self) -> &[S] {
        &self.outcome
    }

    pub fn potential_outcome(&self, arm: Arm, i: usize) -> Option<S> {
        self.potential.as_ref().map(|p| p[arm.index()][i])
    }

    pub fn potential_outcomes(&self) -> Option<&[Vec<S>; 2]> {
        self.potential.as_ref()
    }

    pub fn indices_of(&self, arm: Arm) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.arm(i) == arm).collect()
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.treatment.iter().filter(|&&t| t as usize == arm.index()).count()
    }

    /// Both arms must be observed for either conditional CDF to be learnable.
    pub fn require_both_arms(&self) -> Result<()> {
        for arm in Arm::BOTH {
            if self.arm_count(arm) == 0 {
                return Err(CcnError::EmptyArm { arm: arm.index() as u8 });
            }
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset<S> {
        let mut cov = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            cov.extend_from_slice(self.row(i));
        }
        Dataset {
            p: self.p,
            covariates: cov,
            treatment: idx.iter().map(|&i| self.treatment[i]).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
            potential: self
                .potential
                .as_ref()
                .map(|[a, b]| [idx.iter().map(|&i| a[i]).collect(), idx.iter().map(|&i| b[i]).collect()]),
        }
    }

    /// Replaces the treatment column and re-derives the observed outcome from
    /// the potential outcomes.
    pub fn reassign(&self, treatment: Vec<u8>) -> Result<Dataset<S>> {
        let pot = self
            .potential
            .as_ref()
            .ok_or_else(|| CcnError::InvalidData("reassigning treatment needs both potential outcomes".into()))?;
        let outcome = treatment.iter().enumerate().map(|(i, &t)| pot[(t == 1) as usize][i]).collect();
        let d = Dataset::new(self.covariates.clone(), self.p, treatment, outcome)?;
        d.with_potential_outcomes(pot[0].clone(), pot[1].clone())
    }

    /// Appends extra covariate columns (row-major `n x extra`).
    pub fn append_columns(&self, extra: &[S], extra_p: usize) -> Result<Dataset<S>> {
        if extra.len() != self.n() * extra_p {
            return Err(CcnError::DimensionMismatch {
                context: "appended columns",
                expected: self.n() * extra_p,
                actual: extra.len(),
            });
        }
        let p = self.p + extra_p;
        let mut cov = Vec::with_capacity(self.n() * p);
        for i in 0..self.n() {
            cov.extend_from_slice(self.row(i));
            cov.extend_from_slice(&extra[i * extra_p..(i + 1) * extra_p]);
        }
        Ok(Dataset {
            p,
            covariates: cov,
            treatment: self.treatment.clone(),
            outcome: self.outcome.clone(),
            potential: self.potential.clone(),
        })
    }

    pub fn cast<T: Real>(&self) -> Dataset<T> {
        let conv = |v: &[S]| v.iter().map(|x| T::c(x.to_f64_lossy())).collect::<Vec<T>>();
        Dataset {
            p: self.p,
            covariates: conv(&self.covariates),
            treatment: self.treatment.clone(),
            outcome: conv(&self.outcome),
            potential: self.potential.as_ref().map(|[a, b]| [conv(a), conv(b)]),
        }
    }

    /// FNV-1a over the bit patterns of every field; equal checksums mean
    /// identical datasets for all practical purposes.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        eat(&(self.p as u64).to_le_bytes());
        for v in self.covariates.iter().chain(&self.outcome) {
            eat(&v.to_f64_lossy().to_bits().to_le_bytes());
        }
        eat(&self.treatment);
        if let Some([a, b]) = &self.potential {
            for v in a.iter().chain(b) {
                eat(&v.to_f64_lossy().to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Observed data as CSV with header `x1..xp,t,y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        header.push("t".into());
        header.push("y".into());
        wr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| fmt_real(*v)).collect();
            rec.push(self.treatment[i].to_string());
            rec.push(fmt_real(self.outcome[i]));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Potential outcomes as CSV with header `y0,y1`, row-aligned with
    /// [`Dataset::write_csv`].
    pub fn write_potential_csv<W: Write>(&self, w: W) -> Result<()> {
        let pot =
            self.potential.as_ref().ok_or_else(|| CcnError::InvalidData("dataset has no potential outcomes".into()))?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["y0", "y1"])?;
        for (y0, y1) in pot[0].iter().zip(&pot[1]) {
            wr.write_record([fmt_real(*y0), fmt_real(*y1)])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset<S>> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let p = cols.len().saturating_sub(2);
        let expected: Vec<String> =
            (1..=p).map(|j| format!("x{j}")).chain(["t".to_string(), "y".to_string()]).collect();
        if p == 0 || cols != expected {
            return Err(CcnError::InvalidData(format!("CSV header must be x1..xp,t,y; found {}", cols.join(","))));
        }
        let mut cov = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            for j in 0..p {
                cov.push(parse_real(&rec[j])?);
            }
            t.push(
                rec[p]
                    .trim()
                    .parse::<u8>()
                    .map_err(|e| CcnError::InvalidData(format!("treatment `{}`: {e}", &rec[p])))?,
            );
            y.push(parse_real(&rec[p + 1])?);
        }
        Dataset::new(cov, p, t, y)
    }

    pub fn read_potential_csv<R: Read>(self, r: R) -> Result<Dataset<S>> {
        let mut rd = csv::Reader::from_reader(r);
        let mut y0 = Vec::new();
        let mut y1 = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            y0.push(parse_real(&rec[0])?);
            y1.push(parse_real(&rec[1])?);
        }
        self.with_potential_outcomes(y0, y1)
    }
}

fn fmt_real<S: Real>(v: S) -> String {
    // `{:?}` on f64 prints the shortest string that round-trips.
    format!("{:?}", v.to_f64_lossy())
}

fn parse_real<S: Real>(s: &str) -> Result<S> {
    s.trim().parse::<f64>().map(S::c).map_err(|e| CcnError::InvalidData(format!("number `{s}`: {e}")))
}

/// Per-column affine standardization fitted on training covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<S: Real>(data: &Dataset<S>) -> Standardizer {
        let (n, p) = (data.n() as f64, data.p());
        let mut mean = vec![0.0; p];
        for i in 0..data.n() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v.to_f64_lossy() / n;
            }
        }
        let mut var = vec![0.0; p];
        for i in 0..data.n() {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v.to_f64_lossy() - m).powi(2) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn identity(p: usize) -> Standardizer {
        Standardizer { mean: vec![0.0; p], scale: vec![1.0; p] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into<S: Real>(&self, x: &[S], out: &mut [S]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (*v - S::c(*m)) / S::c(*s);
        }
    }

    pub fn apply<S: Real>(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); x.len()];
        self.apply_into(x, &mut out);
        out
    }
}
