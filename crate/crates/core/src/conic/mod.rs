//! Hermitian semidefinite programs.
//!
//! An [`SdpProblem`] has Hermitian PSD matrix blocks and non-negative scalar
//! variables, a real-linear objective and real-linear constraints written
//! with trace inner products `<A, X> = Re tr(A X)`. Coefficient matrices are
//! kept in structured form ([`HermCoeff`]) so that the solver can exploit
//! rank-one, diagonal and sparse terms.
//!
//! [`solve`] maps the problem to a real-symmetric cone program through the
//! embedding `X -> [[Re X, -Im X], [Im X, Re X]]` and runs a primal-dual
//! interior-point method on it.

pub mod dump;
pub mod embed;
pub mod evd;
mod ipm;

use nalgebra::DVector;
use thiserror::Error;

use crate::{CMatrix, CVector, Complex64};

pub use embed::embed_hermitian;
pub use evd::{dominant_eigenpair, evd_rank1, rank_ratio};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("coefficient for block {block} has dimension {got}, expected {expected}")]
    Dimension { block: usize, got: usize, expected: usize },
    #[error("unknown {kind} index {index}")]
    UnknownIndex { kind: &'static str, index: usize },
    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("non-finite data in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScalarId(pub usize);

/// A Hermitian coefficient matrix as a sum of structured terms:
/// `sum_r c_r v_r v_r^H + diag(d) + E + D` where `E` is given by its upper
/// triangle and `D` is dense.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HermCoeff {
    pub rank_one: Vec<(f64, CVector)>,
    pub diag: Option<DVector<f64>>,
    /// `(i, j, v)` with `i <= j`; the `(j, i)` entry is `conj(v)`.
    pub entries: Vec<(usize, usize, Complex64)>,
    pub dense: Option<CMatrix>,
}

impl HermCoeff {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank_one(mut self, c: f64, v: CVector) -> Self {
        self.rank_one.push((c, v));
        self
    }

    pub fn diagonal(mut self, d: DVector<f64>) -> Self {
        self.diag = Some(match self.diag.take() {
            Some(old) => old + d,
            None => d,
        });
        self
    }

    /// Adds `v` at `(i, j)` and `conj(v)` at `(j, i)`. Diagonal entries keep
    /// only the real part.
    pub fn entry(mut self, i: usize, j: usize, v: Complex64) -> Self {
        if i <= j {
            self.entries.push((i, j, v));
        } else {
            self.entries.push((j, i, v.conj()));
        }
        self
    }

    pub fn dense(mut self, a: CMatrix) -> Self {
        self.dense = Some(match self.dense.take() {
            Some(old) => old + a,
            None => a,
        });
        self
    }

    /// Copy with every term multiplied by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        for (c, _) in &mut self.rank_one {
            *c *= s;
        }
        if let Some(d) = &mut self.diag {
            *d *= s;
        }
        for e in &mut self.entries {
            e.2 *= s;
        }
        if let Some(a) = &mut self.dense {
            *a *= Complex64::new(s, 0.0);
        }
        self
    }

    /// Identity of size `d`.
    pub fn identity(d: usize) -> Self {
        Self::new().diagonal(DVector::from_element(d, 1.0))
    }

    pub fn is_empty(&self) -> bool {
        self.rank_one.is_empty() && self.diag.is_none() && self.entries.is_empty() && self.dense.is_none()
    }

    /// Materializes the coefficient as a dense `d x d` matrix.
    pub fn to_dense(&self, d: usize) -> CMatrix {
        let mut a = self.dense.clone().unwrap_or_else(|| CMatrix::zeros(d, d));
        for (c, v) in &self.rank_one {
            a += v * v.adjoint() * Complex64::new(*c, 0.0);
        }
        if let Some(diag) = &self.diag {
            for i in 0..d {
                a[(i, i)] += diag[i];
            }
        }
        for &(i, j, v) in &self.entries {
            if i == j {
                a[(i, i)] += v.re;
            } else {
                a[(i, j)] += v;
                a[(j, i)] += v.conj();
            }
        }
        a
    }

    /// `Re tr(A X)` for a Hermitian `X`.
    pub fn inner(&self, x: &CMatrix) -> f64 {
        let mut acc = 0.0;
        for (c, v) in &self.rank_one {
            acc += c * (v.adjoint() * x * v)[(0, 0)].re;
        }
        if let Some(d) = &self.diag {
            acc += d.iter().enumerate().map(|(i, di)| di * x[(i, i)].re).sum::<f64>();
        }
        for &(i, j, v) in &self.entries {
            if i == j {
                acc += v.re * x[(i, i)].re;
            } else {
                acc += 2.0 * (v * x[(j, i)]).re;
            }
        }
        if let Some(a) = &self.dense {
            acc += a.iter().zip(x.transpose().iter()).map(|(p, q)| (p * q).re).sum::<f64>();
        }
        acc
    }

    fn check(&self, block: usize, d: usize) -> Result<(), ConicError> {
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        for (c, v) in &self.rank_one {
            if v.len() != d {
                return Err(ConicError::Dimension { block, got: v.len(), expected: d });
            }
            if !c.is_finite() || !v.iter().all(finite) {
                return Err(ConicError::NonFinite(format!("rank-one term of block {block}")));
            }
        }
        if let Some(diag) = &self.diag {
            if diag.len() != d {
                return Err(ConicError::Dimension { block, got: diag.len(), expected: d });
            }
            if !diag.iter().all(|x| x.is_finite()) {
                return Err(ConicError::NonFinite(format!("diagonal of block {block}")));
            }
        }
        for &(i, j, v) in &self.entries {
            if j >= d {
                return Err(ConicError::Dimension { block, got: j + 1, expected: d });
            }
            if i > j || !finite(&v) {
                return Err(ConicError::NonFinite(format!("entry ({i},{j}) of block {block}")));
            }
        }
        if let Some(a) = &self.dense {
            if a.nrows() != d || a.ncols() != d {
                return Err(ConicError::Dimension { block, got: a.nrows(), expected: d });
            }
            embed::check_hermitian(a)?;
        }
        Ok(())
    }
}

/// Real-linear functional of the block and scalar variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm {
    pub blocks: Vec<(BlockId, HermCoeff)>,
    pub scalars: Vec<(ScalarId, f64)>,
}

impl LinearForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(mut self, b: BlockId, c: HermCoeff) -> Self {
        if !c.is_empty() {
            self.blocks.push((b, c));
        }
        self
    }

    pub fn scalar(mut self, s: ScalarId, c: f64) -> Self {
        if c != 0.0 {
            self.scalars.push((s, c));
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.scalars.is_empty()
    }

    /// Evaluates the form at given block and scalar values.
    pub fn eval(&self, blocks: &[CMatrix], scalars: &[f64]) -> f64 {
        self.blocks.iter().map(|(b, c)| c.inner(&blocks[b.0])).sum::<f64>()
            + self.scalars.iter().map(|(s, c)| c * scalars[s.0]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    pub fn symbol(&self) -> &'static str {
        match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub form: LinearForm,
    pub sense: Sense,
    pub rhs: f64,
}

/// Minimize `objective` subject to `constraints`, PSD blocks and
/// non-negative scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<(String, usize)>,
    pub scalars: Vec<String>,
    pub objective: LinearForm,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> BlockId {
        self.blocks.push((name.into(), dim));
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarId {
        self.scalars.push(name.into());
        ScalarId(self.scalars.len() - 1)
    }

    pub fn set_objective(&mut self, f: LinearForm) {
        self.objective = f;
    }

    pub fn constrain(&mut self, label: impl Into<String>, form: LinearForm, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { label: label.into(), form, sense, rhs });
    }

    pub fn block_dim(&self, b: BlockId) -> usize {
        self.blocks[b.0].1
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let check_form = |f: &LinearForm| -> Result<(), ConicError> {
            for (b, c) in &f.blocks {
                let d = self
                    .blocks
                    .get(b.0)
                    .ok_or(ConicError::UnknownIndex { kind: "block", index: b.0 })?
                    .1;
                c.check(b.0, d)?;
            }
            for (s, c) in &f.scalars {
                if s.0 >= self.scalars.len() {
                    return Err(ConicError::UnknownIndex { kind: "scalar", index: s.0 });
                }
                if !c.is_finite() {
                    return Err(ConicError::NonFinite(format!("scalar coefficient {}", s.0)));
                }
            }
            Ok(())
        };
        check_form(&self.objective)?;
        for c in &self.constraints {
            check_form(&c.form)?;
            if !c.rhs.is_finite() {
                return Err(ConicError::NonFinite(format!("rhs of {}", c.label)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    /// Relative primal and dual feasibility tolerance.
    pub tol_feas: f64,
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Certificate tolerance for infeasibility detection.
    pub tol_infeas: f64,
    pub max_iter: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-7,
            tol_gap: 1e-7,
            tol_infeas: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    /// Primal unbounded (dual infeasible); reported as infeasible by callers.
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub blocks: Vec<CMatrix>,
    pub scalars: Vec<f64>,
    /// Multipliers of the constraints, in problem order.
    pub duals: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative primal residual of the standard-form problem.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn block(&self, b: BlockId) -> &CMatrix {
        &self.blocks[b.0]
    }

    pub fn scalar(&self, s: ScalarId) -> f64 {
        self.scalars[s.0]
    }

    /// Index of the constraint with the largest weight `y_i b_i` in the dual
    /// objective. For an infeasible problem this names the demand the
    /// certificate leans on most.
    pub fn dominant_constraint(&self, p: &SdpProblem) -> Option<usize> {
        self.duals
            .iter()
            .zip(&p.constraints)
            .map(|(y, c)| y * c.rhs)
            .enumerate()
            .filter(|(_, w)| w.is_finite())
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// Solves `p` through the real embedding.
pub fn solve(p: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution, ConicError> {
    p.validate()?;
    let real = embed::to_real(p);
    let sol = ipm::solve_real(&real.sdp, settings);
    Ok(real.recover(p, sol))
}
