//! Complex-to-real embedding of Hermitian programs.
//!
//! A Hermitian `X` maps to `[[Re X, -Im X], [Im X, Re X]]`, which is PSD iff
//! `X` is, and `<A, X> = 1/2 <emb A, emb X>`. One-dimensional blocks are
//! real non-negative numbers and go straight to the linear cone.

use nalgebra::{DMatrix, DVector};

use super::ipm::{RealSdp, RealSolution, RealStatus};
use super::{ConicError, HermCoeff, LinearForm, Sense, SdpProblem, SdpSolution, SdpStatus};
use crate::{CMatrix, Complex64};

#[derive(Debug, Clone, Default)]
pub(crate) struct RealCoeff {
    pub rank_one: Vec<(f64, DVector<f64>)>,
    pub diag: Option<DVector<f64>>,
    /// Full entry list; off-diagonal entries appear with their mirror.
    pub entries: Vec<(usize, usize, f64)>,
    pub dense: Option<DMatrix<f64>>,
}

impl RealCoeff {
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut a = self.dense.clone().unwrap_or_else(|| DMatrix::zeros(n, n));
        for (c, v) in &self.rank_one {
            a.ger(*c, v, v, 1.0);
        }
        if let Some(d) = &self.diag {
            for i in 0..n {
                a[(i, i)] += d[i];
            }
        }
        for &(p, q, v) in &self.entries {
            a[(p, q)] += v;
        }
        a
    }

    pub fn scale(&mut self, s: f64) {
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
            *a *= s;
        }
    }
}

pub(crate) fn check_hermitian(a: &CMatrix) -> Result<(), ConicError> {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let asym = (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !asym.is_finite() || asym > 1e-9 * scale {
        return Err(ConicError::NotHermitian(asym / scale));
    }
    Ok(())
}

/// Real symmetric embedding of a Hermitian matrix.
pub fn embed_hermitian(x: &CMatrix) -> Result<DMatrix<f64>, ConicError> {
    check_hermitian(x)?;
    Ok(embed_unchecked(x))
}

fn embed_unchecked(x: &CMatrix) -> DMatrix<f64> {
    let d = x.nrows();
    let mut y = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = x[(i, j)];
            y[(i, j)] = z.re;
            y[(i + d, j + d)] = z.re;
            y[(i + d, j)] = z.im;
            y[(i, j + d)] = -z.im;
        }
    }
    y
}

/// Inverse of the embedding, averaging the redundant copies.
pub fn unembed(y: &DMatrix<f64>) -> CMatrix {
    let d = y.nrows() / 2;
    CMatrix::from_fn(d, d, |i, j| {
        Complex64::new(
            0.5 * (y[(i, j)] + y[(i + d, j + d)]),
            0.5 * (y[(i + d, j)] - y[(i, j + d)]),
        )
    })
}

fn embed_coeff(c: &HermCoeff, d: usize) -> RealCoeff {
    let mut r = RealCoeff::default();
    for (s, v) in &c.rank_one {
        let x = DVector::from_iterator(2 * d, v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)));
        let y = DVector::from_iterator(2 * d, v.iter().map(|z| -z.im).chain(v.iter().map(|z| z.re)));
        r.rank_one.push((0.5 * s, x));
        r.rank_one.push((0.5 * s, y));
    }
    if let Some(dg) = &c.diag {
        r.diag = Some(DVector::from_iterator(2 * d, dg.iter().chain(dg.iter()).map(|v| 0.5 * v)));
    }
    for &(i, j, v) in &c.entries {
        let (re, im) = (0.5 * v.re, 0.5 * v.im);
        if i == j {
            r.entries.push((i, i, re));
            r.entries.push((i + d, i + d, re));
            continue;
        }
        r.entries.extend_from_slice(&[
            (i, j, re),
            (j, i, re),
            (i + d, j + d, re),
            (j + d, i + d, re),
            (i + d, j, im),
            (j, i + d, im),
            (j + d, i, -im),
            (i, j + d, -im),
        ]);
    }
    if let Some(a) = &c.dense {
        r.dense = Some(embed_unchecked(a) * 0.5);
    }
    r
}

/// Where each complex block ended up.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Psd(usize),
    Lp(usize),
}

pub(crate) struct Embedded {
    pub sdp: RealSdp,
    slots: Vec<Slot>,
    scalar_offset: usize,
}

pub(crate) fn to_real(p: &SdpProblem) -> Embedded {
    let mut dims = Vec::new();
    let mut n_lp = 0;
    let slots: Vec<Slot> = p
        .blocks
        .iter()
        .map(|(_, d)| {
            if *d == 1 {
                n_lp += 1;
                Slot::Lp(n_lp - 1)
            } else {
                dims.push(2 * d);
                Slot::Psd(dims.len() - 1)
            }
        })
        .collect();
    let scalar_offset = n_lp;
    n_lp += p.scalars.len();
    let slack_offset = n_lp;
    n_lp += p.constraints.iter().filter(|c| c.sense != Sense::Eq).count();

    let lower = |f: &LinearForm| -> (Vec<(usize, RealCoeff)>, Vec<(usize, f64)>) {
        let mut blocks: Vec<(usize, RealCoeff)> = Vec::new();
        let mut lp: Vec<(usize, f64)> = Vec::new();
        for (b, c) in &f.blocks {
            let d = p.blocks[b.0].1;
            match slots[b.0] {
                Slot::Psd(k) => blocks.push((k, embed_coeff(c, d))),
                Slot::Lp(k) => lp.push((k, c.to_dense(1)[(0, 0)].re)),
            }
        }
        for (s, v) in &f.scalars {
            lp.push((scalar_offset + s.0, *v));
        }
        (blocks, lp)
    };

    let (obj_blocks, obj_lp) = lower(&p.objective);
    let mut c_blocks: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (k, c) in obj_blocks {
        c_blocks[k] += c.to_dense(dims[k]);
    }
    let mut c_lp = DVector::zeros(n_lp);
    for (k, v) in obj_lp {
        c_lp[k] += v;
    }

    let mut rows = Vec::with_capacity(p.constraints.len());
    let mut b = DVector::zeros(p.constraints.len());
    let mut slack = slack_offset;
    for (i, con) in p.constraints.iter().enumerate() {
        let (blocks, mut lp) = lower(&con.form);
        match con.sense {
            Sense::Eq => {}
            Sense::Le => {
                lp.push((slack, 1.0));
                slack += 1;
            }
            Sense::Ge => {
                lp.push((slack, -1.0));
                slack += 1;
            }
        }
        rows.push(super::ipm::RealRow { blocks, lp });
        b[i] = con.rhs;
    }

    Embedded {
        sdp: RealSdp { dims, n_lp, c_blocks, c_lp, rows, b },
        slots,
        scalar_offset,
    }
}

impl Embedded {
    pub fn recover(&self, p: &SdpProblem, s: RealSolution) -> SdpSolution {
        let blocks: Vec<CMatrix> = self
            .slots
            .iter()
            .map(|slot| match *slot {
                Slot::Psd(k) => unembed(&s.x[k]),
                Slot::Lp(k) => CMatrix::from_element(1, 1, Complex64::new(s.x_lp[k], 0.0)),
            })
            .collect();
        let scalars: Vec<f64> = (0..p.scalars.len()).map(|i| s.x_lp[self.scalar_offset + i]).collect();
        let primal_objective = p.objective.eval(&blocks, &scalars);
        let status = match s.status {
            RealStatus::Optimal => SdpStatus::Optimal,
            RealStatus::PrimalInfeasible => SdpStatus::Infeasible,
            RealStatus::DualInfeasible => SdpStatus::Unbounded,
            RealStatus::Failed => SdpStatus::NumericalFailure,
        };
        SdpSolution {
            status,
            blocks,
            scalars,
            duals: s.y.iter().copied().collect(),
            primal_objective,
            dual_objective: s.dual_objective,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            gap: s.gap,
            iterations: s.iterations,
        }
    }
}
