//! Infeasible-start primal-dual interior-point method for real symmetric
//! cone programs (PSD blocks plus a non-negative orthant) in standard form
//!
//! ```text
//! min <C, X>  s.t.  A(X) = b,  X in K
//! max b^T y   s.t.  A^T y + Z = C,  Z in K
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector. The Schur
//! complement `M_ij = tr(A_i Z^-1 A_j X)` is assembled term by term from the
//! structured coefficients.

use nalgebra::{DMatrix, DVector};

use super::embed::RealCoeff;
use super::SdpSettings;

pub(crate) struct RealRow {
    pub blocks: Vec<(usize, RealCoeff)>,
    pub lp: Vec<(usize, f64)>,
}

pub(crate) struct RealSdp {
    pub dims: Vec<usize>,
    pub n_lp: usize,
    pub c_blocks: Vec<DMatrix<f64>>,
    pub c_lp: DVector<f64>,
    pub rows: Vec<RealRow>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RealStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Failed,
}

pub(crate) struct RealSolution {
    pub status: RealStatus,
    pub x: Vec<DMatrix<f64>>,
    pub x_lp: DVector<f64>,
    pub y: DVector<f64>,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Coefficient terms of one PSD block, grouped by structure.
struct BlockTerms {
    n: usize,
    /// Rank-one vectors as columns.
    u: DMatrix<f64>,
    /// `(row, weight)` of each column of `u`.
    r1: Vec<(usize, f64)>,
    diags: Vec<(usize, DVector<f64>)>,
    sparse: Vec<(usize, Vec<(usize, usize, f64)>)>,
    dense: Vec<(usize, DMatrix<f64>)>,
}

impl BlockTerms {
    fn new(n: usize) -> Self {
        Self {
            n,
            u: DMatrix::zeros(n, 0),
            r1: Vec::new(),
            diags: Vec::new(),
            sparse: Vec::new(),
            dense: Vec::new(),
        }
    }

    /// `A(S)` restricted to this block, accumulated into `out`.
    fn apply(&self, s: &DMatrix<f64>, out: &mut DVector<f64>) {
        if !self.r1.is_empty() {
            let su = s * &self.u;
            for (col, &(row, c)) in self.r1.iter().enumerate() {
                out[row] += c * self.u.column(col).dot(&su.column(col));
            }
        }
        for (row, d) in &self.diags {
            out[*row] += d.iter().enumerate().map(|(p, v)| v * s[(p, p)]).sum::<f64>();
        }
        for (row, e) in &self.sparse {
            out[*row] += e.iter().map(|&(p, q, v)| v * s[(q, p)]).sum::<f64>();
        }
        for (row, a) in &self.dense {
            out[*row] += a.dot(s);
        }
    }

    /// `sum_i y_i A_i` restricted to this block.
    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        if !self.r1.is_empty() {
            let mut scaled = self.u.clone();
            for (col, &(row, c)) in self.r1.iter().enumerate() {
                scaled.column_mut(col).scale_mut(c * y[row]);
            }
            out.gemm(1.0, &scaled, &self.u.transpose(), 0.0);
        }
        for (row, d) in &self.diags {
            for p in 0..n {
                out[(p, p)] += y[*row] * d[p];
            }
        }
        for (row, e) in &self.sparse {
            for &(p, q, v) in e {
                out[(p, q)] += y[*row] * v;
            }
        }
        for (row, a) in &self.dense {
            out += a * y[*row];
        }
        out
    }

    /// Adds this block's contribution `tr(A_i Z^-1 A_j X)` to the Schur
    /// matrix.
    fn schur(&self, zinv: &DMatrix<f64>, x: &DMatrix<f64>, m: &mut DMatrix<f64>) {
        let n = self.n;
        let r = self.r1.len();
        let (zu, xu) = (zinv * &self.u, x * &self.u);
        let add = |m: &mut DMatrix<f64>, a: usize, b: usize, v: f64, same: bool| {
            if same {
                m[(a, b)] += v;
            } else {
                m[(a, b)] += v;
                m[(b, a)] += v;
            }
        };

        // rank-one x rank-one
        if r > 0 {
            let p = self.u.transpose() * &zu;
            let q = self.u.transpose() * &xu;
            for s in 0..r {
                for t in s..r {
                    let v = self.r1[s].1 * self.r1[t].1 * p[(s, t)] * q[(s, t)];
                    add(m, self.r1[s].0, self.r1[t].0, v, s == t);
                }
            }
        }
        let had = if self.diags.len() > 0 { Some(zinv.component_mul(x)) } else { None };
        let gs: Vec<DMatrix<f64>> = self.dense.iter().map(|(_, a)| zinv * a * x).collect();

        for (col, &(row, c)) in self.r1.iter().enumerate() {
            let (zc, xc) = (zu.column(col), xu.column(col));
            for (drow, d) in &self.diags {
                let v: f64 = (0..n).map(|p| zc[p] * d[p] * xc[p]).sum();
                add(m, row, *drow, c * v, false);
            }
            for (srow, e) in &self.sparse {
                let v: f64 = e.iter().map(|&(p, q, w)| w * zc[p] * xc[q]).sum();
                add(m, row, *srow, c * v, false);
            }
            for (drow, a) in &self.dense {
                let v = zc.dot(&(a * xc));
                add(m, row, *drow, c * v, false);
            }
        }

        for (i, (r1, d1)) in self.diags.iter().enumerate() {
            let h = had.as_ref().expect("diagonal terms present");
            let hd = h * d1;
            for (j, (r2, d2)) in self.diags.iter().enumerate().skip(i) {
                add(m, *r1, *r2, hd.dot(d2), i == j);
            }
            for (r2, e) in &self.sparse {
                // tr(D Zinv E X) = sum_(a,b,v) v sum_p d_p Zinv[p,a] X[b,p]
                let v: f64 = e
                    .iter()
                    .map(|&(a, b, w)| w * (0..n).map(|p| d1[p] * zinv[(p, a)] * x[(b, p)]).sum::<f64>())
                    .sum();
                add(m, *r1, *r2, v, false);
            }
            for (k, (r2, _)) in self.dense.iter().enumerate() {
                let v: f64 = (0..n).map(|p| d1[p] * gs[k][(p, p)]).sum();
                add(m, *r1, *r2, v, false);
            }
        }

        for (i, (r1, e1)) in self.sparse.iter().enumerate() {
            for (j, (r2, e2)) in self.sparse.iter().enumerate().skip(i) {
                let mut v = 0.0;
                for &(p, q, a) in e1 {
                    for &(s, t, b) in e2 {
                        v += a * b * zinv[(q, s)] * x[(t, p)];
                    }
                }
                add(m, *r1, *r2, v, i == j);
            }
            for (k, (r2, _)) in self.dense.iter().enumerate() {
                let v: f64 = e1.iter().map(|&(p, q, a)| a * gs[k][(q, p)]).sum();
                add(m, *r1, *r2, v, false);
            }
        }

        for (i, (r1, _)) in self.dense.iter().enumerate() {
            for (j, (r2, a2)) in self.dense.iter().enumerate().skip(i) {
                add(m, *r1, *r2, gs[i].dot(a2), i == j);
            }
        }
    }
}

struct Problem {
    m: usize,
    blocks: Vec<BlockTerms>,
    /// Per linear variable, its `(row, coefficient)` entries.
    lp_cols: Vec<Vec<(usize, f64)>>,
    c: Vec<DMatrix<f64>>,
    c_lp: DVector<f64>,
    b: DVector<f64>,
}

impl Problem {
    fn apply(&self, x: &[DMatrix<f64>], x_lp: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (bt, s) in self.blocks.iter().zip(x) {
            bt.apply(s, &mut out);
        }
        for (l, col) in self.lp_cols.iter().enumerate() {
            for &(row, a) in col {
                out[row] += a * x_lp[l];
            }
        }
        out
    }

    fn adjoint(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mats = self.blocks.iter().map(|bt| bt.adjoint(y)).collect();
        let lp = DVector::from_iterator(
            self.lp_cols.len(),
            self.lp_cols.iter().map(|col| col.iter().map(|&(row, a)| a * y[row]).sum::<f64>()),
        );
        (mats, lp)
    }
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn lower_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.clone().cholesky()?;
    let l = chol.l();
    let n = a.nrows();
    let mut inv = DMatrix::identity(n, n);
    if !l.solve_lower_triangular_mut(&mut inv) {
        return None;
    }
    Some(inv)
}

/// Blocks above this size use a Lanczos estimate for step lengths.
const DENSE_EIG_MAX: usize = 48;
const LANCZOS_STEPS: usize = 30;

/// Smallest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `a` and off-diagonal `b`, by Sturm-sequence bisection.
fn tridiagonal_min_eig(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < m { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    // number of eigenvalues below x
    let count = |x: f64| {
        let mut c = 0;
        let mut d = 1.0;
        for i in 0..m {
            let off = if i > 0 { b[i - 1] * b[i - 1] } else { 0.0 };
            d = a[i] - x - if i > 0 { off / d } else { 0.0 };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    let tol = 1e-14 * (lo.abs().max(hi.abs())).max(1e-300);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Estimate of the smallest eigenvalue of symmetric `b` by Lanczos with
/// full reorthogonalization. Ritz values never undershoot the spectrum, so
/// the caller confirms the resulting step by factorization.
fn lanczos_min_eig(b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let k = LANCZOS_STEPS.min(n);
    let bs = b.as_slice();
    let mut q: Vec<f64> = Vec::with_capacity(n * k);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666_2).fract()).collect();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    for j in 0..k {
        q.extend_from_slice(&v);
        w.iter_mut().for_each(|x| *x = 0.0);
        for (col, &vc) in bs.chunks_exact(n).zip(&v) {
            for (wi, ci) in w.iter_mut().zip(col) {
                *wi += ci * vc;
            }
        }
        let a: f64 = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        alpha.push(a);
        for _ in 0..2 {
            for qc in q.chunks_exact(n) {
                let c: f64 = qc.iter().zip(&w).map(|(x, y)| x * y).sum();
                for (wi, qi) in w.iter_mut().zip(qc) {
                    *wi -= c * qi;
                }
            }
        }
        let nb = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if j + 1 == k || nb <= 1e-12 * (1.0 + a.abs()) {
            break;
        }
        beta.push(nb);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nb;
        }
    }
    tridiagonal_min_eig(&alpha, &beta)
}

/// Largest `alpha` with `X + alpha dX` PSD, given `Li = chol(X)^-1`. Large
/// blocks get an estimate that the caller confirms by factorization.
fn max_step_psd(li: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let b = sym(&(li * dx * li.transpose()));
    let lmin = if b.nrows() > DENSE_EIG_MAX { lanczos_min_eig(&b) } else { b.symmetric_eigenvalues().min() };
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn is_pd(a: &DMatrix<f64>) -> bool {
    a.clone().cholesky().is_some()
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn solve_schur(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += reg * scale;
        }
        if let Some(ch) = mm.cholesky() {
            let sol = ch.solve(rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    m.clone().lu().solve(rhs).filter(|s| s.iter().all(|v| v.is_finite()))
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    x_lp: DVector<f64>,
    z_lp: DVector<f64>,
    y: DVector<f64>,
}

fn frob2(mats: &[DMatrix<f64>], v: &DVector<f64>) -> f64 {
    mats.iter().map(|a| a.norm_squared()).sum::<f64>() + v.norm_squared()
}

pub(crate) fn solve_real(p: &RealSdp, s: &SdpSettings) -> RealSolution {
    let m_all = p.rows.len();
    let nb = p.dims.len();

    // Row norms; all-zero rows are either redundant or certify infeasibility.
    let b_norm_all = p.b.norm();
    let mut keep = Vec::new();
    let mut norms = Vec::new();
    for (i, row) in p.rows.iter().enumerate() {
        let mut n2: f64 = row.lp.iter().map(|(_, a)| a * a).sum();
        for (k, c) in &row.blocks {
            n2 += c.to_dense(p.dims[*k]).norm_squared();
        }
        let nrm = n2.sqrt();
        if nrm > 1e-300 && nrm.is_finite() {
            keep.push(i);
            norms.push(nrm);
        } else if p.b[i].abs() > 1e-12 * (1.0 + b_norm_all) {
            return trivial(p, RealStatus::PrimalInfeasible, m_all);
        }
    }
    let m = keep.len();

    let mut b = DVector::from_iterator(m, keep.iter().zip(&norms).map(|(&i, n)| p.b[i] / n));
    let b_scale = if b.norm() > 0.0 { b.norm() } else { 1.0 };
    b /= b_scale;
    let c_norm = frob2(&p.c_blocks, &p.c_lp).sqrt();
    let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };

    let mut blocks: Vec<BlockTerms> = p.dims.iter().map(|&n| BlockTerms::new(n)).collect();
    let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n_lp];
    let mut r1_cols: Vec<Vec<DVector<f64>>> = vec![Vec::new(); nb];
    for (row, (&i, nrm)) in keep.iter().zip(&norms).enumerate() {
        for (k, coeff) in &p.rows[i].blocks {
            let mut c = coeff.clone();
            c.scale(1.0 / nrm);
            let bt = &mut blocks[*k];
            for (w, v) in c.rank_one {
                bt.r1.push((row, w));
                r1_cols[*k].push(v);
            }
            if let Some(d) = c.diag {
                bt.diags.push((row, d));
            }
            if !c.entries.is_empty() {
                bt.sparse.push((row, c.entries));
            }
            if let Some(a) = c.dense {
                bt.dense.push((row, sym(&a)));
            }
        }
        for &(l, a) in &p.rows[i].lp {
            lp_cols[l].push((row, a / nrm));
        }
    }
    for (bt, cols) in blocks.iter_mut().zip(r1_cols) {
        if !cols.is_empty() {
            bt.u = DMatrix::from_columns(&cols);
        }
    }
    let prob = Problem {
        m,
        blocks,
        lp_cols,
        c: p.c_blocks.iter().map(|c| sym(c) / c_scale).collect(),
        c_lp: &p.c_lp / c_scale,
        b,
    };

    let nu = (p.dims.iter().sum::<usize>() + p.n_lp) as f64;
    let b_max = prob.b.amax();
    let mut it = {
        let xi = |n: usize| (10f64).max((n as f64).sqrt()).max(n as f64 * (1.0 + b_max));
        let eta = |n: usize| (10f64).max((n as f64).sqrt()).max(1.0);
        Iterate {
            x: p.dims.iter().map(|&n| DMatrix::identity(n, n) * xi(n)).collect(),
            z: p.dims.iter().map(|&n| DMatrix::identity(n, n) * eta(n)).collect(),
            x_lp: DVector::from_element(p.n_lp, xi(1)),
            z_lp: DVector::from_element(p.n_lp, eta(1)),
            y: DVector::zeros(m),
        }
    };

    let b_norm = prob.b.norm();
    let c_norm = frob2(&prob.c, &prob.c_lp).sqrt();
    let mut status = RealStatus::Failed;
    let (mut relp, mut reld, mut relgap, mut dobj) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0);
    let mut iterations = 0;
    let mut stalls = 0;

    for iter in 0..=s.max_iter {
        iterations = iter;
        let mut lx = Vec::with_capacity(nb);
        let mut lz = Vec::with_capacity(nb);
        let mut zinv = Vec::with_capacity(nb);
        let mut ok = true;
        for k in 0..nb {
            match (lower_inverse(&it.x[k]), lower_inverse(&it.z[k])) {
                (Some(a), Some(bz)) => {
                    zinv.push(bz.transpose() * &bz);
                    lx.push(a);
                    lz.push(bz);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        let ax = prob.apply(&it.x, &it.x_lp);
        let rp = &prob.b - &ax;
        let (aty, aty_lp) = prob.adjoint(&it.y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &prob.c[k] - &aty[k] - &it.z[k]).collect();
        let rd_lp = &prob.c_lp - &aty_lp - &it.z_lp;
        let pobj: f64 = (0..nb).map(|k| prob.c[k].dot(&it.x[k])).sum::<f64>() + prob.c_lp.dot(&it.x_lp);
        dobj = prob.b.dot(&it.y);
        let xz: f64 = (0..nb).map(|k| it.x[k].dot(&it.z[k])).sum::<f64>() + it.x_lp.dot(&it.z_lp);
        let mu = xz / nu.max(1.0);
        relp = rp.norm() / (1.0 + b_norm);
        reld = frob2(&rd, &rd_lp).sqrt() / (1.0 + c_norm);
        relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        if relp <= s.tol_feas && reld <= s.tol_feas && relgap <= s.tol_gap {
            status = RealStatus::Optimal;
            break;
        }
        if dobj > 0.0 {
            let dual_res = frob2(&aty, &aty_lp).sqrt();
            let cert = {
                let az: Vec<DMatrix<f64>> = (0..nb).map(|k| &aty[k] + &it.z[k]).collect();
                frob2(&az, &(&aty_lp + &it.z_lp)).sqrt()
            };
            if cert / dobj < s.tol_infeas || (dual_res > 1e10 && cert / dobj < 1e-6) {
                status = RealStatus::PrimalInfeasible;
                break;
            }
        }
        if pobj < 0.0 {
            let ax_norm = ax.norm();
            if ax_norm / -pobj < s.tol_infeas {
                status = RealStatus::DualInfeasible;
                break;
            }
        }
        if iter == s.max_iter {
            break;
        }

        // Schur complement
        let mut schur = DMatrix::zeros(m, m);
        for k in 0..nb {
            prob.blocks[k].schur(&zinv[k], &it.x[k], &mut schur);
        }
        for (l, col) in prob.lp_cols.iter().enumerate() {
            let w = it.x_lp[l] / it.z_lp[l];
            for &(i, a) in col {
                for &(j, bb) in col {
                    schur[(i, j)] += a * bb * w;
                }
            }
        }
        let rdx: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] * &it.x[k]).collect();

        let direction = |sigma_mu: f64,
                         corr: Option<(&[DMatrix<f64>], &DVector<f64>)>|
         -> Option<(Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>)> {
            let mut t = Vec::with_capacity(nb);
            for k in 0..nb {
                let mut inner = rdx[k].clone();
                if let Some((c, _)) = corr {
                    inner += &c[k];
                }
                let tk = &it.x[k] - &zinv[k] * sigma_mu + &zinv[k] * inner;
                t.push(sym(&tk));
            }
            let mut t_lp = DVector::zeros(p.n_lp);
            for l in 0..p.n_lp {
                let c = corr.map_or(0.0, |(_, cl)| cl[l]);
                t_lp[l] = it.x_lp[l] - sigma_mu / it.z_lp[l] + (rd_lp[l] * it.x_lp[l] + c) / it.z_lp[l];
            }
            let rhs = &rp + prob.apply(&t, &t_lp);
            let dy = solve_schur(&schur, &rhs)?;
            let (atdy, atdy_lp) = prob.adjoint(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - &atdy[k]).collect();
            let dz_lp = &rd_lp - &atdy_lp;
            let mut dx = Vec::with_capacity(nb);
            for k in 0..nb {
                let mut inner = &dz[k] * &it.x[k];
                if let Some((c, _)) = corr {
                    inner += &c[k];
                }
                let d = &zinv[k] * sigma_mu - &it.x[k] - &zinv[k] * inner;
                dx.push(sym(&d));
            }
            let mut dx_lp = DVector::zeros(p.n_lp);
            for l in 0..p.n_lp {
                let c = corr.map_or(0.0, |(_, cl)| cl[l]);
                dx_lp[l] = sigma_mu / it.z_lp[l] - it.x_lp[l] - (c + dz_lp[l] * it.x_lp[l]) / it.z_lp[l];
            }
            Some((dx, dx_lp, dz, dz_lp, dy))
        };
        let steps = |dx: &[DMatrix<f64>], dx_lp: &DVector<f64>, dz: &[DMatrix<f64>], dz_lp: &DVector<f64>| {
            let mut ap = max_step_lp(&it.x_lp, dx_lp);
            let mut ad = max_step_lp(&it.z_lp, dz_lp);
            for k in 0..nb {
                ap = ap.min(max_step_psd(&lx[k], &dx[k]));
                ad = ad.min(max_step_psd(&lz[k], &dz[k]));
            }
            (ap, ad)
        };

        // predictor
        let Some((dx, dx_lp, dz, dz_lp, _)) = direction(0.0, None) else { break };
        let (ap, ad) = steps(&dx, &dx_lp, &dz, &dz_lp);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xz_aff = 0.0;
        for k in 0..nb {
            let xn = &it.x[k] + &dx[k] * ap;
            let zn = &it.z[k] + &dz[k] * ad;
            xz_aff += xn.dot(&zn);
        }
        xz_aff += (&it.x_lp + &dx_lp * ap).dot(&(&it.z_lp + &dz_lp * ad));
        let mu_aff = xz_aff / nu.max(1.0);
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).min(1.0).powf(expon) } else { 0.0 };

        // corrector
        let corr: Vec<DMatrix<f64>> = (0..nb).map(|k| &dz[k] * &dx[k]).collect();
        let corr_lp = dz_lp.component_mul(&dx_lp);
        let Some((dx, dx_lp, dz, dz_lp, dy)) = direction(sigma * mu, Some((&corr, &corr_lp))) else {
            break;
        };
        let (ap_max, ad_max) = steps(&dx, &dx_lp, &dz, &dz_lp);
        let gamma = 0.9 + 0.09 * ap_max.min(ad_max).min(1.0);
        let ap = (gamma * ap_max).min(1.0);
        let ad = (gamma * ad_max).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls > 2 {
                break;
            }
        } else {
            stalls = 0;
        }
        let (mut ap, mut ad) = (ap, ad);
        let mut xn: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut zn: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for _ in 0..30 {
            xn = (0..nb).map(|k| sym(&(&it.x[k] + &dx[k] * ap))).collect();
            if (0..nb).all(|k| p.dims[k] <= DENSE_EIG_MAX || is_pd(&xn[k])) {
                break;
            }
            ap *= 0.8;
        }
        for _ in 0..30 {
            zn = (0..nb).map(|k| sym(&(&it.z[k] + &dz[k] * ad))).collect();
            if (0..nb).all(|k| p.dims[k] <= DENSE_EIG_MAX || is_pd(&zn[k])) {
                break;
            }
            ad *= 0.8;
        }
        it.x = xn;
        it.z = zn;
        it.x_lp += &dx_lp * ap;
        it.z_lp += &dz_lp * ad;
        it.y += &dy * ad;
    }

    // undo scaling
    let mut y = DVector::zeros(m_all);
    for (row, (&i, nrm)) in keep.iter().zip(&norms).enumerate() {
        y[i] = it.y[row] * c_scale / nrm;
    }
    RealSolution {
        status,
        x: it.x.into_iter().map(|x| x * b_scale).collect(),
        x_lp: it.x_lp * b_scale,
        y,
        dual_objective: dobj * b_scale * c_scale,
        primal_residual: relp,
        dual_residual: reld,
        gap: relgap,
        iterations,
    }
}

fn trivial(p: &RealSdp, status: RealStatus, m: usize) -> RealSolution {
    RealSolution {
        status,
        x: p.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
        x_lp: DVector::zeros(p.n_lp),
        y: DVector::zeros(m),
        dual_objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
    }
}
