//! Beamformer and power-splitting design for a fixed RIS.
//!
//! The problem is a single SDP in the Gram matrices `W_k = w_k w_k^H`. The
//! terms `delta^2 / rho_k` and `1 / (1 - rho_k)` are handled with 2x2 PSD
//! epigraph blocks
//!
//! ```text
//! [[t_k, 1], [1, rho_k]] >= 0   (t_k >= 1/rho_k)
//! [[s_k, 1], [1, 1 - rho_k]] >= 0   (s_k >= 1/(1 - rho_k))
//! ```
//!
//! so that SINR and EH requirements become linear in `(W, t, s)`.
//! Beamformers are recovered by eigen-decomposition; if a Gram matrix is not
//! numerically rank one the problem is re-solved with the extracted
//! directions fixed and only the powers free.

use serde::Serialize;
use thiserror::Error;

use crate::conic::{self, BlockId, ConicError, HermCoeff, LinearForm, SdpProblem, SdpSettings, SdpStatus, Sense};
use crate::metrics::{self, BfSolution, MetricsError, RisVector};
use crate::scene::{ChannelSet, RisKind, Scenario};
use crate::{CMatrix, CVector, Complex64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    Sinr,
    Eh,
    Reflect,
    PsRatio,
}

impl ConstraintClass {
    fn from_label(label: &str) -> Self {
        match label.split(['[', ':']).next().unwrap_or("") {
            "sinr" => Self::Sinr,
            "eh" => Self::Eh,
            "reflect" => Self::Reflect,
            _ => Self::PsRatio,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("stage infeasible ({class:?} constraints)")]
    Infeasible { class: ConstraintClass },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// How the power-splitting ratios enter the problem.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoMode {
    Optimize,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Serialize)]
pub struct P3Result {
    #[serde(skip)]
    pub gram: Vec<CMatrix>,
    pub sol: BfSolution,
    /// `sum_k tr(W_k)` in W.
    pub objective: f64,
    pub rank_residual: Vec<f64>,
    /// True when the fixed-direction re-solve was needed.
    pub fallback: bool,
    pub solver_status: SdpStatus,
    pub solver_iterations: usize,
}

/// Per-user basis of the beamformer subspace: `W_k = B_k X_k B_k^H`.
#[derive(Debug, Clone)]
enum Basis {
    Full,
    Directions(Vec<CVector>),
}

impl Basis {
    fn dim(&self, m: usize) -> usize {
        match self {
            Basis::Full => m,
            Basis::Directions(_) => 1,
        }
    }

    fn vector(&self, k: usize, h: &CVector) -> CVector {
        match self {
            Basis::Full => h.clone(),
            Basis::Directions(u) => CVector::from_element(1, u[k].dotc(h)),
        }
    }

    fn matrix(&self, k: usize, a: &CMatrix) -> CMatrix {
        match self {
            Basis::Full => a.clone(),
            Basis::Directions(u) => CMatrix::from_element(1, 1, (u[k].adjoint() * a * &u[k])[(0, 0)]),
        }
    }

    fn expand(&self, k: usize, x: &CMatrix) -> CMatrix {
        match self {
            Basis::Full => x.clone(),
            Basis::Directions(u) => &u[k] * u[k].adjoint() * x[(0, 0)],
        }
    }
}

/// Handles into a built problem.
#[derive(Debug, Clone)]
pub struct P3Layout {
    pub w: Vec<BlockId>,
    /// `[[t, 1], [1, rho]]` blocks for users with an SINR target.
    pub y: Vec<Option<BlockId>>,
    /// `[[s, 1], [1, 1 - rho]]` blocks for users with an EH target.
    pub v: Vec<Option<BlockId>>,
    /// Power unit: `W_k = scale * X_k`.
    pub scale: f64,
    rho_mode: RhoMode,
}

fn ris_noise_at_user(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, k: usize) -> f64 {
    if ch.n() == 0 {
        return 0.0;
    }
    scn.ris_noise() * ch.h_r[k].iter().zip(theta.theta.iter()).map(|(h, t)| h.norm_sqr() * t.norm_sqr()).sum::<f64>()
}

/// `G^H diag(|theta|^2) G`, the reflect-power weight of each `W_i`.
fn reflect_weight(ch: &ChannelSet, theta: &RisVector) -> CMatrix {
    let d = CVector::from_iterator(ch.n(), theta.theta.iter().map(|t| Complex64::new(t.norm_sqr(), 0.0)));
    let dg = CMatrix::from_fn(ch.n(), ch.m(), |n, j| d[n] * ch.g[(n, j)]);
    let a = ch.g.adjoint() * dg;
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn check_zero_channels(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, h: &[CVector]) -> Result<(), StageError> {
    for k in 0..ch.k() {
        if h[k].iter().any(|z| z.norm_sqr() > 0.0) {
            continue;
        }
        if scn.gamma[k] > 0.0 {
            return Err(StageError::Infeasible { class: ConstraintClass::Sinr });
        }
        if scn.e_mw[k] > 0.0 {
            let need = scn.required_eh_input_w(k).map_err(|e| StageError::Numerical(e.to_string()))?;
            if scn.eta[k] * (1.0 - scn.tuning.rho_min) * ris_noise_at_user(ch, theta, scn, k) < need {
                return Err(StageError::Infeasible { class: ConstraintClass::Eh });
            }
        }
    }
    Ok(())
}

fn power_unit(ch: &ChannelSet, scn: &Scenario, h: &[CVector]) -> f64 {
    let mut p = 0.0;
    for k in 0..ch.k() {
        let g = h[k].norm_squared();
        if g <= 0.0 {
            continue;
        }
        let sinr = scn.gamma[k] * (scn.sigma2[k] + 2.0 * scn.delta2[k]) / g;
        let eh = scn.required_eh_input_w(k).unwrap_or(0.0) * 2.0 / (scn.eta[k] * g);
        p += sinr.max(eh);
    }
    if p > 0.0 && p.is_finite() {
        p
    } else {
        1.0
    }
}

fn build(
    ch: &ChannelSet,
    theta: &RisVector,
    scn: &Scenario,
    rho_mode: &RhoMode,
    basis: &Basis,
) -> Result<(SdpProblem, P3Layout), StageError> {
    let (m, k_users) = (ch.m(), ch.k());
    if theta.len() != ch.n() || !theta.is_finite() {
        return Err(MetricsError::Dimension(format!("theta has {} entries for N={}", theta.len(), ch.n())).into());
    }
    if scn.gamma.len() != k_users || scn.e_mw.len() != k_users {
        return Err(MetricsError::Dimension(format!("scenario has K={} but channels have K={k_users}", scn.k)).into());
    }
    if let RhoMode::Fixed(r) = rho_mode {
        if r.len() != k_users || r.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
            return Err(MetricsError::Dimension("fixed PS ratios must be K values in (0, 1)".into()).into());
        }
    }
    let h: Vec<CVector> = (0..k_users)
        .map(|k| metrics::effective_channel(ch, theta, k))
        .collect::<Result<_, _>>()?;
    check_zero_channels(ch, theta, scn, &h)?;
    let scale = power_unit(ch, scn, &h);
    let rho_min = scn.tuning.rho_min;

    let mut p = SdpProblem::new();
    let d = basis.dim(m);
    let w: Vec<BlockId> = (0..k_users).map(|k| p.add_block(format!("W{k}"), d)).collect();
    let optimize = matches!(rho_mode, RhoMode::Optimize);
    let y: Vec<Option<BlockId>> = (0..k_users)
        .map(|k| (optimize && scn.gamma[k] > 0.0).then(|| p.add_block(format!("Y{k}"), 2)))
        .collect();
    let v: Vec<Option<BlockId>> = (0..k_users)
        .map(|k| (optimize && scn.e_mw[k] > 0.0).then(|| p.add_block(format!("V{k}"), 2)))
        .collect();

    let mut obj = LinearForm::new();
    for (k, &b) in w.iter().enumerate() {
        obj = obj.block(b, match basis {
            Basis::Full => HermCoeff::identity(d),
            Basis::Directions(_) => HermCoeff::new().dense(basis.matrix(k, &CMatrix::identity(m, m))),
        });
    }
    p.set_objective(obj);

    let one = Complex64::new(1.0, 0.0);
    let corner = |i: usize| HermCoeff::new().entry(i, i, one);
    let off = HermCoeff::new().entry(0, 1, Complex64::new(0.5, 0.0));

    for k in 0..k_users {
        let noise_r = ris_noise_at_user(ch, theta, scn, k);
        if scn.gamma[k] > 0.0 {
            let mut f = LinearForm::new();
            for (i, &b) in w.iter().enumerate() {
                let c = if i == k { scale / scn.gamma[k] } else { -scale };
                f = f.block(b, HermCoeff::new().rank_one(c, basis.vector(i, &h[k])));
            }
            let mut rhs = scn.sigma2[k] + noise_r;
            match (rho_mode, y[k]) {
                (RhoMode::Fixed(r), _) => rhs += scn.delta2[k] / r[k],
                (_, Some(yb)) => f = f.block(yb, corner(0).scaled(-scn.delta2[k])),
                _ => unreachable!("SINR epigraph block exists when rho is optimized"),
            }
            p.constrain(format!("sinr[{k}]"), f, Sense::Ge, rhs);
        }
        if scn.e_mw[k] > 0.0 {
            let need = scn.required_eh_input_w(k).map_err(|e| StageError::Numerical(e.to_string()))? / scn.eta[k];
            let mut f = LinearForm::new();
            for (i, &b) in w.iter().enumerate() {
                f = f.block(b, HermCoeff::new().rank_one(scale, basis.vector(i, &h[k])));
            }
            let mut rhs = -noise_r;
            match (rho_mode, v[k]) {
                (RhoMode::Fixed(r), _) => rhs += need / (1.0 - r[k]),
                (_, Some(vb)) => f = f.block(vb, corner(0).scaled(-need)),
                _ => unreachable!("EH epigraph block exists when rho is optimized"),
            }
            p.constrain(format!("eh[{k}]"), f, Sense::Ge, rhs);
        }
        for (name, blk) in [("y", y[k]), ("v", v[k])] {
            if let Some(b) = blk {
                p.constrain(format!("ps:{name}off[{k}]"), LinearForm::new().block(b, off.clone()), Sense::Eq, 1.0);
                p.constrain(format!("ps:{name}min[{k}]"), LinearForm::new().block(b, corner(1)), Sense::Ge, rho_min);
            }
        }
        match (y[k], v[k]) {
            (Some(yb), Some(vb)) => p.constrain(
                format!("ps:sum[{k}]"),
                LinearForm::new().block(yb, corner(1)).block(vb, corner(1)),
                Sense::Eq,
                1.0,
            ),
            (Some(b), None) | (None, Some(b)) => {
                p.constrain(format!("ps:max[{k}]"), LinearForm::new().block(b, corner(1)), Sense::Le, 1.0 - rho_min)
            }
            (None, None) => {}
        }
    }

    if scn.ris_kind == RisKind::Active && ch.n() > 0 {
        let a = reflect_weight(ch, theta);
        let budget = scn.p_max - scn.sigma2_v * theta.energy();
        let mut f = LinearForm::new();
        for (i, &b) in w.iter().enumerate() {
            f = f.block(b, HermCoeff::new().dense(basis.matrix(i, &a) * Complex64::new(scale, 0.0)));
        }
        if budget < 0.0 {
            return Err(StageError::Infeasible { class: ConstraintClass::Reflect });
        }
        p.constrain("reflect", f, Sense::Le, budget);
    }

    Ok((p, P3Layout { w, y, v, scale, rho_mode: rho_mode.clone() }))
}

/// Builds the beamforming SDP for a fixed RIS.
pub fn build_p3(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, rho_mode: &RhoMode) -> Result<(SdpProblem, P3Layout), StageError> {
    build(ch, theta, scn, rho_mode, &Basis::Full)
}

fn settings() -> SdpSettings {
    SdpSettings { tol_feas: 1e-8, tol_gap: 1e-8, ..SdpSettings::default() }
}

struct Raw {
    gram: Vec<CMatrix>,
    rho: Vec<f64>,
    status: SdpStatus,
    iterations: usize,
}

fn run(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, rho_mode: &RhoMode, basis: &Basis) -> Result<Raw, StageError> {
    let (p, lay) = build(ch, theta, scn, rho_mode, basis)?;
    if p.constraints.is_empty() {
        return Ok(Raw {
            gram: vec![CMatrix::zeros(ch.m(), ch.m()); ch.k()],
            rho: match rho_mode {
                RhoMode::Fixed(r) => r.clone(),
                RhoMode::Optimize => vec![0.5; ch.k()],
            },
            status: SdpStatus::Optimal,
            iterations: 0,
        });
    }
    let sol = conic::solve(&p, &settings())?;
    match sol.status {
        SdpStatus::Infeasible => {
            let class = sol
                .dominant_constraint(&p)
                .map(|i| ConstraintClass::from_label(&p.constraints[i].label))
                .unwrap_or(ConstraintClass::Sinr);
            return Err(StageError::Infeasible { class });
        }
        SdpStatus::Unbounded => return Err(StageError::Numerical("beamforming SDP reported unbounded".into())),
        SdpStatus::Optimal | SdpStatus::NumericalFailure => {}
    }
    let gram: Vec<CMatrix> = lay
        .w
        .iter()
        .enumerate()
        .map(|(k, b)| basis.expand(k, sol.block(*b)) * Complex64::new(lay.scale, 0.0))
        .collect();
    let rho: Vec<f64> = (0..ch.k())
        .map(|k| match &lay.rho_mode {
            RhoMode::Fixed(r) => r[k],
            RhoMode::Optimize => match (lay.y[k], lay.v[k]) {
                (Some(yb), _) => sol.block(yb)[(1, 1)].re,
                (None, Some(vb)) => 1.0 - sol.block(vb)[(1, 1)].re,
                (None, None) => 0.5,
            },
        })
        .map(|r| r.clamp(scn.tuning.rho_min, 1.0 - scn.tuning.rho_min))
        .collect();
    Ok(Raw { gram, rho, status: sol.status, iterations: sol.iterations })
}

/// Solves the beamforming stage and extracts rank-one beamformers.
pub fn solve_p3(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, rho_mode: &RhoMode) -> Result<P3Result, StageError> {
    let raw = run(ch, theta, scn, rho_mode, &Basis::Full)?;
    let mut w = Vec::with_capacity(ch.k());
    let mut residual = Vec::with_capacity(ch.k());
    for g in &raw.gram {
        let (v, r) = conic::evd_rank1(g);
        w.push(v);
        residual.push(r);
    }
    let mut result = P3Result {
        objective: raw.gram.iter().map(|g| g.trace().re).sum(),
        sol: BfSolution { w, rho: raw.rho },
        gram: raw.gram,
        rank_residual: residual,
        fallback: false,
        solver_status: raw.status,
        solver_iterations: raw.iterations,
    };
    let rank_ok = result.rank_residual.iter().all(|r| *r <= scn.tuning.w_rank_tol);
    if !rank_ok || !metrics::audit(ch, theta, &result.sol, scn)?.feasible() {
        let dirs: Vec<CVector> = result
            .sol
            .w
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let n = v.norm();
                if n > 0.0 {
                    v / Complex64::new(n, 0.0)
                } else {
                    // zero beam: fall back to the user's own channel direction
                    let h = metrics::effective_channel(ch, theta, k).unwrap_or_else(|_| CVector::zeros(ch.m()));
                    let hn = h.norm().max(1e-300);
                    h / Complex64::new(hn, 0.0)
                }
            })
            .collect();
        let fixed = run(ch, theta, scn, &RhoMode::Fixed(result.sol.rho.clone()), &Basis::Directions(dirs.clone()));
        let fixed = match fixed {
            Ok(f) => f,
            Err(e) if !rank_ok => return Err(e),
            Err(_) => return Err(StageError::Numerical("beamforming solution failed the feasibility audit".into())),
        };
        result.sol.w = fixed.gram.iter().map(|g| conic::evd_rank1(g).0).collect();
        result.objective = result.sol.bs_power();
        result.gram = fixed.gram;
        result.rank_residual = vec![0.0; ch.k()];
        result.fallback = true;
        result.solver_status = fixed.status;
    }
    if !metrics::audit(ch, theta, &result.sol, scn)?.feasible() {
        return Err(StageError::Numerical("beamforming solution failed the feasibility audit".into()));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::gen_channels;

    fn single_user(m: usize, seed: u64) -> (Scenario, ChannelSet) {
        let scn = Scenario {
            m,
            k: 1,
            n: 0,
            ris_kind: RisKind::None,
            gamma: vec![10.0],
            e_mw: vec![0.01],
            eta: vec![1.0],
            sigma2: vec![1e-10],
            delta2: vec![1e-8],
            ..Scenario::default()
        };
        let ch = gen_channels(&scn, seed).unwrap();
        (scn, ch)
    }

    /// Closed-form MRT power minimized over a dense rho grid.
    fn rho_grid_oracle(scn: &Scenario, h2: f64) -> f64 {
        let need = scn.required_eh_input_w(0).unwrap();
        (1..10_000)
            .map(|i| i as f64 / 10_000.0)
            .map(|r| {
                let sinr = scn.gamma[0] * (scn.sigma2[0] + scn.delta2[0] / r) / h2;
                let eh = need / ((1.0 - r) * scn.eta[0] * h2);
                sinr.max(eh)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_user_matches_rho_oracle() {
        for seed in 0..3 {
            let (scn, ch) = single_user(4, seed);
            let r = solve_p3(&ch, &RisVector::zeros(0), &scn, &RhoMode::Optimize).unwrap();
            let oracle = rho_grid_oracle(&scn, ch.h_b[0].norm_squared());
            assert!(((r.objective - oracle) / oracle).abs() < 5e-3, "{} vs {oracle}", r.objective);
            assert!(r.rank_residual[0] <= 1e-6);
            // MRT: w parallel to h
            let h = &ch.h_b[0];
            let cos = h.dotc(&r.sol.w[0]).norm() / (h.norm() * r.sol.w[0].norm());
            assert!(cos.clamp(-1.0, 1.0).acos() < 1e-3);
        }
    }

    #[test]
    fn zero_channel_is_infeasible() {
        let (scn, mut ch) = single_user(3, 1);
        ch.h_b[0] = CVector::zeros(3);
        assert_eq!(
            solve_p3(&ch, &RisVector::zeros(0), &scn, &RhoMode::Optimize).unwrap_err(),
            StageError::Infeasible { class: ConstraintClass::Sinr }
        );
    }

    #[test]
    fn doubling_noise_doubles_power() {
        let (mut scn, ch) = single_user(4, 2);
        scn.e_mw = vec![0.0];
        let p1 = solve_p3(&ch, &RisVector::zeros(0), &scn, &RhoMode::Optimize).unwrap().objective;
        scn.sigma2[0] *= 2.0;
        scn.delta2[0] *= 2.0;
        let p2 = solve_p3(&ch, &RisVector::zeros(0), &scn, &RhoMode::Optimize).unwrap().objective;
        assert!((p2 / p1 - 2.0).abs() < 1e-6, "{}", p2 / p1);
    }

    #[test]
    fn empty_requirements_need_no_power() {
        let mut scn = Scenario { n: 0, ris_kind: RisKind::None, ..Scenario::default() };
        scn.gamma = vec![0.0; scn.k];
        scn.e_mw = vec![0.0; scn.k];
        let ch = gen_channels(&scn, 3).unwrap();
        let r = solve_p3(&ch, &RisVector::zeros(0), &scn, &RhoMode::Optimize).unwrap();
        assert!(r.objective.abs() < 1e-9);
        assert!(r.sol.rho.iter().all(|x| *x == 0.5));
    }

    #[test]
    fn problem_dimensions() {
        let scn = Scenario::default();
        let ch = gen_channels(&scn, 4).unwrap();
        let (p, lay) = build_p3(&ch, &RisVector::from_phases(&vec![0.1; scn.n]), &scn, &RhoMode::Optimize).unwrap();
        assert_eq!(lay.w.len(), 4);
        assert!(lay.w.iter().all(|b| p.block_dim(*b) == 10));
        assert_eq!(p.constraints.iter().filter(|c| c.label == "reflect").count(), 1);

        let none = Scenario { n: 0, ris_kind: RisKind::None, ..Scenario::default() };
        let ch0 = gen_channels(&none, 4).unwrap();
        let (p0, _) = build_p3(&ch0, &RisVector::zeros(0), &none, &RhoMode::Optimize).unwrap();
        assert!(p0.constraints.iter().all(|c| c.label != "reflect"));
    }

    #[test]
    fn multiuser_active_solution_is_audited() {
        let scn = Scenario::default();
        let ch = gen_channels(&scn, 5).unwrap();
        let theta = RisVector::from_phases(&(0..scn.n).map(|i| i as f64 * 0.7).collect::<Vec<_>>());
        let r = solve_p3(&ch, &theta, &scn, &RhoMode::Optimize).unwrap();
        let a = metrics::audit(&ch, &theta, &r.sol, &scn).unwrap();
        assert!(a.feasible(), "{a:?}");
        assert!(r.rank_residual.iter().all(|x| *x <= 1e-6), "{:?}", r.rank_residual);
        assert!(r.sol.rho.iter().all(|x| *x > 0.0 && *x < 1.0));
        // fixed PS ratios at the optimum reproduce the objective
        let f = solve_p3(&ch, &theta, &scn, &RhoMode::Fixed(r.sol.rho.clone())).unwrap();
        assert!((f.objective - r.objective).abs() < 1e-5 * r.objective);
    }
}
