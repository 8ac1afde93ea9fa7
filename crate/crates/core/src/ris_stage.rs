//! RIS design for fixed beamformers: penalized SDR with successive convex
//! approximation of the rank-one constraint.
//!
//! With `x = [conj(theta); 1]` every received amplitude is linear in `x`:
//! `h_k^H w_j = x^H v_kj` with `v_kj = [b_kj; a_kj]`. Lifting `T = x x^H`
//! turns SINR, EH and reflect-power constraints into linear constraints on a
//! PSD matrix with `T[N][N] = 1`. The rank-one requirement is replaced by
//! the penalty `tr(T) - lambda_max(T)`, whose concave part is linearized at
//! the previous iterate. Non-negative slacks reward SINR and EH margins.
//!
//! The SDP is solved in scaled coordinates `T = D T' D`, `D = diag(s, ..,
//! s, 1)`, where `s` is the uniform amplitude that exhausts the reflect
//! budget, so that all entries of `T'` are of order one.

use nalgebra::DVector;
use serde::Serialize;

use crate::bf_stage::{ConstraintClass, StageError};
use crate::conic::{self, BlockId, HermCoeff, LinearForm, ScalarId, SdpProblem, SdpSettings, SdpStatus, Sense};
use crate::metrics::{self, BfSolution, MetricsError, RisVector};
use crate::scene::{ChannelSet, RisKind, Scenario};
use crate::{CMatrix, CVector, Complex64};

/// Quantities of the lifted problem for fixed beamformers.
#[derive(Debug, Clone)]
pub struct LiftedData {
    /// `a[k][i] = h_b,k^H w_i`.
    pub a: Vec<Vec<Complex64>>,
    /// `b[k][i][n] = conj(h_r,k[n]) (G w_i)[n]`.
    pub b: Vec<Vec<CVector>>,
    /// `|(G w_i)[n]|^2`.
    pub q_diag: Vec<DVector<f64>>,
    /// `|h_r,k[n]|^2`.
    pub z_diag: Vec<DVector<f64>>,
}

impl LiftedData {
    pub fn n(&self) -> usize {
        self.z_diag.first().map_or(0, |z| z.len())
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    /// `[b_kj; a_kj]`, so that `x^H v_kj = h_k^H w_j`.
    pub fn v(&self, k: usize, j: usize) -> CVector {
        let n = self.n();
        CVector::from_fn(n + 1, |i, _| if i < n { self.b[k][j][i] } else { self.a[k][j] })
    }

    /// `v_kj v_kj^H` with the constant `|a_kj|^2` removed from the corner.
    pub fn s_matrix(&self, k: usize, j: usize) -> CMatrix {
        let v = self.v(k, j);
        let mut s = &v * v.adjoint();
        let n = self.n();
        s[(n, n)] -= Complex64::new(self.a[k][j].norm_sqr(), 0.0);
        s
    }

    fn padded_diag(d: &DVector<f64>) -> CMatrix {
        let n = d.len();
        CMatrix::from_fn(n + 1, n + 1, |i, j| if i == j && i < n { Complex64::new(d[i], 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    /// Zero-padded `diag(|G w_i|^2)`.
    pub fn q_matrix(&self, i: usize) -> CMatrix {
        Self::padded_diag(&self.q_diag[i])
    }

    /// Zero-padded `diag(|h_r,k|^2)`.
    pub fn z_matrix(&self, k: usize) -> CMatrix {
        Self::padded_diag(&self.z_diag[k])
    }
}

/// Builds the lifted data for beamformers `sol`.
pub fn lift(ch: &ChannelSet, sol: &BfSolution) -> Result<LiftedData, MetricsError> {
    if sol.w.len() != ch.k() || sol.w.iter().any(|w| w.len() != ch.m()) {
        return Err(MetricsError::Dimension("beamformers do not match the channels".into()));
    }
    let n = ch.n();
    let gw: Vec<CVector> = sol.w.iter().map(|w| &ch.g * w).collect();
    let a = (0..ch.k()).map(|k| sol.w.iter().map(|w| ch.h_b[k].dotc(w)).collect()).collect();
    let b = (0..ch.k())
        .map(|k| gw.iter().map(|g| CVector::from_fn(n, |i, _| ch.h_r[k][i].conj() * g[i])).collect())
        .collect();
    Ok(LiftedData {
        a,
        b,
        q_diag: gw.iter().map(|g| g.map(|z| z.norm_sqr())).collect(),
        z_diag: ch.h_r.iter().map(|h| h.map(|z| z.norm_sqr())).collect(),
    })
}

/// `x x^H` for `x = [conj(theta); 1]`.
pub fn lifted_outer(theta: &RisVector) -> CMatrix {
    let x = theta.lifted();
    &x * x.adjoint()
}

/// `(tr(T) - lambda_max(T)) / lambda_max(T)`.
pub fn rank_gap(t: &CMatrix) -> f64 {
    let (l1, _, _) = conic::dominant_eigenpair(t);
    if l1 <= 0.0 {
        return 0.0;
    }
    ((t.trace().re - l1) / l1).max(0.0)
}

/// RIS vector from a (numerically) rank-one lifted matrix.
pub fn extract_theta(t: &CMatrix) -> Result<RisVector, StageError> {
    let (v, _) = conic::evd_rank1(t);
    let n = v.len().saturating_sub(1);
    if v.is_empty() || v[n].norm() < 1e-9 {
        return Err(StageError::Numerical("lifted vector has a vanishing last entry".into()));
    }
    RisVector::from_lifted(&v).ok_or_else(|| StageError::Numerical("non-finite lifted vector".into()))
}

/// Handles into a built penalized problem.
#[derive(Debug, Clone)]
pub struct P7Layout {
    pub t: BlockId,
    pub tau: Vec<Option<ScalarId>>,
    pub delta: Vec<Option<ScalarId>>,
    /// Amplitude scale `s` of `D`.
    pub scale: f64,
    /// Penalty weight `1 / (2 mu)`.
    pub weight: f64,
    /// Dominant eigenpair of the scaled linearization point.
    pub u1: CVector,
    pub lambda_ref: f64,
    pub t_ref_scaled: CMatrix,
}

impl P7Layout {
    fn d(&self, n: usize) -> CVector {
        CVector::from_fn(n + 1, |i, _| Complex64::new(if i < n { self.scale } else { 1.0 }, 0.0))
    }

    /// Scaled matrix `T'` back to `T`.
    pub fn unscale(&self, ts: &CMatrix) -> CMatrix {
        let n = ts.nrows() - 1;
        let d = self.d(n);
        CMatrix::from_fn(n + 1, n + 1, |i, j| ts[(i, j)] * d[i] * d[j])
    }

    /// `T` to scaled `T'`.
    pub fn rescale(&self, t: &CMatrix) -> CMatrix {
        let n = t.nrows() - 1;
        let d = self.d(n);
        CMatrix::from_fn(n + 1, n + 1, |i, j| t[(i, j)] / (d[i] * d[j]))
    }

    /// Penalty `(1/2mu)(tr T' - lambda_ref - <u u^H, T' - T'_ref>)` at scaled `T'`.
    pub fn penalty_term(&self, ts: &CMatrix) -> f64 {
        let lin = (self.u1.adjoint() * (ts - &self.t_ref_scaled) * &self.u1)[(0, 0)].re;
        self.weight * (ts.trace().re - self.lambda_ref - lin)
    }
}

fn amplitude_scale(ld: &LiftedData, scn: &Scenario) -> f64 {
    if scn.ris_kind != RisKind::Active {
        return 1.0;
    }
    let load: f64 = ld.q_diag.iter().map(|q| q.sum()).sum::<f64>() + ld.n() as f64 * scn.sigma2_v;
    if load > 0.0 {
        (scn.p_max / load).sqrt()
    } else {
        1.0
    }
}

fn quad(v: &CVector, t: &CMatrix) -> f64 {
    (v.adjoint() * t * v)[(0, 0)].re
}

fn z_form(z: &DVector<f64>, t: &CMatrix) -> f64 {
    z.iter().enumerate().map(|(i, zi)| zi * t[(i, i)].re).sum()
}

/// Builds the penalized SDP linearized at `t_ref` (unscaled coordinates).
pub fn build_p7(
    ld: &LiftedData,
    scn: &Scenario,
    t_ref: &CMatrix,
    sol: &BfSolution,
    mu: f64,
) -> Result<(SdpProblem, P7Layout), StageError> {
    let (n, k_users) = (ld.n(), ld.k());
    if t_ref.nrows() != n + 1 || t_ref.ncols() != n + 1 || sol.rho.len() != k_users {
        return Err(MetricsError::Dimension("linearization point does not match the lifted data".into()).into());
    }
    let s = amplitude_scale(ld, scn);
    let d = CVector::from_fn(n + 1, |i, _| Complex64::new(if i < n { s } else { 1.0 }, 0.0));
    let scale_v = |v: &CVector| v.component_mul(&d);
    let scale_z = |z: &DVector<f64>| DVector::from_fn(n + 1, |i, _| if i < n { z[i] * s * s } else { 0.0 });
    let sigma_v = scn.ris_noise();

    let mut layout = P7Layout {
        t: BlockId(0),
        tau: vec![None; k_users],
        delta: vec![None; k_users],
        scale: s,
        weight: 0.5 / mu,
        u1: CVector::zeros(n + 1),
        lambda_ref: 0.0,
        t_ref_scaled: CMatrix::zeros(n + 1, n + 1),
    };
    layout.t_ref_scaled = layout.rescale(t_ref);
    let (l1, u1, _) = conic::dominant_eigenpair(&layout.t_ref_scaled);
    layout.lambda_ref = l1;
    layout.u1 = u1;

    let mut p = SdpProblem::new();
    let t = p.add_block("T", n + 1);
    layout.t = t;
    for k in 0..k_users {
        if scn.gamma[k] > 0.0 {
            layout.tau[k] = Some(p.add_scalar(format!("tau{k}")));
        }
        if scn.e_mw[k] > 0.0 {
            layout.delta[k] = Some(p.add_scalar(format!("delta{k}")));
        }
    }

    let mut obj = LinearForm::new().block(
        t,
        HermCoeff::identity(n + 1).rank_one(-1.0, layout.u1.clone()).scaled(layout.weight),
    );
    for k in 0..k_users {
        if let Some(tau) = layout.tau[k] {
            obj = obj.scalar(tau, -scn.alpha);
        }
        if let Some(dl) = layout.delta[k] {
            obj = obj.scalar(dl, -scn.beta);
        }
    }
    p.set_objective(obj);

    p.constrain("corner", LinearForm::new().block(t, HermCoeff::new().entry(n, n, Complex64::new(1.0, 0.0))), Sense::Eq, 1.0);

    for k in 0..k_users {
        let rho = sol.rho[k];
        if !(rho > 0.0 && rho < 1.0) {
            return Err(MetricsError::Rho { k, rho }.into());
        }
        let noise = scn.sigma2[k] + scn.delta2[k] / rho;
        if let Some(tau) = layout.tau[k] {
            let g = scn.gamma[k];
            let mut c = HermCoeff::new().rank_one(1.0, scale_v(&ld.v(k, k)));
            let mut den_ref = noise + sigma_v * z_form(&ld.z_diag[k], t_ref);
            for j in (0..k_users).filter(|j| *j != k) {
                let v = ld.v(k, j);
                den_ref += quad(&v, t_ref);
                c = c.rank_one(-g, scale_v(&v));
            }
            if sigma_v > 0.0 {
                c = c.diagonal(scale_z(&ld.z_diag[k]) * (-g * sigma_v));
            }
            p.constrain(format!("sinr[{k}]"), LinearForm::new().block(t, c).scalar(tau, -g * den_ref), Sense::Ge, g * noise);
        }
        if let Some(dl) = layout.delta[k] {
            let need = scn.required_eh_input_w(k).map_err(|e| StageError::Numerical(e.to_string()))? / (scn.eta[k] * (1.0 - rho));
            let mut c = HermCoeff::new();
            for j in 0..k_users {
                c = c.rank_one(1.0, scale_v(&ld.v(k, j)));
            }
            if sigma_v > 0.0 {
                c = c.diagonal(scale_z(&ld.z_diag[k]) * sigma_v);
            }
            p.constrain(format!("eh[{k}]"), LinearForm::new().block(t, c).scalar(dl, -need), Sense::Ge, need);
        }
    }

    match scn.ris_kind {
        RisKind::Active => {
            let mut dg = DVector::from_element(n + 1, 0.0);
            for q in &ld.q_diag {
                dg += scale_z(q);
            }
            for i in 0..n {
                dg[i] += sigma_v * s * s;
            }
            p.constrain("reflect", LinearForm::new().block(t, HermCoeff::new().diagonal(dg)), Sense::Le, scn.p_max);
        }
        RisKind::Passive => {
            for i in 0..n {
                p.constrain(format!("unit[{i}]"), LinearForm::new().block(t, HermCoeff::new().entry(i, i, Complex64::new(1.0, 0.0))), Sense::Eq, 1.0);
            }
        }
        RisKind::None => {}
    }
    Ok((p, layout))
}

#[derive(Debug, Clone, Serialize)]
pub struct IppaResult {
    #[serde(skip)]
    pub t: CMatrix,
    pub theta: RisVector,
    pub tau: Vec<f64>,
    pub delta: Vec<f64>,
    /// `tr(T) - lambda_max(T)` after each penalized solve.
    pub penalty_history: Vec<f64>,
    /// Penalized objective after each solve.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    /// Interior-point iterations summed over all solves.
    pub solver_iterations: usize,
    /// Solves that stopped short of the gap tolerance but were primal feasible.
    pub inexact_solves: usize,
    /// `(tr T - lambda_max) / lambda_max` of the final iterate.
    pub rank_gap: f64,
    /// Stopping rule met before the iteration cap.
    pub converged: bool,
    /// Fraction of the step toward the extracted vector that was kept
    /// (1 unless the audit forced a back-off; 0 keeps the start vector).
    pub step: f64,
}

/// Largest primal residual at which a stalled solve is still used.
const PRIMAL_ACCEPT: f64 = 1e-6;

fn settings() -> SdpSettings {
    SdpSettings { tol_feas: 1e-8, tol_gap: 1e-8, ..SdpSettings::default() }
}

fn audit_ok(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario) -> bool {
    metrics::audit(ch, theta, sol, scn).map(|a| a.feasible()).unwrap_or(false)
}

/// Penalty/SCA iterations starting from `theta0` for fixed `sol`.
pub fn ippa(ch: &ChannelSet, scn: &Scenario, theta0: &RisVector, sol: &BfSolution) -> Result<IppaResult, StageError> {
    let ld = lift(ch, sol)?;
    let tuning = &scn.tuning;
    let mut t_ref = lifted_outer(theta0);
    let mut result = IppaResult {
        t: t_ref.clone(),
        theta: theta0.clone(),
        tau: vec![0.0; ch.k()],
        delta: vec![0.0; ch.k()],
        penalty_history: Vec::new(),
        objective_history: Vec::new(),
        iterations: 0,
        solver_iterations: 0,
        inexact_solves: 0,
        rank_gap: 0.0,
        converged: false,
        step: 0.0,
    };
    let mut prev_f3: Option<f64> = None;
    for j in 0..tuning.max_sca {
        let mu_j = (tuning.mu_start / tuning.mu_decay.powi(j as i32)).max(scn.mu);
        let (p, lay) = build_p7(&ld, scn, &t_ref, sol, mu_j)?;
        let sdp = conic::solve(&p, &settings())?;
        result.solver_iterations += sdp.iterations;
        match sdp.status {
            SdpStatus::Optimal => {}
            // degenerate instances (no margin left to gain) can stall the
            // gap; a primal-feasible iterate is still a valid design point
            SdpStatus::NumericalFailure if sdp.primal_residual <= PRIMAL_ACCEPT => result.inexact_solves += 1,
            SdpStatus::Infeasible if j == 0 => {
                let class = sdp
                    .dominant_constraint(&p)
                    .map(|i| match p.constraints[i].label.split('[').next() {
                        Some("sinr") => ConstraintClass::Sinr,
                        Some("eh") => ConstraintClass::Eh,
                        _ => ConstraintClass::Reflect,
                    })
                    .unwrap_or(ConstraintClass::Reflect);
                return Err(StageError::Infeasible { class });
            }
            _ if j == 0 => return Err(StageError::Numerical(format!("penalized SDP ended with {:?}", sdp.status))),
            _ => break,
        }
        let ts = sdp.block(lay.t).clone();
        let t = lay.unscale(&ts);
        let tau: Vec<f64> = lay.tau.iter().map(|s| s.map_or(0.0, |s| sdp.scalar(s).max(0.0))).collect();
        let delta: Vec<f64> = lay.delta.iter().map(|s| s.map_or(0.0, |s| sdp.scalar(s).max(0.0))).collect();
        let f3 = lay.penalty_term(&ts) - scn.alpha * tau.iter().sum::<f64>() - scn.beta * delta.iter().sum::<f64>();
        let (l1, _, _) = conic::dominant_eigenpair(&t);
        result.penalty_history.push((t.trace().re - l1).max(0.0));
        result.objective_history.push(f3);
        result.iterations = j + 1;
        result.rank_gap = rank_gap(&t);
        result.tau = tau;
        result.delta = delta;
        result.t = t.clone();
        t_ref = t;
        // A rank-one iterate that no longer moves the objective stays optimal
        // for every larger penalty weight, so the continuation may stop.
        let rank_one = result.rank_gap <= tuning.t_rank_tol;
        if let Some(prev) = prev_f3 {
            if rank_one && (f3 - prev).abs() <= scn.zeta * prev.abs().max(1e-12) {
                result.converged = true;
                break;
            }
        }
        prev_f3 = Some(f3);
    }

    let mut candidate = extract_theta(&result.t)?;
    if scn.ris_kind == RisKind::Passive {
        candidate = candidate.unit_modulus();
    }
    if audit_ok(ch, &candidate, sol, scn) {
        result.theta = candidate;
        result.step = 1.0;
        return Ok(result);
    }
    let mut lambda = 0.5;
    while lambda > 1e-3 {
        let mut mixed = RisVector::new(&theta0.theta * Complex64::new(1.0 - lambda, 0.0) + &candidate.theta * Complex64::new(lambda, 0.0));
        if scn.ris_kind == RisKind::Passive {
            mixed = mixed.unit_modulus();
        }
        if audit_ok(ch, &mixed, sol, scn) {
            result.theta = mixed;
            result.step = lambda;
            return Ok(result);
        }
        lambda *= 0.5;
    }
    result.theta = theta0.clone();
    result.step = 0.0;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bf_stage::{solve_p3, RhoMode};
    use crate::scene::gen_channels;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cvec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> CVector {
        CVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
    }

    fn random_case(seed: u64, m: usize, k: usize, n: usize) -> (Scenario, ChannelSet, RisVector, BfSolution) {
        let scn = Scenario { m, k, n, gamma: vec![1.0; k], e_mw: vec![0.01; k], eta: vec![1.0; k], sigma2: vec![1e-11; k], delta2: vec![1e-9; k], ..Scenario::default() };
        let ch = gen_channels(&scn, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let theta = RisVector::new(cvec(&mut rng, n, 2.0));
        let sol = BfSolution { w: (0..k).map(|_| cvec(&mut rng, m, 0.1)).collect(), rho: vec![0.5; k] };
        (scn, ch, theta, sol)
    }

    #[test]
    fn lifted_forms_match_direct_evaluation() {
        for seed in 0..20 {
            let (scn, ch, theta, sol) = random_case(seed, 4, 3, 6);
            let ld = lift(&ch, &sol).unwrap();
            let x = theta.lifted();
            let t = lifted_outer(&theta);
            for k in 0..3 {
                let h = metrics::effective_channel(&ch, &theta, k).unwrap();
                for j in 0..3 {
                    let direct = h.dotc(&sol.w[j]);
                    assert!((x.dotc(&ld.v(k, j)) - direct).norm() <= 1e-10 * direct.norm().max(1e-300));
                    let s = ld.s_matrix(k, j);
                    let lifted = (s.adjoint() - &s).norm() + 0.0;
                    assert!(lifted <= 1e-14 * s.norm());
                    let p = (&s * &t).trace().re + ld.a[k][j].norm_sqr();
                    assert!((p - direct.norm_sqr()).abs() <= 1e-10 * direct.norm_sqr());
                    assert_eq!(s[(ld.n(), ld.n())], Complex64::new(0.0, 0.0));
                }
            }
            let reflect: f64 =
                (0..3).map(|i| (ld.q_matrix(i) * &t).trace().re).sum::<f64>() + scn.sigma2_v * theta.energy();
            let direct = metrics::reflect_power(&ch, &theta, &sol, &scn);
            assert!((reflect - direct).abs() <= 1e-10 * direct);
        }
    }

    #[test]
    fn zero_beamformer_lifts_to_zero() {
        let (_, ch, _, mut sol) = random_case(1, 3, 2, 4);
        sol.w[1] = CVector::zeros(3);
        let ld = lift(&ch, &sol).unwrap();
        for k in 0..2 {
            assert_eq!(ld.a[k][1], Complex64::new(0.0, 0.0));
            assert!(ld.b[k][1].iter().all(|z| z.norm() == 0.0));
            assert!(ld.s_matrix(k, 1).iter().all(|z| z.norm() == 0.0));
        }
        assert!(ld.q_diag[1].iter().all(|q| *q == 0.0));
    }

    #[test]
    fn surface_off_leaves_direct_link() {
        let (_, ch, _, sol) = random_case(2, 3, 2, 5);
        let ld = lift(&ch, &sol).unwrap();
        let t = lifted_outer(&RisVector::zeros(5));
        for k in 0..2 {
            for j in 0..2 {
                let p = (ld.s_matrix(k, j) * &t).trace().re + ld.a[k][j].norm_sqr();
                let direct = ch.h_b[k].dotc(&sol.w[j]).norm_sqr();
                assert!((p - direct).abs() <= 1e-12 * direct);
            }
        }
    }

    #[test]
    fn problem_dimensions() {
        let (scn, ch, theta, sol) = random_case(3, 3, 2, 4);
        let ld = lift(&ch, &sol).unwrap();
        let (p, lay) = build_p7(&ld, &scn, &lifted_outer(&theta), &sol, 1.0).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.block_dim(lay.t), 5);
        assert_eq!(p.scalars.len(), 4);
        assert!((lay.weight - 0.5).abs() < 1e-15);
    }

    #[test]
    fn penalty_is_tight_at_the_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (scn, ch, _, sol) = random_case(4, 3, 2, 4);
        let ld = lift(&ch, &sol).unwrap();
        for _ in 0..5 {
            // full-rank reference
            let a = CMatrix::from_fn(5, 5, |_, _| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
            let t_ref = &a * a.adjoint();
            let (_, lay) = build_p7(&ld, &scn, &t_ref, &sol, 0.25).unwrap();
            let ts = lay.rescale(&t_ref);
            let (l1, _, _) = conic::dominant_eigenpair(&ts);
            let expected = lay.weight * (ts.trace().re - l1);
            assert!((lay.penalty_term(&ts) - expected).abs() <= 1e-10 * expected.abs().max(1.0));
            assert!((lay.unscale(&ts) - &t_ref).norm() <= 1e-12 * t_ref.norm());
        }
    }

    #[test]
    fn extraction_round_trips() {
        let x = CVector::from_vec(vec![Complex64::new(1.0, 1.0) / 2f64.sqrt() * 2.0, Complex64::new(1.0, 0.0)]);
        let theta = extract_theta(&(&x * x.adjoint())).unwrap();
        // x = [conj(theta); 1]
        assert!((theta.theta[0] - Complex64::from_polar(2.0, -std::f64::consts::FRAC_PI_4)).norm() < 1e-9);
        assert!((theta.lifted() - &x).norm() < 1e-9);

        let mut e = CMatrix::zeros(4, 4);
        e[(3, 3)] = Complex64::new(1.0, 0.0);
        assert!(extract_theta(&e).unwrap().theta.iter().all(|z| z.norm() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let theta = RisVector::new(cvec(&mut rng, 16, 1.5));
        let back = extract_theta(&lifted_outer(&theta)).unwrap();
        assert!((&back.theta - &theta.theta).norm() <= 1e-8 * theta.theta.norm());
        assert!(rank_gap(&lifted_outer(&theta)) < 1e-12);
    }

    #[test]
    fn degenerate_corner_fails_extraction() {
        let x = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        assert!(extract_theta(&(&x * x.adjoint())).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn linearization_underestimates_lambda_max(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| {
                let a = CMatrix::from_fn(n + 1, n + 1, |_, _| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
                &a * a.adjoint()
            };
            let (t_ref, t) = (mk(&mut rng), mk(&mut rng));
            let (l_ref, u, _) = conic::dominant_eigenpair(&t_ref);
            let psi = l_ref + (u.adjoint() * (&t - &t_ref) * &u)[(0, 0)].re;
            let (l, _, _) = conic::dominant_eigenpair(&t);
            prop_assert!(psi <= l * (1.0 + 1e-10));
        }
    }

    /// Single-user instance with the EH target removed, and beamformers
    /// from the beamforming stage at `theta0`.
    fn single_user(seed: u64) -> (Scenario, ChannelSet, RisVector, BfSolution) {
        let scn = Scenario { m: 2, k: 1, n: 1, gamma: vec![10.0], e_mw: vec![0.0], eta: vec![1.0], sigma2: vec![1e-11], delta2: vec![1e-9], ..Scenario::default() };
        let ch = gen_channels(&scn, seed).unwrap();
        let theta0 = RisVector::from_phases(&[0.3]);
        let sol = solve_p3(&ch, &theta0, &scn, &RhoMode::Optimize).unwrap().sol;
        (scn, ch, theta0, sol)
    }

    /// `|h^H w|^2 - gamma * noise`, the quantity the SINR slack rewards.
    fn sinr_residual(ch: &ChannelSet, scn: &Scenario, sol: &BfSolution, theta: &RisVector) -> f64 {
        let h = metrics::effective_channel(ch, theta, 0).unwrap();
        let noise = scn.sigma2[0] + scn.delta2[0] / sol.rho[0] + scn.sigma2_v * ch.h_r[0][0].norm_sqr() * theta.energy();
        h.dotc(&sol.w[0]).norm_sqr() - scn.gamma[0] * noise
    }

    #[test]
    fn single_element_matches_grid_oracle() {
        for seed in 0..3 {
            let (scn, ch, theta0, sol) = single_user(seed);
            let r = ippa(&ch, &scn, &theta0, &sol).unwrap();
            assert!(r.converged && r.rank_gap <= 1e-4, "{r:?}");
            assert!(metrics::audit(&ch, &r.theta, &sol, &scn).unwrap().feasible());
            let got = sinr_residual(&ch, &scn, &sol, &r.theta);

            let load = (&ch.g * &sol.w[0])[0].norm_sqr() + scn.sigma2_v;
            let a_max = (scn.p_max / load).sqrt();
            let mut best = f64::NEG_INFINITY;
            for i in 0..400 {
                let a = a_max * i as f64 / 399.0;
                for p in 0..360 {
                    let th = RisVector::new(CVector::from_element(1, Complex64::from_polar(a, (p as f64).to_radians())));
                    best = best.max(sinr_residual(&ch, &scn, &sol, &th));
                }
            }
            assert!(best > 0.0);
            assert!((got - best).abs() <= 0.01 * best, "seed {seed}: {got} vs grid {best}");
        }
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let (scn, ch, theta0, sol) = single_user(5);
        let first = ippa(&ch, &scn, &theta0, &sol).unwrap();
        let again = ippa(&ch, &scn, &first.theta, &sol).unwrap();
        assert!(again.converged && again.iterations <= 2, "{again:?}");
        let (f0, f1) = (sinr_residual(&ch, &scn, &sol, &first.theta), sinr_residual(&ch, &scn, &sol, &again.theta));
        assert!((f1 - f0).abs() <= scn.zeta * f0.abs());
    }

    /// Multiuser instance with feasible beamformers at random phases.
    fn multiuser(seed: u64, n: usize, kind: RisKind) -> (Scenario, ChannelSet, RisVector, BfSolution) {
        let scn = Scenario { n, ris_kind: kind, ..Scenario::default() };
        let ch = gen_channels(&Scenario { ris_kind: RisKind::Active, ..scn.clone() }, seed).unwrap();
        let theta0 = crate::bcd::random_phases(n, seed);
        let sol = solve_p3(&ch, &theta0, &scn, &RhoMode::Optimize).unwrap().sol;
        (scn, ch, theta0, sol)
    }

    #[test]
    fn multiuser_design_is_rank_one_and_audited() {
        for (seed, kind) in [(1, RisKind::Active), (2, RisKind::Passive)] {
            let (scn, ch, theta0, sol) = multiuser(seed, 8, kind);
            let r = ippa(&ch, &scn, &theta0, &sol).unwrap();
            assert!(r.rank_gap <= scn.tuning.t_rank_tol, "{}", r.rank_gap);
            assert!(r.tau.iter().chain(&r.delta).all(|s| *s >= 0.0));
            assert!(metrics::audit(&ch, &r.theta, &sol, &scn).unwrap().feasible());
            if kind == RisKind::Passive {
                assert!(r.theta.theta.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn penalty_decreases_at_fixed_weight() {
        for seed in 0..10 {
            let (mut scn, ch, theta0, sol) = multiuser(100 + seed, 8, RisKind::Active);
            scn.tuning.mu_start = scn.mu;
            let r = ippa(&ch, &scn, &theta0, &sol).unwrap();
            let h = &r.penalty_history;
            // the penalty starts at the solver accuracy floor, so only
            // increases above that floor count
            let scale = r.t.trace().re;
            for w in h.windows(2) {
                assert!(w[1] <= w[0] + 1e-7 * scale, "seed {seed}: {h:?}");
            }
        }
    }
}
