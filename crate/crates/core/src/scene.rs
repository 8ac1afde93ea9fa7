//! Scenario constants, node geometry, pathloss and channel generation.
//!
//! Channels follow the usual Rician construction
//!
//! ```text
//! h = sqrt(L(d)) * ( sqrt(K/(1+K)) * h_los + sqrt(1/(1+K)) * h_nlos )
//! ```
//!
//! with `L(d) = C0 (d/D0)^-kappa`, unit-modulus uniform-linear-array
//! steering vectors for `h_los` and i.i.d. CN(0, 1) entries for `h_nlos`.
//! The BS array lies along the x axis and the RIS along the y axis, both
//! with half-wavelength spacing.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eh::{EhError, EhModel};
use crate::{seeds, CMatrix, CVector, Complex64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("distances must be positive (d={d}, D0={d0})")]
    NonPositiveDistance { d: f64, d0: f64 },
    #[error("CSI error level must be non-negative, got {0}")]
    NegativeCsiError(f64),
    #[error(transparent)]
    Eh(#[from] EhError),
}

/// What kind of surface (if any) assists the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RisKind {
    /// Amplifying surface with dynamic noise and a reflect-power budget.
    #[default]
    Active,
    /// Unit-modulus phase shifts only; no amplification noise.
    Passive,
    /// No surface; only the direct links are used.
    None,
}

/// Node placement in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: [f64; 2],
    pub ris: [f64; 2],
    pub cluster_center: [f64; 2],
    pub cluster_radius: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs: [3.5, 0.0],
            ris: [0.0, 8.0],
            cluster_center: [3.5, 8.0],
            cluster_radius: 2.5,
        }
    }
}

/// Algorithm knobs that are not system constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    /// PS ratios are confined to `[rho_min, 1 - rho_min]`.
    pub rho_min: f64,
    /// Outer (alternating) iteration cap.
    pub max_outer: usize,
    /// Inner SCA iteration cap of the RIS stage.
    pub max_sca: usize,
    /// Penalty factor of the first SCA iteration; it is divided by
    /// `mu_decay` every iteration until it reaches `mu`.
    pub mu_start: f64,
    pub mu_decay: f64,
    /// Rank tolerance (lambda_2 / lambda_1) for extracted beamformers.
    pub w_rank_tol: f64,
    /// Rank tolerance ((tr - lambda_max) / lambda_max) for the lifted RIS matrix.
    pub t_rank_tol: f64,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            rho_min: 1e-4,
            max_outer: 30,
            max_sca: 50,
            mu_start: 1e2,
            mu_decay: 10.0,
            w_rank_tol: 1e-6,
            t_rank_tol: 1e-4,
        }
    }
}

/// All system constants of one simulation scenario. Powers are in watts
/// except `e_mw`, which feeds the milliwatt-fitted EH model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// BS antennas.
    pub m: usize,
    /// Users.
    pub k: usize,
    /// RIS elements (0 disables the surface).
    pub n: usize,
    pub ris_kind: RisKind,
    /// Linear SINR targets.
    pub gamma: Vec<f64>,
    /// Harvested-power targets (mW).
    pub e_mw: Vec<f64>,
    pub eta: Vec<f64>,
    /// Reflect-power budget of the active RIS (W).
    pub p_max: f64,
    pub sigma2: Vec<f64>,
    pub delta2: Vec<f64>,
    pub sigma2_v: f64,
    pub eh: EhModel,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    pub rician_k_db: f64,
    pub geometry: Geometry,
    pub kappa_direct: f64,
    pub kappa_reflect: f64,
    pub c0_db: f64,
    pub d0: f64,
    pub tuning: Tuning,
}

fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

impl Default for Scenario {
    fn default() -> Self {
        let k = 4;
        Self {
            m: 10,
            k,
            n: 20,
            ris_kind: RisKind::Active,
            gamma: vec![10.0; k],
            e_mw: vec![10f64.powf(-2.0); k],
            eta: vec![1.0; k],
            p_max: 10e-3,
            sigma2: vec![dbm_to_w(-70.0); k],
            delta2: vec![dbm_to_w(-50.0); k],
            sigma2_v: dbm_to_w(-70.0),
            eh: EhModel::default(),
            mu: 5e-5,
            alpha: 1.0,
            beta: 1.0,
            zeta: 1e-3,
            rician_k_db: 10.0,
            geometry: Geometry::default(),
            kappa_direct: 3.0,
            kappa_reflect: 2.2,
            c0_db: -30.0,
            d0: 1.0,
            tuning: Tuning::default(),
        }
    }
}

impl Scenario {
    /// Checks every invariant of the scenario.
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Invalid(msg));
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        for (name, v) in [
            ("gamma", &self.gamma),
            ("e", &self.e_mw),
            ("eta", &self.eta),
            ("sigma2", &self.sigma2),
            ("delta2", &self.delta2),
        ] {
            if v.len() != self.k {
                return bad(format!("{name} has {} entries, expected K={}", v.len(), self.k));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.gamma.iter().any(|&g| g < 0.0) {
            return bad("gamma must be non-negative".into());
        }
        if self.e_mw.iter().any(|&e| e < 0.0) {
            return bad("e must be non-negative".into());
        }
        if self.eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return bad("eta must lie in (0, 1]".into());
        }
        if !(self.p_max > 0.0) {
            return bad("p_max must be positive".into());
        }
        if self.sigma2.iter().chain(&self.delta2).any(|&s| !(s > 0.0)) || !(self.sigma2_v > 0.0) {
            return bad("noise powers must be positive".into());
        }
        EhModel::new(self.eh.a, self.eh.b, self.eh.c)?;
        for (i, &e) in self.e_mw.iter().enumerate() {
            self.eh.required_input(e).map_err(|err| {
                SceneError::Invalid(format!("e[{i}] is not attainable by the EH model: {err}"))
            })?;
        }
        if !(self.mu > 0.0 && self.alpha > 0.0 && self.beta > 0.0) {
            return bad("mu, alpha and beta must be positive".into());
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad("zeta must lie in (0, 1)".into());
        }
        if !(self.d0 > 0.0) || !(self.geometry.cluster_radius >= 0.0) {
            return bad("D0 must be positive and the cluster radius non-negative".into());
        }
        let t = &self.tuning;
        if !(t.rho_min > 0.0 && t.rho_min < 0.5) {
            return bad("rho_min must lie in (0, 0.5)".into());
        }
        if !(t.mu_start > 0.0 && t.mu_decay > 1.0) {
            return bad("mu_start must be positive and mu_decay greater than 1".into());
        }
        Ok(())
    }

    /// RIS dynamic-noise power seen by the metrics: zero unless the surface
    /// is active.
    pub fn ris_noise(&self) -> f64 {
        match self.ris_kind {
            RisKind::Active => self.sigma2_v,
            _ => 0.0,
        }
    }

    /// Number of RIS elements actually in use.
    pub fn elements(&self) -> usize {
        match self.ris_kind {
            RisKind::None => 0,
            _ => self.n,
        }
    }

    /// Copy with `k` users, each taking the first user's targets and noise.
    pub fn with_users(&self, k: usize) -> Scenario {
        let first = |v: &Vec<f64>| vec![v.first().copied().unwrap_or(0.0); k];
        Scenario {
            k,
            gamma: first(&self.gamma),
            e_mw: first(&self.e_mw),
            eta: first(&self.eta),
            sigma2: first(&self.sigma2),
            delta2: first(&self.delta2),
            ..self.clone()
        }
    }

    /// Linear input power (W) user `k` must deliver to its EH circuit.
    pub fn required_eh_input_w(&self, k: usize) -> Result<f64, EhError> {
        Ok(self.eh.required_input(self.e_mw[k])? * 1e-3)
    }
}

/// `C0 (d/D0)^-kappa` as a linear power gain.
pub fn pathloss(d: f64, kappa: f64, c0_db: f64, d0: f64) -> Result<f64, SceneError> {
    if !(d > 0.0 && d0 > 0.0) {
        return Err(SceneError::NonPositiveDistance { d, d0 });
    }
    Ok(10f64.powf(c0_db / 10.0) * (d / d0).powf(-kappa))
}

/// One realization of all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// BS to RIS, N x M.
    pub g: CMatrix,
    /// RIS to user k, length N.
    pub h_r: Vec<CVector>,
    /// BS to user k, length M.
    pub h_b: Vec<CVector>,
    /// User positions (m) used to draw this realization.
    pub users: Vec<[f64; 2]>,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn k(&self) -> usize {
        self.h_b.len()
    }

    /// The same realization with the surface removed.
    pub fn without_ris(&self) -> ChannelSet {
        ChannelSet {
            g: CMatrix::zeros(0, self.m()),
            h_r: vec![CVector::zeros(0); self.k()],
            h_b: self.h_b.clone(),
            users: self.users.clone(),
        }
    }

    fn entries_mut(&mut self) -> impl Iterator<Item = &mut Complex64> {
        self.g
            .iter_mut()
            .chain(self.h_r.iter_mut().flat_map(|v| v.iter_mut()))
            .chain(self.h_b.iter_mut().flat_map(|v| v.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && self.h_r.iter().chain(&self.h_b).all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

fn cn01<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Half-wavelength ULA response along `axis` towards `to`.
fn steering(len: usize, axis: [f64; 2], from: [f64; 2], to: [f64; 2]) -> CVector {
    let d = distance(from, to).max(f64::MIN_POSITIVE);
    let cos = (axis[0] * (to[0] - from[0]) + axis[1] * (to[1] - from[1])) / d;
    CVector::from_fn(len, |i, _| Complex64::from_polar(1.0, -PI * i as f64 * cos))
}

const BS_AXIS: [f64; 2] = [1.0, 0.0];
const RIS_AXIS: [f64; 2] = [0.0, 1.0];

/// Draws users and channels for `scn` deterministically from `seed`.
///
/// Draw order: user positions, then `G`, then per user `h_r` and `h_b`.
/// Scenarios that differ only in `M`/`N` therefore share user positions.
pub fn gen_channels(scn: &Scenario, seed: u64) -> Result<ChannelSet, SceneError> {
    scn.validate()?;
    let (m, k, n) = (scn.m, scn.k, scn.elements());
    let geo = &scn.geometry;
    let kr = 10f64.powf(scn.rician_k_db / 10.0);
    let (w_los, w_nlos) = if kr.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kr / (1.0 + kr)).sqrt(), (1.0 / (1.0 + kr)).sqrt())
    };

    // Separate streams per link, with the surface drawn element by element,
    // so users and direct links do not depend on N and a smaller surface
    // sees the leading elements of a larger one.
    let mut rng = seeds::rng(seed, "users");
    let users: Vec<[f64; 2]> = (0..k)
        .map(|_| {
            let r = geo.cluster_radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            [geo.cluster_center[0] + r * phi.cos(), geo.cluster_center[1] + r * phi.sin()]
        })
        .collect();

    let link = |d: f64, kappa: f64| pathloss(d, kappa, scn.c0_db, scn.d0).map(f64::sqrt);

    let g_amp = link(distance(geo.bs, geo.ris), scn.kappa_reflect)?;
    let a_ris = steering(n, RIS_AXIS, geo.ris, geo.bs);
    let a_bs = steering(m, BS_AXIS, geo.bs, geo.ris);
    let mut rng = seeds::rng(seed, "bs-ris");
    let mut g = CMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let los = a_ris[i] * a_bs[j].conj();
            g[(i, j)] = (los * w_los + cn01(&mut rng) * w_nlos) * g_amp;
        }
    }

    let mut h_r = Vec::with_capacity(k);
    let mut h_b = Vec::with_capacity(k);
    for (idx, u) in users.iter().enumerate() {
        let user_seed = seeds::derive(seed, &[idx as u64]);
        let r_amp = link(distance(geo.ris, *u), scn.kappa_reflect)?;
        let los = steering(n, RIS_AXIS, geo.ris, *u);
        let mut rng = seeds::rng(user_seed, "ris-user");
        h_r.push(CVector::from_fn(n, |i, _| (los[i] * w_los + cn01(&mut rng) * w_nlos) * r_amp));
        let b_amp = link(distance(geo.bs, *u), scn.kappa_direct)?;
        let los = steering(m, BS_AXIS, geo.bs, *u);
        let mut rng = seeds::rng(user_seed, "bs-user");
        h_b.push(CVector::from_fn(m, |i, _| (los[i] * w_los + cn01(&mut rng) * w_nlos) * b_amp));
    }
    Ok(ChannelSet { g, h_r, h_b, users })
}

/// Adds an independent CN(0, xi |h|^2) error to every channel coefficient.
pub fn perturb_csi(ch: &ChannelSet, xi: f64, seed: u64) -> Result<ChannelSet, SceneError> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(SceneError::NegativeCsiError(xi));
    }
    let mut out = ch.clone();
    if xi == 0.0 {
        return Ok(out);
    }
    let mut rng = seeds::rng(seed, "csi-error");
    for h in out.entries_mut() {
        let std = (xi * h.norm_sqr()).sqrt();
        *h += cn01(&mut rng) * std;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pathloss_reference_points() {
        assert!((pathloss(1.0, 3.0, -30.0, 1.0).unwrap() - 1e-3).abs() < 1e-15);
        assert!((pathloss(10.0, 3.0, -30.0, 1.0).unwrap() - 1e-6).abs() < 1e-18);
        for kappa in [0.5, 2.2, 3.0] {
            assert!((pathloss(2.0, kappa, -20.0, 2.0).unwrap() - 1e-2).abs() < 1e-15);
        }
        assert!(pathloss(0.0, 3.0, -30.0, 1.0).is_err());
        assert!(pathloss(1.0, 3.0, -30.0, -1.0).is_err());
    }

    #[test]
    fn default_scenario_is_valid() {
        Scenario::default().validate().unwrap();
        let mut s = Scenario::default();
        s.zeta = 1.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.eh = EhModel { a: 1.0, b: 2.0, c: 1.0 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn channels_are_deterministic_with_expected_shapes() {
        let scn = Scenario::default();
        let a = gen_channels(&scn, 11).unwrap();
        let b = gen_channels(&scn, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.g.nrows(), a.g.ncols()), (scn.n, scn.m));
        assert!(a.h_r.iter().all(|h| h.len() == scn.n));
        assert!(a.h_b.iter().all(|h| h.len() == scn.m));
        assert!(a.is_finite());
        assert_ne!(a, gen_channels(&scn, 12).unwrap());
    }

    #[test]
    fn no_ris_has_empty_reflection_groups() {
        let mut scn = Scenario::default();
        scn.n = 0;
        let ch = gen_channels(&scn, 1).unwrap();
        assert_eq!(ch.g.nrows(), 0);
        assert!(ch.h_r.iter().all(|h| h.is_empty()));
    }

    #[test]
    fn rician_limit_is_los() {
        let mut scn = Scenario::default();
        scn.rician_k_db = 90.0;
        let ch = gen_channels(&scn, 3).unwrap();
        let geo = scn.geometry;
        let amp = pathloss(distance(geo.bs, geo.ris), scn.kappa_reflect, scn.c0_db, scn.d0)
            .unwrap()
            .sqrt();
        let los = steering(scn.n, RIS_AXIS, geo.ris, geo.bs)
            * steering(scn.m, BS_AXIS, geo.bs, geo.ris).adjoint()
            * Complex64::new(amp, 0.0);
        assert!((&ch.g - &los).norm() / los.norm() < 1e-4);
    }

    #[test]
    fn unit_mean_power() {
        let mut scn = Scenario::default();
        scn.m = 1;
        scn.k = 1;
        scn.n = 1;
        for v in [&mut scn.gamma, &mut scn.e_mw, &mut scn.eta, &mut scn.sigma2, &mut scn.delta2] {
            v.truncate(1);
        }
        let mut acc = 0.0;
        let trials = 10_000;
        for s in 0..trials {
            let ch = gen_channels(&scn, s).unwrap();
            let pl = pathloss(distance(ch.users[0], scn.geometry.bs), scn.kappa_direct, scn.c0_db, scn.d0).unwrap();
            acc += ch.h_b[0][0].norm_sqr() / pl;
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn users_stay_in_cluster() {
        let scn = Scenario::default();
        for s in 0..50 {
            for u in gen_channels(&scn, s).unwrap().users {
                assert!(distance(u, scn.geometry.cluster_center) <= scn.geometry.cluster_radius + 1e-12);
            }
        }
    }

    #[test]
    fn csi_error_identity_zero_and_variance() {
        let scn = Scenario::default();
        let ch = gen_channels(&scn, 2).unwrap();
        assert_eq!(perturb_csi(&ch, 0.0, 4).unwrap(), ch);
        assert!(perturb_csi(&ch, -0.1, 4).is_err());

        let p = perturb_csi(&ch, 0.1, 4).unwrap();
        assert_eq!(p, perturb_csi(&ch, 0.1, 4).unwrap());
        assert_eq!(p.g.shape(), ch.g.shape());

        let mut zero = ch.clone();
        zero.h_b[0][0] = Complex64::new(0.0, 0.0);
        assert_eq!(perturb_csi(&zero, 0.3, 9).unwrap().h_b[0][0], Complex64::new(0.0, 0.0));

        let xi = 0.1;
        let h = ch.h_b[1][2];
        let trials = 10_000;
        let mut acc = 0.0;
        for s in 0..trials {
            let q = perturb_csi(&ch, xi, s).unwrap();
            acc += (q.h_b[1][2] - h).norm_sqr() / h.norm_sqr();
        }
        let mean = acc / trials as f64;
        assert!((mean - xi).abs() < 0.05 * xi, "{mean}");
    }

    #[test]
    fn resizing_users_keeps_a_valid_scenario() {
        let s = Scenario::default().with_users(7);
        assert_eq!((s.k, s.gamma.len(), s.delta2.len()), (7, 7, 7));
        assert!(s.validate().is_ok());
        assert_eq!(s.e_mw[6], Scenario::default().e_mw[0]);
    }

    #[test]
    fn smaller_surfaces_nest_in_larger_ones() {
        let small = gen_channels(&Scenario { n: 8, ..Scenario::default() }, 12).unwrap();
        let large = gen_channels(&Scenario { n: 40, ..Scenario::default() }, 12).unwrap();
        assert_eq!(small.users, large.users);
        assert_eq!(small.h_b, large.h_b);
        assert_eq!(small.g, large.g.rows(0, 8).into_owned());
        for k in 0..small.k() {
            assert_eq!(small.h_r[k], large.h_r[k].rows(0, 8).into_owned());
        }
    }
}
