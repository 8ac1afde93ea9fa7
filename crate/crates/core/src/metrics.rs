//! SINR, harvested power, reflect power and total power of a candidate
//! design, evaluated from the raw channels.
//!
//! The RIS coefficients are stored as `theta[n] = p_n e^{j theta_n}` and act
//! on the cascaded channel as `h_k^H = h_r,k^H diag(theta) G + h_b,k^H`. The
//! lifted vector used by the RIS stage is `[conj(theta); 1]`.

use serde::Serialize;
use thiserror::Error;

use crate::eh::EhError;
use crate::scene::{ChannelSet, RisKind, Scenario};
use crate::{CVector, Complex64};

/// Relative SINR tolerance of the feasibility audit.
pub const SINR_TOL: f64 = 1e-4;
/// Relative harvested-power tolerance of the feasibility audit.
pub const EH_TOL: f64 = 1e-4;
/// Relative reflect-power tolerance of the feasibility audit.
pub const REFLECT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rho[{k}] = {rho} is outside (0, 1)")]
    Rho { k: usize, rho: f64 },
    #[error(transparent)]
    Eh(#[from] EhError),
}

/// Diagonal RIS coefficients (amplitude and phase together).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RisVector {
    pub theta: CVector,
}

impl RisVector {
    pub fn new(theta: CVector) -> Self {
        Self { theta }
    }

    pub fn zeros(n: usize) -> Self {
        Self { theta: CVector::zeros(n) }
    }

    /// Unit-modulus coefficients with the given phases.
    pub fn from_phases(phases: &[f64]) -> Self {
        Self {
            theta: CVector::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p))),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `[conj(theta); 1]`.
    pub fn lifted(&self) -> CVector {
        let n = self.theta.len();
        CVector::from_fn(n + 1, |i, _| if i < n { self.theta[i].conj() } else { Complex64::new(1.0, 0.0) })
    }

    /// Inverse of [`RisVector::lifted`] for any non-zero scaling of the
    /// lifted vector: the last entry is normalized to one.
    pub fn from_lifted(v: &CVector) -> Option<Self> {
        let n = v.len().checked_sub(1)?;
        let last = v[n];
        if last.norm() == 0.0 || !last.re.is_finite() || !last.im.is_finite() {
            return None;
        }
        Some(Self {
            theta: CVector::from_fn(n, |i, _| (v[i] / last).conj()),
        })
    }

    /// Projects every entry onto the unit circle (zero entries get phase 0).
    pub fn unit_modulus(&self) -> Self {
        Self {
            theta: self.theta.map(|z| {
                if z.norm() > 0.0 {
                    z / z.norm()
                } else {
                    Complex64::new(1.0, 0.0)
                }
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Sum of `|theta[n]|^2`.
    pub fn energy(&self) -> f64 {
        self.theta.norm_squared()
    }
}

/// Beamformers and power-splitting ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BfSolution {
    pub w: Vec<CVector>,
    pub rho: Vec<f64>,
}

impl BfSolution {
    /// BS transmit power `sum_k |w_k|^2`.
    pub fn bs_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }
}

fn check_theta(ch: &ChannelSet, theta: &RisVector) -> Result<(), MetricsError> {
    if theta.len() != ch.n() {
        return Err(MetricsError::Dimension(format!("theta has {} entries, channels have N={}", theta.len(), ch.n())));
    }
    Ok(())
}

fn check_sol(ch: &ChannelSet, sol: &BfSolution) -> Result<(), MetricsError> {
    if sol.w.len() != ch.k() || sol.rho.len() != ch.k() {
        return Err(MetricsError::Dimension(format!(
            "{} beamformers and {} PS ratios for K={}",
            sol.w.len(),
            sol.rho.len(),
            ch.k()
        )));
    }
    if let Some(w) = sol.w.iter().find(|w| w.len() != ch.m()) {
        return Err(MetricsError::Dimension(format!("beamformer of length {} for M={}", w.len(), ch.m())));
    }
    Ok(())
}

/// `h_k = h_b,k + G^H (conj(theta) .* h_r,k)`.
pub fn effective_channel(ch: &ChannelSet, theta: &RisVector, k: usize) -> Result<CVector, MetricsError> {
    check_theta(ch, theta)?;
    if k >= ch.k() {
        return Err(MetricsError::Dimension(format!("user {k} of K={}", ch.k())));
    }
    let mut h = ch.h_b[k].clone();
    if ch.n() > 0 {
        let t = theta.theta.zip_map(&ch.h_r[k], |a, b| a.conj() * b);
        h += ch.g.adjoint() * t;
    }
    Ok(h)
}

fn received_powers(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, k: usize) -> Result<Vec<f64>, MetricsError> {
    let h = effective_channel(ch, theta, k)?;
    Ok(sol.w.iter().map(|w| h.dotc(w).norm_sqr()).collect())
}

/// `sigma_v^2 sum_n |h_r,k[n]|^2 |theta[n]|^2`.
fn ris_noise_at(ch: &ChannelSet, theta: &RisVector, scn: &Scenario, k: usize) -> f64 {
    let s = scn.ris_noise();
    if s == 0.0 || ch.n() == 0 {
        return 0.0;
    }
    s * ch.h_r[k].iter().zip(theta.theta.iter()).map(|(h, t)| h.norm_sqr() * t.norm_sqr()).sum::<f64>()
}

/// Linear SINR of user `k`.
pub fn sinr(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario, k: usize) -> Result<f64, MetricsError> {
    check_sol(ch, sol)?;
    let rho = sol.rho[k];
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MetricsError::Rho { k, rho });
    }
    let p = received_powers(ch, theta, sol, k)?;
    let interference: f64 = p.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v).sum();
    let denom = interference + ris_noise_at(ch, theta, scn, k) + scn.sigma2[k] + scn.delta2[k] / rho;
    Ok(p[k] / denom)
}

/// Linear input power (W) at the EH circuit of user `k`.
pub fn eh_input_w(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario, k: usize) -> Result<f64, MetricsError> {
    check_sol(ch, sol)?;
    let rho = sol.rho[k];
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MetricsError::Rho { k, rho });
    }
    let p: f64 = received_powers(ch, theta, sol, k)?.iter().sum();
    Ok(scn.eta[k] * (1.0 - rho) * (p + ris_noise_at(ch, theta, scn, k)))
}

/// Harvested power (mW) of user `k` after the nonlinear EH model.
pub fn harvested(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario, k: usize) -> Result<f64, MetricsError> {
    Ok(scn.eh.harvest(eh_input_w(ch, theta, sol, scn, k)? * 1e3)?)
}

/// Power drawn by the active RIS, `sum_i |diag(theta) G w_i|^2 + sigma_v^2 |theta|^2`.
/// Zero for passive surfaces and when no RIS is deployed.
pub fn reflect_power(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario) -> f64 {
    if scn.ris_kind != RisKind::Active || ch.n() == 0 {
        return 0.0;
    }
    let amp2: Vec<f64> = theta.theta.iter().map(|t| t.norm_sqr()).collect();
    let signal: f64 = sol
        .w
        .iter()
        .map(|w| {
            let gw = &ch.g * w;
            gw.iter().zip(&amp2).map(|(g, a)| g.norm_sqr() * a).sum::<f64>()
        })
        .sum();
    signal + scn.sigma2_v * amp2.iter().sum::<f64>()
}

/// BS power plus reflect power.
pub fn total_power(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario) -> f64 {
    sol.bs_power() + reflect_power(ch, theta, sol, scn)
}

/// Raw-channel feasibility audit of a complete design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub sinr: Vec<f64>,
    pub harvested_mw: Vec<f64>,
    /// `sinr / gamma - 1`, infinite for users without an SINR target.
    pub sinr_margin: Vec<f64>,
    /// `harvested / e - 1`, infinite for users without an EH target.
    pub eh_margin: Vec<f64>,
    pub bs_w: f64,
    pub reflect_w: f64,
    pub total_w: f64,
    pub sinr_ok: bool,
    pub eh_ok: bool,
    pub reflect_ok: bool,
}

impl Audit {
    pub fn feasible(&self) -> bool {
        self.sinr_ok && self.eh_ok && self.reflect_ok
    }

    pub fn min_sinr_margin(&self) -> f64 {
        self.sinr_margin.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_eh_margin(&self) -> f64 {
        self.eh_margin.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn margin(value: f64, target: f64) -> f64 {
    if target > 0.0 {
        value / target - 1.0
    } else {
        f64::INFINITY
    }
}

/// Recomputes every constraint of the design from the raw channels.
pub fn audit(ch: &ChannelSet, theta: &RisVector, sol: &BfSolution, scn: &Scenario) -> Result<Audit, MetricsError> {
    check_theta(ch, theta)?;
    check_sol(ch, sol)?;
    let k = ch.k();
    let mut s = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k);
    for u in 0..k {
        s.push(sinr(ch, theta, sol, scn, u)?);
        e.push(harvested(ch, theta, sol, scn, u)?);
    }
    let sinr_margin: Vec<f64> = s.iter().zip(&scn.gamma).map(|(v, g)| margin(*v, *g)).collect();
    let eh_margin: Vec<f64> = e.iter().zip(&scn.e_mw).map(|(v, t)| margin(*v, *t)).collect();
    let reflect_w = reflect_power(ch, theta, sol, scn);
    let bs_w = sol.bs_power();
    Ok(Audit {
        sinr_ok: sinr_margin.iter().all(|m| *m >= -SINR_TOL),
        eh_ok: eh_margin.iter().all(|m| *m >= -EH_TOL),
        reflect_ok: scn.ris_kind != RisKind::Active || reflect_w <= scn.p_max * (1.0 + REFLECT_TOL),
        sinr: s,
        harvested_mw: e,
        sinr_margin,
        eh_margin,
        bs_w,
        reflect_w,
        total_w: bs_w + reflect_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_channels(g: Complex64, hr: Complex64, hb: Complex64) -> ChannelSet {
        ChannelSet {
            g: CMatrix::from_element(1, 1, g),
            h_r: vec![CVector::from_element(1, hr)],
            h_b: vec![CVector::from_element(1, hb)],
            users: vec![[0.0, 0.0]],
        }
    }

    fn scalar_scene(kind: RisKind, n: usize) -> Scenario {
        Scenario {
            m: 1,
            k: 1,
            n,
            ris_kind: kind,
            gamma: vec![1.0],
            e_mw: vec![0.0],
            eta: vec![1.0],
            sigma2: vec![0.1],
            delta2: vec![0.1],
            ..Scenario::default()
        }
    }

    fn one(w: Complex64, rho: f64) -> BfSolution {
        BfSolution { w: vec![CVector::from_element(1, w)], rho: vec![rho] }
    }

    #[test]
    fn effective_channel_examples() {
        let ch = scalar_channels(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let theta = RisVector::new(CVector::from_element(1, Complex64::from_polar(2.0, std::f64::consts::FRAC_PI_2)));
        let h = effective_channel(&ch, &theta, 0).unwrap();
        assert!((h[0] - Complex64::from_polar(2.0, -std::f64::consts::FRAC_PI_2)).norm() < 1e-12);

        let ch = scalar_channels(c(0.3, 0.1), c(1.0, -2.0), c(0.5, 0.5));
        let h = effective_channel(&ch, &RisVector::zeros(1), 0).unwrap();
        assert_eq!(h[0], c(0.5, 0.5));
        let h = effective_channel(&ch.without_ris(), &RisVector::zeros(0), 0).unwrap();
        assert_eq!(h[0], c(0.5, 0.5));
        assert!(effective_channel(&ch, &RisVector::zeros(2), 0).is_err());
    }

    #[test]
    fn lifted_form_reproduces_cascade() {
        // theta_lift^H b + a with b[n] = conj(h_r[n]) (G w)[n], a = h_b^H w
        let ch = scalar_channels(c(0.7, -0.2), c(0.4, 0.9), c(-0.3, 0.2));
        let theta = RisVector::new(CVector::from_element(1, c(1.2, -0.5)));
        let w = CVector::from_element(1, c(0.8, 0.1));
        let h = effective_channel(&ch, &theta, 0).unwrap();
        let gw = &ch.g * &w;
        let b = ch.h_r[0][0].conj() * gw[0];
        let a = ch.h_b[0].dotc(&w);
        let lifted = theta.lifted();
        let via_lift = lifted[0].conj() * b + a;
        assert!((h.dotc(&w) - via_lift).norm() < 1e-14);
        let back = RisVector::from_lifted(&(lifted * c(0.0, 3.0))).unwrap();
        assert!((back.theta[0] - theta.theta[0]).norm() < 1e-14);
    }

    #[test]
    fn sinr_scalar_example() {
        let ch = scalar_channels(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)).without_ris();
        let scn = scalar_scene(RisKind::None, 0);
        let s = sinr(&ch, &RisVector::zeros(0), &one(c(1.0, 0.0), 0.5), &scn, 0).unwrap();
        assert!((s - 1.0 / 0.3).abs() < 1e-12);
        let s0 = sinr(&ch, &RisVector::zeros(0), &one(c(0.0, 0.0), 0.5), &scn, 0).unwrap();
        assert_eq!(s0, 0.0);
        let s2 = sinr(&ch, &RisVector::zeros(0), &one(c(2.0, 0.0), 0.5), &scn, 0).unwrap();
        assert!((s2 / s - 4.0).abs() < 1e-12);
        assert!(matches!(
            sinr(&ch, &RisVector::zeros(0), &one(c(1.0, 0.0), 1.0), &scn, 0),
            Err(MetricsError::Rho { .. })
        ));
    }

    #[test]
    fn harvested_examples() {
        let ch = scalar_channels(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)).without_ris();
        let scn = scalar_scene(RisKind::None, 0);
        // |h^H w|^2 = 1 mW
        let w = c(1e-3f64.sqrt(), 0.0);
        let e = harvested(&ch, &RisVector::zeros(0), &one(w, 0.5), &scn, 0).unwrap();
        let m = scn.eh;
        let oracle = (m.a * 0.5 + m.b) / (0.5 + m.c) - m.b / m.c;
        assert!((e - oracle).abs() < 1e-12);
        assert!((e - 0.182_35).abs() < 1e-5, "{e}");
        assert_eq!(harvested(&ch, &RisVector::zeros(0), &one(c(0.0, 0.0), 0.5), &scn, 0).unwrap(), 0.0);
        let near_one = harvested(&ch, &RisVector::zeros(0), &one(w, 1.0 - 1e-12), &scn, 0).unwrap();
        assert!(near_one < 1e-9);
    }

    #[test]
    fn reflect_power_examples() {
        let ch = scalar_channels(c(3f64.sqrt(), 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let mut scn = scalar_scene(RisKind::Active, 1);
        scn.sigma2_v = 1.0;
        let sol = one(c(1.0, 0.0), 0.5);
        let theta = RisVector::new(CVector::from_element(1, c(1.0, 1.0)));
        assert!((reflect_power(&ch, &theta, &sol, &scn) - 8.0).abs() < 1e-12);
        assert_eq!(reflect_power(&ch, &RisVector::zeros(1), &sol, &scn), 0.0);
        let doubled = RisVector::new(&theta.theta * c(2.0, 0.0));
        assert!((reflect_power(&ch, &doubled, &sol, &scn) - 32.0).abs() < 1e-12);
        assert!(total_power(&ch, &theta, &sol, &scn) > sol.bs_power());
        assert_eq!(total_power(&ch, &RisVector::zeros(1), &sol, &scn), sol.bs_power());

        scn.ris_kind = RisKind::Passive;
        assert_eq!(reflect_power(&ch, &theta, &sol, &scn), 0.0);
        assert_eq!(total_power(&ch, &theta, &sol, &scn), sol.bs_power());
    }

    #[test]
    fn passive_surface_adds_no_noise() {
        let ch = scalar_channels(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        let sol = one(c(1.0, 0.0), 0.5);
        let theta = RisVector::from_phases(&[0.3]);
        let mut scn = scalar_scene(RisKind::Active, 1);
        scn.sigma2_v = 0.5;
        let active = sinr(&ch, &theta, &sol, &scn, 0).unwrap();
        scn.ris_kind = RisKind::Passive;
        let passive = sinr(&ch, &theta, &sol, &scn, 0).unwrap();
        assert!((passive - 1.0 / 0.3).abs() < 1e-12);
        assert!(active < passive);
    }

    #[test]
    fn audit_flags() {
        let ch = scalar_channels(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)).without_ris();
        let mut scn = scalar_scene(RisKind::None, 0);
        scn.gamma = vec![3.0];
        scn.e_mw = vec![0.01];
        let a = audit(&ch, &RisVector::zeros(0), &one(c(1.0, 0.0), 0.5), &scn).unwrap();
        assert!(a.feasible());
        assert!((a.min_sinr_margin() - (1.0 / 0.9 - 1.0)).abs() < 1e-12);
        scn.gamma = vec![4.0];
        let a = audit(&ch, &RisVector::zeros(0), &one(c(1.0, 0.0), 0.5), &scn).unwrap();
        assert!(!a.sinr_ok && a.eh_ok);
    }

    proptest::proptest! {
        #[test]
        fn rho_monotonicity(r1 in 0.01f64..0.98, dr in 0.001f64..0.01, wr in -1.0f64..1.0, wi in -1.0f64..1.0) {
            proptest::prop_assume!(wr.abs() + wi.abs() > 1e-3);
            let ch = scalar_channels(c(0.5, 0.2), c(0.3, -0.4), c(0.1, 0.05));
            let mut scn = scalar_scene(RisKind::Active, 1);
            scn.sigma2_v = 0.01;
            let theta = RisVector::new(CVector::from_element(1, c(1.5, 0.5)));
            let s1 = one(c(wr, wi) * 1e-2, r1);
            let s2 = one(c(wr, wi) * 1e-2, r1 + dr);
            proptest::prop_assert!(sinr(&ch, &theta, &s2, &scn, 0).unwrap() > sinr(&ch, &theta, &s1, &scn, 0).unwrap());
            proptest::prop_assert!(harvested(&ch, &theta, &s2, &scn, 0).unwrap() < harvested(&ch, &theta, &s1, &scn, 0).unwrap());
        }

        #[test]
        fn reflect_power_is_quadratic(s in 0.1f64..10.0, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let ch = scalar_channels(c(0.5, 0.2), c(0.3, -0.4), c(0.1, 0.05));
            let scn = scalar_scene(RisKind::Active, 1);
            let sol = one(c(0.7, 0.1), 0.5);
            let t = RisVector::new(CVector::from_element(1, c(re, im)));
            let ts = RisVector::new(CVector::from_element(1, c(re * s, im * s)));
            let p1 = reflect_power(&ch, &t, &sol, &scn);
            let p2 = reflect_power(&ch, &ts, &sol, &scn);
            proptest::prop_assert!((p2 - s * s * p1).abs() <= 1e-12 * p2.max(1e-300));
        }
    }
}
