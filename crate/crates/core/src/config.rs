//! TOML scenario files.
//!
//! Every section and key is optional except `system.M`, `system.K` and
//! `system.N`; omitted keys take the default scenario values. Unknown keys
//! are rejected.
//!
//! Quantities are given either as bare numbers in the base unit of the key
//! or as strings with a unit suffix:
//!
//! | key | bare number | accepted suffixes |
//! |-----|-------------|-------------------|
//! | `gamma` | linear ratio | `dB` |
//! | `e` | mW | `mW`, `W`, `dBm` |
//! | `p_max`, `sigma2`, `delta2`, `sigma2_v` | W | `W`, `mW`, `dBm`, `dBW` |
//! | `rician_K`, `C0` | linear ratio | `dB` |
//!
//! Per-user keys (`gamma`, `e`, `eta`, `sigma2`, `delta2`) accept a single
//! value, broadcast to all users, or an array of length `K`.

use serde::Deserialize;
use thiserror::Error;

use crate::eh::EhModel;
use crate::scene::{Geometry, RisKind, Scenario, SceneError, Tuning};

/// Version of the file format understood by [`parse`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error(transparent)]
    Scenario(#[from] SceneError),
}

fn field_err(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PerUser {
    One(Quantity),
    Many(Vec<Quantity>),
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    /// Linear ratio, or `dB`.
    Ratio,
    /// Watts, or `W`, `mW`, `dBm`, `dBW`.
    Watt,
    /// Milliwatts, or `mW`, `W`, `dBm`.
    MilliWatt,
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

fn convert(field: &str, q: &Quantity, unit: Unit) -> Result<f64, ConfigError> {
    let text = match q {
        Quantity::Number(v) => return Ok(*v),
        Quantity::Text(s) => s.trim(),
    };
    let split = text
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .ok_or_else(|| field_err(field, format!("`{text}` has no unit; write a bare number for the base unit")))?;
    let (num, suffix) = text.split_at(split);
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| field_err(field, format!("cannot parse number in `{text}`")))?;
    let out = match (unit, suffix.trim()) {
        (Unit::Ratio, "dB") => db(v),
        (Unit::Watt, "W") => v,
        (Unit::Watt, "mW") => v * 1e-3,
        (Unit::Watt, "dBm") => db(v) * 1e-3,
        (Unit::Watt, "dBW") => db(v),
        (Unit::MilliWatt, "mW") => v,
        (Unit::MilliWatt, "W") => v * 1e3,
        (Unit::MilliWatt, "dBm") => db(v),
        (_, s) => return Err(field_err(field, format!("unit `{s}` is not accepted here"))),
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(field_err(field, format!("`{text}` is not finite")))
    }
}

fn per_user(field: &str, v: &PerUser, k: usize, unit: Unit) -> Result<Vec<f64>, ConfigError> {
    match v {
        PerUser::One(q) => Ok(vec![convert(field, q, unit)?; k]),
        PerUser::Many(list) => {
            if list.len() != k {
                return Err(field_err(field, format!("expected {k} entries (one per user), got {}", list.len())));
            }
            list.iter().map(|q| convert(field, q, unit)).collect()
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    schema_version: Option<u32>,
    system: System,
    eh: Option<Eh>,
    channel: Option<Channel>,
    algorithm: Option<Algorithm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct System {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    ris: Option<RisKind>,
    gamma: Option<PerUser>,
    e: Option<PerUser>,
    eta: Option<PerUser>,
    p_max: Option<Quantity>,
    sigma2: Option<PerUser>,
    delta2: Option<PerUser>,
    sigma2_v: Option<Quantity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Eh {
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Channel {
    #[serde(rename = "rician_K")]
    rician_k: Option<Quantity>,
    #[serde(rename = "C0")]
    c0: Option<Quantity>,
    #[serde(rename = "D0")]
    d0: Option<f64>,
    kappa_direct: Option<f64>,
    kappa_reflect: Option<f64>,
    bs: Option<[f64; 2]>,
    ris: Option<[f64; 2]>,
    cluster_center: Option<[f64; 2]>,
    cluster_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Algorithm {
    mu: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    zeta: Option<f64>,
    rho_min: Option<f64>,
    max_outer: Option<usize>,
    max_sca: Option<usize>,
    mu_start: Option<f64>,
    mu_decay: Option<f64>,
    w_rank_tol: Option<f64>,
    t_rank_tol: Option<f64>,
}

fn ratio_to_db(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(10.0 * v.log10())
    } else {
        Err(field_err(field, "must be positive"))
    }
}

/// Parses and validates a scenario file.
pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
    let file: File = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    if let Some(v) = file.schema_version {
        if v != SCHEMA_VERSION {
            return Err(field_err("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")));
        }
    }
    let sys = file.system;
    let k = sys.k;
    if k == 0 {
        return Err(field_err("K", "must be at least 1"));
    }
    if sys.m == 0 {
        return Err(field_err("M", "must be at least 1"));
    }
    let base = Scenario::default();
    let mut scn = Scenario {
        m: sys.m,
        k,
        n: sys.n,
        ris_kind: sys.ris.unwrap_or(base.ris_kind),
        gamma: vec![base.gamma[0]; k],
        e_mw: vec![base.e_mw[0]; k],
        eta: vec![base.eta[0]; k],
        sigma2: vec![base.sigma2[0]; k],
        delta2: vec![base.delta2[0]; k],
        ..base.clone()
    };
    if let Some(v) = &sys.gamma {
        scn.gamma = per_user("gamma", v, k, Unit::Ratio)?;
    }
    if let Some(v) = &sys.e {
        scn.e_mw = per_user("e", v, k, Unit::MilliWatt)?;
    }
    if let Some(v) = &sys.eta {
        scn.eta = per_user("eta", v, k, Unit::Ratio)?;
    }
    if let Some(v) = &sys.sigma2 {
        scn.sigma2 = per_user("sigma2", v, k, Unit::Watt)?;
    }
    if let Some(v) = &sys.delta2 {
        scn.delta2 = per_user("delta2", v, k, Unit::Watt)?;
    }
    if let Some(q) = &sys.p_max {
        scn.p_max = convert("p_max", q, Unit::Watt)?;
    }
    if let Some(q) = &sys.sigma2_v {
        scn.sigma2_v = convert("sigma2_v", q, Unit::Watt)?;
    }
    if scn.ris_kind == RisKind::None {
        scn.n = 0;
    }

    if let Some(eh) = file.eh {
        let (a, b, c) = (eh.a.unwrap_or(base.eh.a), eh.b.unwrap_or(base.eh.b), eh.c.unwrap_or(base.eh.c));
        scn.eh = EhModel::new(a, b, c).map_err(|e| field_err("eh", e.to_string()))?;
    }

    if let Some(ch) = file.channel {
        if let Some(q) = &ch.rician_k {
            scn.rician_k_db = ratio_to_db("rician_K", convert("rician_K", q, Unit::Ratio)?)?;
        }
        if let Some(q) = &ch.c0 {
            scn.c0_db = ratio_to_db("C0", convert("C0", q, Unit::Ratio)?)?;
        }
        scn.d0 = ch.d0.unwrap_or(scn.d0);
        scn.kappa_direct = ch.kappa_direct.unwrap_or(scn.kappa_direct);
        scn.kappa_reflect = ch.kappa_reflect.unwrap_or(scn.kappa_reflect);
        scn.geometry = Geometry {
            bs: ch.bs.unwrap_or(scn.geometry.bs),
            ris: ch.ris.unwrap_or(scn.geometry.ris),
            cluster_center: ch.cluster_center.unwrap_or(scn.geometry.cluster_center),
            cluster_radius: ch.cluster_radius.unwrap_or(scn.geometry.cluster_radius),
        };
    }

    if let Some(alg) = file.algorithm {
        scn.mu = alg.mu.unwrap_or(scn.mu);
        scn.alpha = alg.alpha.unwrap_or(scn.alpha);
        scn.beta = alg.beta.unwrap_or(scn.beta);
        scn.zeta = alg.zeta.unwrap_or(scn.zeta);
        let t = scn.tuning;
        scn.tuning = Tuning {
            rho_min: alg.rho_min.unwrap_or(t.rho_min),
            max_outer: alg.max_outer.unwrap_or(t.max_outer),
            max_sca: alg.max_sca.unwrap_or(t.max_sca),
            mu_start: alg.mu_start.unwrap_or(t.mu_start),
            mu_decay: alg.mu_decay.unwrap_or(t.mu_decay),
            w_rank_tol: alg.w_rank_tol.unwrap_or(t.w_rank_tol),
            t_rank_tol: alg.t_rank_tol.unwrap_or(t.t_rank_tol),
        };
    }

    scn.validate()?;
    Ok(scn)
}

/// Reads and parses a scenario file.
pub fn load(path: &std::path::Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse(&text)
}

/// A commented file that reproduces [`Scenario::default`].
pub const DEFAULT_TOML: &str = r#"# Scenario file, schema version 1.
# Bare numbers use the base unit of each key; strings carry a unit suffix.
schema_version = 1

[system]
M = 10                # BS antennas
K = 4                 # users
N = 20                # RIS elements (0 disables the surface)
ris = "active"        # active | passive | none
gamma = "10 dB"       # SINR target per user (linear, or dB)
e = "-20 dBm"         # harvested-power target per user (mW, or mW/W/dBm)
eta = 1.0             # EH conversion efficiency per user
p_max = "10 mW"       # RIS reflect-power budget (W, or W/mW/dBm/dBW)
sigma2 = "-70 dBm"    # antenna noise per user
delta2 = "-50 dBm"    # ID-circuit noise per user
sigma2_v = "-70 dBm"  # active-RIS dynamic noise per element

[eh]                  # P_EH = (a P + b) / (P + c) - b / c, powers in mW
a = 2.463
b = 1.635
c = 0.826

[channel]
rician_K = "10 dB"
C0 = "-30 dB"         # pathloss at the reference distance D0
D0 = 1.0              # m
kappa_direct = 3.0    # BS-user exponent
kappa_reflect = 2.2   # BS-RIS and RIS-user exponent
bs = [3.5, 0.0]       # m
ris = [0.0, 8.0]
cluster_center = [3.5, 8.0]
cluster_radius = 2.5

[algorithm]
mu = 5e-5             # final penalty factor
alpha = 1.0           # SINR residual weight
beta = 1.0            # EH residual weight
zeta = 1e-3           # relative-change stopping tolerance
rho_min = 1e-4        # PS ratios live in [rho_min, 1 - rho_min]
max_outer = 30        # alternating iterations
max_sca = 50          # SCA iterations per RIS stage
mu_start = 100.0      # first penalty factor of the continuation
mu_decay = 10.0       # penalty factor divisor per SCA iteration
w_rank_tol = 1e-6     # lambda_2 / lambda_1 bound for beamformers
t_rank_tol = 1e-4     # (tr - lambda_max) / lambda_max bound for the RIS matrix
"#;
