//! Plain-text (TOML) scenario and training configuration files.
//!
//! Both files carry a top-level `schema_version`. Scenario geometry is in
//! SI units (metres, seconds). Training keys use the usual hyperparameter
//! symbols (`m_f`, `sigma_x`, `m_w`, `m_h`, `N_g`, `S_s`, `alpha_w`, `eta`).
//! Every key is optional; missing keys keep their defaults.
//!
//! ```toml
//! schema_version = 1
//! [scenario]
//! builtin = "2d-2pit"      # optional starting point
//! t_end = 10.0             # seconds
//! solid_faces = ["y+"]
//! flux_faces = ["x-", "x+", "y-"]
//! [[scenario.pits]]
//! center = [-1.5e-5, 0.0]
//! radius = 5.0e-6
//! ```

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{Face, PhysicalParams, Pit, Scenario, DEFAULT_L_C, DEFAULT_T_C};
use crate::training::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first assignment to `key`, or 1.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
        .unwrap_or(1)
}

fn parse_toml<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_at(text, s.start)).unwrap_or(1),
        msg: e.message().to_string(),
    })
}

fn check_schema(v: Option<u32>, text: &str) -> Result<(), ConfigError> {
    match v {
        Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => Err(ConfigError::Schema(other)),
        None => Err(ConfigError::Parse {
            line: line_of_key(text, "schema_version").max(1),
            msg: "missing schema_version".into(),
        }),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PitFile {
    center: Vec<f64>,
    radius: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain_lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain_hi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solid_faces: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    liquid_faces: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flux_faces: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pit_mouth_liquid: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pits: Option<Vec<PitFile>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: Option<u32>,
    #[serde(default)]
    scenario: ScenarioSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    material: Option<PhysicalParams>,
}

fn faces(text: &str, key: &str, names: &[String]) -> Result<Vec<Face>, ConfigError> {
    names
        .iter()
        .map(|n| {
            Face::from_str(n).map_err(|e| ConfigError::Parse {
                line: line_of_key(text, key),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Parses a scenario file. Geometry is given in metres and seconds.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = parse_toml(text)?;
    check_schema(file.schema_version, text)?;
    let s = file.scenario;
    let err = |key: &str, msg: String| ConfigError::Parse {
        line: line_of_key(text, key),
        msg,
    };
    let mut sc = match &s.builtin {
        Some(b) => Scenario::builtin(b).map_err(|e| err("builtin", e.to_string()))?,
        None => Scenario {
            name: "custom".into(),
            dim: 2,
            space_lo: Vec::new(),
            space_hi: Vec::new(),
            t_end: 1.0,
            pits: Vec::new(),
            solid_faces: Vec::new(),
            liquid_faces: Vec::new(),
            flux_faces: Vec::new(),
            pit_mouth_liquid: true,
            physical: PhysicalParams::default(),
            l_c: DEFAULT_L_C,
            t_c: DEFAULT_T_C,
        },
    };
    // Scales first: geometry below is converted with the final l_c / t_c.
    let to_m = |v: &[f64], l_c: f64| v.iter().map(|x| x / l_c).collect::<Vec<f64>>();
    let (old_l, old_t) = (sc.l_c, sc.t_c);
    if let Some(v) = s.l_c {
        sc.l_c = v;
    }
    if let Some(v) = s.t_c {
        sc.t_c = v;
    }
    if !(sc.l_c > 0.0 && sc.t_c > 0.0) {
        return Err(err(if s.l_c.is_some() { "l_c" } else { "t_c" }, "scales must be positive".into()));
    }
    // Rescale geometry inherited from a builtin.
    let r = old_l / sc.l_c;
    sc.space_lo.iter_mut().chain(sc.space_hi.iter_mut()).for_each(|v| *v *= r);
    for p in &mut sc.pits {
        p.center.iter_mut().for_each(|v| *v *= r);
        p.radius *= r;
    }
    sc.t_end *= old_t / sc.t_c;
    if let Some(n) = s.name {
        sc.name = n;
    }
    if let Some(v) = &s.domain_lo {
        sc.space_lo = to_m(v, sc.l_c);
        sc.dim = v.len();
    }
    if let Some(v) = &s.domain_hi {
        sc.space_hi = to_m(v, sc.l_c);
    }
    if let Some(t) = s.t_end {
        sc.t_end = t / sc.t_c;
    }
    if let Some(v) = &s.solid_faces {
        sc.solid_faces = faces(text, "solid_faces", v)?;
    }
    if let Some(v) = &s.liquid_faces {
        sc.liquid_faces = faces(text, "liquid_faces", v)?;
    }
    if let Some(v) = &s.flux_faces {
        sc.flux_faces = faces(text, "flux_faces", v)?;
    }
    if let Some(b) = s.pit_mouth_liquid {
        sc.pit_mouth_liquid = b;
    }
    if let Some(p) = &s.pits {
        sc.pits = p
            .iter()
            .map(|p| Pit {
                center: to_m(&p.center, sc.l_c),
                radius: p.radius / sc.l_c,
            })
            .collect();
    }
    if let Some(m) = file.material {
        sc.physical = m;
    }
    sc.validate().map_err(|e| {
        let key = match &e {
            crate::physics::ScenarioError::Invalid(m) if m.contains("pit") => "center",
            crate::physics::ScenarioError::Invalid(m) if m.contains("face") => "flux_faces",
            crate::physics::ScenarioError::Invalid(m) if m.contains("t_end") => "t_end",
            crate::physics::ScenarioError::Invalid(m) if m.contains("domain") || m.contains("extent") => "domain_lo",
            _ => "[scenario]",
        };
        let line = if key == "[scenario]" {
            text.lines().position(|l| l.trim() == "[scenario]").map(|i| i + 1).unwrap_or(1)
        } else {
            line_of_key(text, key)
        };
        ConfigError::Parse { line, msg: e.to_string() }
    })?;
    Ok(sc)
}

/// Serialises a scenario in the file format read by [`parse_scenario`].
pub fn scenario_to_toml(sc: &Scenario) -> String {
    let names = |v: &[Face]| v.iter().map(|f| f.to_string()).collect::<Vec<_>>();
    let si = |v: &[f64]| v.iter().map(|x| x * sc.l_c).collect::<Vec<_>>();
    let file = ScenarioFile {
        schema_version: Some(SCHEMA_VERSION),
        scenario: ScenarioSection {
            builtin: None,
            name: Some(sc.name.clone()),
            domain_lo: Some(si(&sc.space_lo)),
            domain_hi: Some(si(&sc.space_hi)),
            t_end: Some(sc.t_end * sc.t_c),
            solid_faces: Some(names(&sc.solid_faces)),
            liquid_faces: Some(names(&sc.liquid_faces)),
            flux_faces: Some(names(&sc.flux_faces)),
            pit_mouth_liquid: Some(sc.pit_mouth_liquid),
            l_c: Some(sc.l_c),
            t_c: Some(sc.t_c),
            pits: Some(
                sc.pits
                    .iter()
                    .map(|p| PitFile {
                        center: si(&p.center),
                        radius: p.radius * sc.l_c,
                    })
                    .collect(),
            ),
        },
        material: Some(sc.physical),
    };
    toml::to_string(&file).expect("plain data serialises")
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    m_f: Option<usize>,
    sigma_x: Option<f64>,
    sigma_t: Option<f64>,
    m_w: Option<usize>,
    m_h: Option<usize>,
    fourier: Option<bool>,
    modified_mlp: Option<bool>,
    hard_constraints: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingSection {
    #[serde(rename = "N_g")]
    n_g: Option<Vec<usize>>,
    #[serde(rename = "N_b")]
    n_b: Option<usize>,
    #[serde(rename = "N_i")]
    n_i: Option<usize>,
    band_share: Option<f64>,
    band_width: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainingSection {
    s_max: Option<usize>,
    #[serde(rename = "S_s")]
    s_s: Option<usize>,
    alpha_w: Option<f64>,
    eta: Option<f64>,
    decay_factor: Option<f64>,
    decay_every: Option<usize>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    stagger: Option<bool>,
    cosine_every: Option<usize>,
    checkpoint_every: Option<usize>,
    chunk: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    schema_version: Option<u32>,
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    sampling: SamplingSection,
    #[serde(default)]
    training: TrainingSection,
}

/// Default general-point counts per axis (space then time).
pub fn default_n_g(dim: usize) -> Vec<usize> {
    match dim {
        3 => vec![20, 20, 15, 30],
        _ => vec![40, 20, 30],
    }
}

/// Parses a training configuration for a problem in `dim` space dimensions.
pub fn parse_train_config(text: &str, dim: usize) -> Result<TrainConfig, ConfigError> {
    let file: TrainFile = parse_toml(text)?;
    check_schema(file.schema_version, text)?;
    let mut cfg = TrainConfig::default();
    cfg.network.dim = dim;
    cfg.sampling.n_g = default_n_g(dim);
    let n = file.network;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(cfg.network.m_f, n.m_f);
    set!(cfg.network.sigma_x, n.sigma_x);
    set!(cfg.network.sigma_t, n.sigma_t);
    set!(cfg.network.width, n.m_w);
    set!(cfg.network.depth, n.m_h);
    set!(cfg.network.fourier, n.fourier);
    set!(cfg.network.modified_mlp, n.modified_mlp);
    set!(cfg.network.hard_constraints, n.hard_constraints);
    let s = file.sampling;
    set!(cfg.sampling.n_g, s.n_g);
    set!(cfg.sampling.n_b, s.n_b);
    set!(cfg.sampling.n_i, s.n_i);
    set!(cfg.sampling.band_share, s.band_share);
    set!(cfg.sampling.band_width, s.band_width);
    let t = file.training;
    set!(cfg.s_max, t.s_max);
    set!(cfg.s_s, t.s_s);
    set!(cfg.alpha_w, t.alpha_w);
    set!(cfg.eta, t.eta);
    set!(cfg.decay_factor, t.decay_factor);
    set!(cfg.decay_every, t.decay_every);
    set!(cfg.beta1, t.beta1);
    set!(cfg.beta2, t.beta2);
    set!(cfg.epsilon, t.epsilon);
    set!(cfg.stagger, t.stagger);
    set!(cfg.cosine_every, t.cosine_every);
    set!(cfg.checkpoint_every, t.checkpoint_every);
    set!(cfg.chunk, t.chunk);
    cfg.validate().map_err(|e| {
        let msg = e.to_string();
        let key = ["N_g", "S_s", "alpha_w", "eta", "decay_factor", "m_f", "m_w", "m_h", "band_share", "chunk"]
            .into_iter()
            .find(|k| msg.contains(&k.to_lowercase()) || msg.contains(k));
        ConfigError::Parse {
            line: key.map(|k| line_of_key(text, k)).unwrap_or(1),
            msg,
        }
    })?;
    Ok(cfg)
}

/// Serialises a training configuration in the format read by
/// [`parse_train_config`].
pub fn train_config_to_toml(cfg: &TrainConfig) -> String {
    let file = TrainFile {
        schema_version: Some(SCHEMA_VERSION),
        network: NetworkSection {
            m_f: Some(cfg.network.m_f),
            sigma_x: Some(cfg.network.sigma_x),
            sigma_t: Some(cfg.network.sigma_t),
            m_w: Some(cfg.network.width),
            m_h: Some(cfg.network.depth),
            fourier: Some(cfg.network.fourier),
            modified_mlp: Some(cfg.network.modified_mlp),
            hard_constraints: Some(cfg.network.hard_constraints),
        },
        sampling: SamplingSection {
            n_g: Some(cfg.sampling.n_g.clone()),
            n_b: Some(cfg.sampling.n_b),
            n_i: Some(cfg.sampling.n_i),
            band_share: Some(cfg.sampling.band_share),
            band_width: Some(cfg.sampling.band_width),
        },
        training: TrainingSection {
            s_max: Some(cfg.s_max),
            s_s: Some(cfg.s_s),
            alpha_w: Some(cfg.alpha_w),
            eta: Some(cfg.eta),
            decay_factor: Some(cfg.decay_factor),
            decay_every: Some(cfg.decay_every),
            beta1: Some(cfg.beta1),
            beta2: Some(cfg.beta2),
            epsilon: Some(cfg.epsilon),
            stagger: Some(cfg.stagger),
            cosine_every: Some(cfg.cosine_every),
            checkpoint_every: Some(cfg.checkpoint_every),
            chunk: Some(cfg.chunk),
        },
    };
    toml::to_string(&file).expect("plain data serialises")
}
