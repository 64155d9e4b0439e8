//! The function approximator: Fourier embedding, gated MLP backbone and the
//! KKS output head.
//!
//! Parameters live in one flat vector so that optimisers and gradient code
//! never care about layer structure; [`ParamLayout`] maps layers to offsets.
//! The generic [`NetworkParams::forward`] runs on any [`Real`] and serves as
//! the reference path. [`batched`] is the fast training path with its own
//! hand-written backward pass.

pub mod batched;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Real;
use crate::physics::{interp_h, NondimParams};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of spatial dimensions; inputs are (x…, t).
    pub dim: usize,
    pub m_f: usize,
    pub sigma_x: f64,
    pub sigma_t: f64,
    pub width: usize,
    pub depth: usize,
    pub fourier: bool,
    pub modified_mlp: bool,
    pub hard_constraints: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            m_f: 64,
            sigma_x: 2.0,
            sigma_t: 0.4,
            width: 128,
            depth: 6,
            fourier: true,
            modified_mlp: true,
            hard_constraints: true,
        }
    }
}

impl NetworkConfig {
    /// Width of the first layer's input.
    pub fn input_width(&self) -> usize {
        if self.fourier {
            4 * self.m_f
        } else {
            self.dim + 1
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(1..=3).contains(&self.dim) {
            return Err(NetworkError::InvalidConfig(format!("dim must be 1..=3, got {}", self.dim)));
        }
        if self.width == 0 || self.depth == 0 || (self.fourier && self.m_f == 0) {
            return Err(NetworkError::InvalidConfig(
                "width, depth and m_f must be positive".into(),
            ));
        }
        if !(self.sigma_x >= 0.0 && self.sigma_t >= 0.0) {
            return Err(NetworkError::InvalidConfig("Fourier scales must be non-negative".into()));
        }
        Ok(())
    }
}

/// Offsets of one affine map `out × inp` plus bias inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Affine {
    fn size(&self) -> usize {
        self.inp * self.out + self.out
    }
}

/// Where each weight matrix sits in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub gate_u: Option<Affine>,
    pub gate_v: Option<Affine>,
    pub hidden: Vec<Affine>,
    pub output: Affine,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut off = 0usize;
        let mut take = |inp: usize, out: usize| {
            let a = Affine {
                w: off,
                b: off + inp * out,
                inp,
                out,
            };
            off += a.size();
            a
        };
        let inp = cfg.input_width();
        let (gate_u, gate_v) = if cfg.modified_mlp {
            (Some(take(inp, cfg.width)), Some(take(inp, cfg.width)))
        } else {
            (None, None)
        };
        let mut hidden = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            hidden.push(take(if l == 0 { inp } else { cfg.width }, cfg.width));
        }
        let output = take(cfg.width, 2);
        ParamLayout {
            gate_u,
            gate_v,
            hidden,
            output,
            len: off,
        }
    }
}

/// Closed-form parameter count, independent of [`ParamLayout`].
pub fn parameter_count(cfg: &NetworkConfig) -> usize {
    let i = cfg.input_width();
    let w = cfg.width;
    let gates = if cfg.modified_mlp { 2 * (i * w + w) } else { 0 };
    gates + (i * w + w) + (cfg.depth - 1) * (w * w + w) + (2 * w + 2)
}

/// Fixed random Fourier features of space and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEmbedding {
    pub dim: usize,
    pub m_f: usize,
    /// `m_f × dim`, row-major.
    pub b_x: Vec<f64>,
    /// `m_f × 1`.
    pub b_t: Vec<f64>,
    pub sigma_x: f64,
    pub sigma_t: f64,
}

impl FourierEmbedding {
    pub fn sample<R: Rng>(dim: usize, m_f: usize, sigma_x: f64, sigma_t: f64, rng: &mut R) -> Self {
        let b_x = (0..m_f * dim)
            .map(|_| sigma_x * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let b_t = (0..m_f)
            .map(|_| sigma_t * rng.sample::<f64, _>(StandardNormal))
            .collect();
        FourierEmbedding {
            dim,
            m_f,
            b_x,
            b_t,
            sigma_x,
            sigma_t,
        }
    }

    /// `[cos(B_x x); sin(B_x x); cos(B_t t); sin(B_t t)]`, length `4·m_f`.
    pub fn embed<T: Real>(&self, coords: &[T]) -> Result<Vec<T>, NetworkError> {
        if coords.len() != self.dim + 1 {
            return Err(NetworkError::DimensionMismatch {
                expected: self.dim + 1,
                got: coords.len(),
            });
        }
        let m = self.m_f;
        let t = coords[self.dim];
        let mut z = vec![T::cst(0.0); 4 * m];
        for i in 0..m {
            let mut arg = coords[0] * self.b_x[i * self.dim];
            for a in 1..self.dim {
                arg = arg + coords[a] * self.b_x[i * self.dim + a];
            }
            z[i] = arg.cos();
            z[m + i] = arg.sin();
            let at = t * self.b_t[i];
            z[2 * m + i] = at.cos();
            z[3 * m + i] = at.sin();
        }
        Ok(z)
    }
}

/// Equilibrium concentrations used by the output head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardConstraintHead {
    pub c_se: f64,
    pub c_le: f64,
}

impl Default for HardConstraintHead {
    fn default() -> Self {
        Self { c_se: 1.0, c_le: 0.036 }
    }
}

impl From<&NondimParams> for HardConstraintHead {
    fn from(p: &NondimParams) -> Self {
        Self {
            c_se: p.c_se,
            c_le: p.c_le,
        }
    }
}

/// Network outputs at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutput<T> {
    pub phi: T,
    pub c: T,
    /// Liquid-phase concentration; equals `c` when the head is disabled.
    pub c_l: T,
}

/// KKS output head. Raw outputs are ordered `(ĉ_L, φ̂)`.
///
/// φ = ½ tanh φ̂ + ½, c_L = (1 − c_se + c_le)·½(tanh ĉ_L + 1),
/// c_S = c_L + (c_se − c_le), c = h(φ) c_S + (1 − h(φ)) c_L.
pub fn apply_hard_constraints<T: Real>(cl_raw: T, phi_raw: T, head: &HardConstraintHead) -> HeadOutput<T> {
    let phi = phi_raw.tanh() * 0.5 + 0.5;
    let c_l = (cl_raw.tanh() + 1.0) * (0.5 * (1.0 - head.c_se + head.c_le));
    let c_s = c_l + (head.c_se - head.c_le);
    let h = interp_h(phi);
    let c = h * c_s + (-h + 1.0) * c_l;
    HeadOutput { phi, c, c_l }
}

/// Head used when hard constraints are ablated: independent sigmoids.
pub fn apply_plain_head<T: Real>(cl_raw: T, phi_raw: T) -> HeadOutput<T> {
    let c = cl_raw.sigmoid();
    HeadOutput {
        phi: phi_raw.sigmoid(),
        c,
        c_l: c,
    }
}

/// All trainable and fixed parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub head: HardConstraintHead,
    pub embedding: FourierEmbedding,
    pub layout: ParamLayout,
    pub theta: Vec<f64>,
    pub seed: u64,
}

impl NetworkParams {
    /// Gaussian Fourier matrices and Glorot-uniform weights with zero biases,
    /// all drawn from a ChaCha stream seeded by `seed`.
    pub fn init(seed: u64, config: NetworkConfig, head: HardConstraintHead) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = FourierEmbedding::sample(config.dim, config.m_f, config.sigma_x, config.sigma_t, &mut rng);
        let layout = ParamLayout::new(&config);
        let mut theta = vec![0.0; layout.len];
        let affines = layout
            .gate_u
            .iter()
            .chain(layout.gate_v.iter())
            .chain(layout.hidden.iter())
            .chain(std::iter::once(&layout.output));
        for a in affines {
            let limit = (6.0 / (a.inp + a.out) as f64).sqrt();
            for w in &mut theta[a.w..a.w + a.inp * a.out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(NetworkParams {
            config,
            head,
            embedding,
            layout,
            theta,
            seed,
        })
    }

    /// A network whose weights and biases are all zero.
    pub fn zeros(config: NetworkConfig, head: HardConstraintHead) -> Result<Self, NetworkError> {
        let mut p = Self::init(0, config, head)?;
        p.theta.iter_mut().for_each(|w| *w = 0.0);
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// First-layer input: Fourier features or the raw coordinates.
    pub fn input_features<T: Real>(&self, coords: &[T]) -> Result<Vec<T>, NetworkError> {
        if self.config.fourier {
            self.embedding.embed(coords)
        } else if coords.len() != self.config.dim + 1 {
            Err(NetworkError::DimensionMismatch {
                expected: self.config.dim + 1,
                got: coords.len(),
            })
        } else {
            Ok(coords.to_vec())
        }
    }

    /// Backbone evaluation with weights taken from `theta`; returns `(ĉ_L, φ̂)`.
    pub fn backbone<T: Real>(&self, theta: &[T], z: &[T]) -> Result<[T; 2], NetworkError> {
        if theta.len() != self.layout.len {
            return Err(NetworkError::ShapeMismatch {
                expected: self.layout.len,
                got: theta.len(),
            });
        }
        if z.len() != self.config.input_width() {
            return Err(NetworkError::ShapeMismatch {
                expected: self.config.input_width(),
                got: z.len(),
            });
        }
        let gates = match (self.layout.gate_u, self.layout.gate_v) {
            (Some(u), Some(v)) => {
                let u = affine(theta, &u, z).into_iter().map(Real::tanh).collect::<Vec<_>>();
                let v = affine(theta, &v, z).into_iter().map(Real::tanh).collect::<Vec<_>>();
                Some((u, v))
            }
            _ => None,
        };
        let mut h = z.to_vec();
        for layer in &self.layout.hidden {
            let zh: Vec<T> = affine(theta, layer, &h).into_iter().map(Real::tanh).collect();
            h = match &gates {
                Some((u, v)) => zh
                    .iter()
                    .zip(u.iter().zip(v))
                    .map(|(&a, (&u, &v))| v + a * (u - v))
                    .collect(),
                None => zh,
            };
        }
        let out = affine(theta, &self.layout.output, &h);
        Ok([out[0], out[1]])
    }

    /// Raw outputs through the configured head.
    pub fn head_output<T: Real>(&self, raw: [T; 2]) -> HeadOutput<T> {
        if self.config.hard_constraints {
            apply_hard_constraints(raw[0], raw[1], &self.head)
        } else {
            apply_plain_head(raw[0], raw[1])
        }
    }

    /// Full network with explicit (possibly differentiable) weights.
    pub fn forward_with<T: Real>(&self, theta: &[T], coords: &[T]) -> Result<HeadOutput<T>, NetworkError> {
        let z = self.input_features(coords)?;
        Ok(self.head_output(self.backbone(theta, &z)?))
    }

    /// Full network with the stored weights.
    pub fn forward<T: Real>(&self, coords: &[T]) -> Result<HeadOutput<T>, NetworkError> {
        let theta: Vec<T> = self.theta.iter().map(|&w| T::cst(w)).collect();
        self.forward_with(&theta, coords)
    }

    /// Plain evaluation at one point, `(φ, c)`.
    pub fn eval(&self, coords: &[f64]) -> Result<(f64, f64), NetworkError> {
        let z = self.input_features(coords)?;
        let o = self.head_output(self.backbone(&self.theta, &z)?);
        Ok((o.phi, o.c))
    }

    /// Text checkpoint holding configuration, seed, Fourier matrices and
    /// weights. Floats use shortest round-trip formatting, so reading the
    /// file back reproduces every bit.
    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "pitpinn-checkpoint 1");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "dim {}", c.dim);
        let _ = writeln!(s, "m_f {}", c.m_f);
        let _ = writeln!(s, "sigma_x {:?}", c.sigma_x);
        let _ = writeln!(s, "sigma_t {:?}", c.sigma_t);
        let _ = writeln!(s, "width {}", c.width);
        let _ = writeln!(s, "depth {}", c.depth);
        let _ = writeln!(s, "fourier {}", c.fourier);
        let _ = writeln!(s, "modified_mlp {}", c.modified_mlp);
        let _ = writeln!(s, "hard_constraints {}", c.hard_constraints);
        let _ = writeln!(s, "c_se {:?}", self.head.c_se);
        let _ = writeln!(s, "c_le {:?}", self.head.c_le);
        for (name, v) in [("b_x", &self.embedding.b_x), ("b_t", &self.embedding.b_t), ("theta", &self.theta)] {
            let _ = write!(s, "{name} {}", v.len());
            for x in v.iter() {
                let _ = write!(s, " {x:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, msg: String| NetworkError::Checkpoint { line: line + 1, msg };
        let mut next = |key: &str| -> Result<(usize, Vec<String>), NetworkError> {
            let (i, l) = lines.next().ok_or_else(|| err(usize::MAX - 1, format!("missing `{key}`")))?;
            let mut parts = l.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok((i, parts.map(str::to_string).collect())),
                other => Err(err(i, format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
            }
        };
        fn one<T: std::str::FromStr>(i: usize, v: &[String], key: &str) -> Result<T, NetworkError> {
            v.first()
                .and_then(|s| s.parse().ok())
                .ok_or(NetworkError::Checkpoint {
                    line: i + 1,
                    msg: format!("bad value for `{key}`"),
                })
        }
        let (i, v) = next("pitpinn-checkpoint")?;
        if one::<u32>(i, &v, "version")? != 1 {
            return Err(err(i, "unsupported checkpoint version".into()));
        }
        macro_rules! field {
            ($key:literal, $ty:ty) => {{
                let (i, v) = next($key)?;
                one::<$ty>(i, &v, $key)?
            }};
        }
        let seed = field!("seed", u64);
        let config = NetworkConfig {
            dim: field!("dim", usize),
            m_f: field!("m_f", usize),
            sigma_x: field!("sigma_x", f64),
            sigma_t: field!("sigma_t", f64),
            width: field!("width", usize),
            depth: field!("depth", usize),
            fourier: field!("fourier", bool),
            modified_mlp: field!("modified_mlp", bool),
            hard_constraints: field!("hard_constraints", bool),
        };
        config.validate()?;
        let head = HardConstraintHead {
            c_se: field!("c_se", f64),
            c_le: field!("c_le", f64),
        };
        let mut array = |key: &str, expected: usize| -> Result<Vec<f64>, NetworkError> {
            let (i, v) = next(key)?;
            let n: usize = one(i, &v, key)?;
            if n != expected || v.len() != n + 1 {
                return Err(err(i, format!("`{key}` should hold {expected} values")));
            }
            v[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| err(i, format!("{key}: {e}"))))
                .collect()
        };
        let layout = ParamLayout::new(&config);
        let b_x = array("b_x", config.m_f * config.dim)?;
        let b_t = array("b_t", config.m_f)?;
        let theta = array("theta", layout.len)?;
        Ok(NetworkParams {
            config,
            head,
            embedding: FourierEmbedding {
                dim: config.dim,
                m_f: config.m_f,
                b_x,
                b_t,
                sigma_x: config.sigma_x,
                sigma_t: config.sigma_t,
            },
            layout,
            theta,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

fn affine<T: Real>(theta: &[T], a: &Affine, x: &[T]) -> Vec<T> {
    (0..a.out)
        .map(|o| {
            let row = &theta[a.w + o * a.inp..a.w + (o + 1) * a.inp];
            let mut s = theta[a.b + o];
            for (w, xi) in row.iter().zip(x) {
                s = s + *w * *xi;
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            dim: 2,
            m_f: 2,
            width: 4,
            depth: 2,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn layout_matches_count() {
        for modified in [true, false] {
            for fourier in [true, false] {
                let cfg = NetworkConfig {
                    modified_mlp: modified,
                    fourier,
                    ..tiny()
                };
                assert_eq!(ParamLayout::new(&cfg).len, parameter_count(&cfg));
            }
        }
    }

    #[test]
    fn zero_net_is_half() {
        let p = NetworkParams::zeros(tiny(), HardConstraintHead::default()).unwrap();
        assert_eq!(p.eval(&[0.3, 0.1, 0.7]).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn wrong_input_length() {
        let p = NetworkParams::init(1, tiny(), HardConstraintHead::default()).unwrap();
        assert!(matches!(
            p.eval(&[0.3, 0.1]),
            Err(NetworkError::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert!(matches!(
            p.backbone(&p.theta[1..], &[0.0; 8]),
            Err(NetworkError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = NetworkParams::init(7, tiny(), HardConstraintHead::default()).unwrap();
        let q = NetworkParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(p, q);
        let broken = p.to_checkpoint().replace("width 4", "width x");
        assert!(NetworkParams::from_checkpoint(&broken).is_err());
    }
}
