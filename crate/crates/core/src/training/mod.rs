//! Staggered optimisation: stage schedule, grad-norm weighting, Adam and the
//! training loop.

mod loss;
mod variant;

pub use loss::{evaluate_terms, reference_weighted_loss, TermEval, AC, BC, CH, IC, TERM_NAMES};
pub use variant::Variant;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{HardConstraintHead, NetworkConfig, NetworkError, NetworkParams};
use crate::physics::Scenario;
use crate::sampling::{should_resample, CollocationSet, SamplingConfig, SamplingError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss or gradient at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("a collocation set is empty")]
    EmptySet,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which PDE residual a step optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Ac,
    Ch,
    /// Both residuals at once (staggering disabled).
    Combined,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ac => "AC",
            Stage::Ch => "CH",
            Stage::Combined => "COMBINED",
        })
    }
}

impl Stage {
    /// Loss terms entering the total at this stage.
    pub fn active(&self) -> [bool; 4] {
        match self {
            Stage::Ac => [true, false, true, true],
            Stage::Ch => [false, true, true, true],
            Stage::Combined => [true, true, true, true],
        }
    }
}

/// AC during the first `s_s` steps of every `2·s_s` window, CH during the rest.
pub fn stage_for_step(step: usize, s_s: usize, stagger: bool) -> Stage {
    if !stagger {
        Stage::Combined
    } else if step % (2 * s_s) < s_s {
        Stage::Ac
    } else {
        Stage::Ch
    }
}

/// Learning rate η₀·factor^⌊step/every⌋.
pub fn learning_rate(step: usize, eta0: f64, decay_factor: f64, decay_every: usize) -> f64 {
    eta0 * decay_factor.powi((step / decay_every.max(1)) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub s_max: usize,
    /// Staggering period S_s.
    pub s_s: usize,
    /// Weight smoothing rate α_w.
    pub alpha_w: f64,
    /// Initial learning rate η.
    pub eta: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub stagger: bool,
    /// Sample the AC/CH gradient cosine every this many steps (0 = never).
    pub cosine_every: usize,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
    /// Points per evaluation chunk.
    pub chunk: usize,
    pub network: NetworkConfig,
    pub sampling: SamplingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            s_max: 1000,
            s_s: 25,
            alpha_w: 0.5,
            eta: 5e-4,
            decay_factor: 0.9,
            decay_every: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            stagger: true,
            cosine_every: 10,
            checkpoint_every: 0,
            chunk: 128,
            network: NetworkConfig::default(),
            sampling: SamplingConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.s_s == 0 {
            return bad("s_s must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.alpha_w) {
            return bad("alpha_w must lie in [0, 1]");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_every == 0 {
            return bad("decay_factor must lie in (0, 1] and decay_every be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam hyperparameters out of range");
        }
        self.network.validate()?;
        self.sampling.validate(self.network.dim)?;
        Ok(())
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        learning_rate(step, self.eta, self.decay_factor, self.decay_every)
    }
}

/// Unweighted loss values, current weights and the weighted total of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub stage: Stage,
    pub l_ac: f64,
    pub l_ch: f64,
    pub l_bc: f64,
    pub l_ic: f64,
    pub w_ac: f64,
    pub w_ch: f64,
    pub w_bc: f64,
    pub w_ic: f64,
}

impl LossBreakdown {
    pub fn losses(&self) -> [f64; 4] {
        [self.l_ac, self.l_ch, self.l_bc, self.l_ic]
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.w_ac, self.w_ch, self.w_bc, self.w_ic]
    }

    /// Sum of the active PDE losses.
    pub fn l_pde(&self) -> f64 {
        match self.stage {
            Stage::Ac => self.l_ac,
            Stage::Ch => self.l_ch,
            Stage::Combined => self.l_ac + self.l_ch,
        }
    }

    /// Weight of the active PDE loss; `None` when both are active.
    pub fn w_pde(&self) -> Option<f64> {
        match self.stage {
            Stage::Ac => Some(self.w_ac),
            Stage::Ch => Some(self.w_ch),
            Stage::Combined => None,
        }
    }

    /// Weighted sum over the active terms.
    pub fn total(&self) -> f64 {
        let (l, w, a) = (self.losses(), self.weights(), self.stage.active());
        (0..4).filter(|&j| a[j]).map(|j| w[j] * l[j]).sum()
    }
}

/// Grad-norm weights: ŵ_j = Σ_k‖∇L_k‖ / ‖∇L_j‖ over the supplied terms,
/// smoothed as α·w_prev + (1 − α)·ŵ. A term with zero gradient norm keeps
/// its previous weight.
pub fn gradnorm_weights(norms: &[f64], prev: &[f64], alpha_w: f64) -> Vec<f64> {
    let total: f64 = norms.iter().sum();
    norms
        .iter()
        .zip(prev)
        .map(|(&n, &w)| {
            if n > 0.0 {
                alpha_w * w + (1.0 - alpha_w) * (total / n)
            } else {
                w
            }
        })
        .collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, TrainError> {
    if a.len() != b.len() {
        return Err(TrainError::ShapeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(TrainError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(n: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn with_defaults(n: usize) -> Self {
        Self::new(n, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_step(state: &mut OptimizerState, grads: &[f64], params: &mut [f64], lr: f64) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::ShapeMismatch {
            expected: params.len(),
            got: if grads.len() != params.len() { grads.len() } else { state.m.len() },
        });
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + state.epsilon);
    }
    Ok(())
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    pub losses: LossBreakdown,
    pub lr: f64,
    /// AC/CH gradient cosine, on sampled steps.
    pub cosine: Option<f64>,
    pub resampled: bool,
}

pub const HISTORY_HEADER: &str = "step,stage,l_pde,l_bc,l_ic,w_pde,w_bc,w_ic,lr,cosine_sim,l_ac,l_ch,w_ac,w_ch,total";

impl HistoryRecord {
    pub fn csv_line(&self) -> String {
        let l = &self.losses;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{},{},{:e},{:e},{:e},{},{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e}",
            self.step,
            l.stage,
            l.l_pde(),
            l.l_bc,
            l.l_ic,
            opt(l.w_pde()),
            l.w_bc,
            l.w_ic,
            self.lr,
            opt(self.cosine),
            l.l_ac,
            l.l_ch,
            l.w_ac,
            l.w_ch,
            l.total()
        )
    }
}

/// Where the training loop writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainIo {
    /// History CSV, flushed after every step.
    pub history: Option<PathBuf>,
    /// Directory for checkpoints (`checkpoint_<step>.txt` and `checkpoint_final.txt`).
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<HistoryRecord>,
    pub weights: [f64; 4],
}

impl TrainOutcome {
    /// Fraction of sampled steps below `max_step` with negative AC/CH cosine.
    pub fn negative_cosine_fraction(&self, max_step: usize) -> Option<f64> {
        let sampled: Vec<f64> = self
            .history
            .iter()
            .filter(|r| r.step < max_step)
            .filter_map(|r| r.cosine)
            .collect();
        if sampled.is_empty() {
            return None;
        }
        Some(sampled.iter().filter(|&&c| c < 0.0).count() as f64 / sampled.len() as f64)
    }
}

/// Seed of the collocation stream derived from the run seed.
fn sampling_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_C011_0CA7_1010
}

pub fn train(config: &TrainConfig, scenario: &Scenario, seed: u64) -> Result<TrainOutcome, TrainError> {
    train_with(config, scenario, seed, &TrainIo::default())
}

/// Runs exactly `config.s_max` steps of staggered (or combined) training.
pub fn train_with(config: &TrainConfig, scenario: &Scenario, seed: u64, io: &TrainIo) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    scenario
        .validate()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    if config.network.dim != scenario.dim {
        return Err(TrainError::InvalidConfig(format!(
            "network is {}D but the scenario is {}D",
            config.network.dim, scenario.dim
        )));
    }
    let nondim = scenario.nondim();
    let mut params = NetworkParams::init(seed, config.network, HardConstraintHead::from(&nondim))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling_seed(seed));
    let mut opt = OptimizerState::new(params.num_params(), config.beta1, config.beta2, config.epsilon);
    let mut weights = [1.0; 4];
    let mut history = Vec::with_capacity(config.s_max);
    let mut hist_file = match &io.history {
        Some(p) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
            writeln!(f, "{HISTORY_HEADER}")?;
            f.flush()?;
            Some(f)
        }
        None => None,
    };
    let mut colloc: Option<CollocationSet> = None;
    for step in 0..config.s_max {
        let resampled = should_resample(step, config.s_s) || colloc.is_none();
        if resampled {
            colloc = Some(CollocationSet::sample(scenario, &config.sampling, step, &mut rng)?);
        }
        let set = colloc.as_ref().expect("sampled above");
        let stage = stage_for_step(step, config.s_s, config.stagger);
        let active = stage.active();
        let want_cos = config.cosine_every > 0 && step % config.cosine_every == 0;
        let mut want = active;
        if want_cos {
            want[AC] = true;
            want[CH] = true;
        }
        let eval = evaluate_terms(&params, set, &nondim, want, config.chunk)?;
        let finite = eval.loss.iter().all(|v| v.is_finite())
            && eval.grad.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(TrainError::NonFiniteLoss { step });
        }
        let idx: Vec<usize> = (0..4).filter(|&j| active[j]).collect();
        let norms: Vec<f64> = idx
            .iter()
            .map(|&j| l2_norm(eval.grad[j].as_ref().expect("active gradient")))
            .collect();
        let prev: Vec<f64> = idx.iter().map(|&j| weights[j]).collect();
        for (k, w) in gradnorm_weights(&norms, &prev, config.alpha_w).into_iter().enumerate() {
            weights[idx[k]] = w;
        }
        let mut total = vec![0.0; params.num_params()];
        for &j in &idx {
            let g = eval.grad[j].as_ref().expect("active gradient");
            for (t, gi) in total.iter_mut().zip(g) {
                *t += weights[j] * gi;
            }
        }
        let cosine = if want_cos {
            match (eval.grad[AC].as_ref(), eval.grad[CH].as_ref()) {
                (Some(a), Some(b)) => cosine_similarity(a, b).ok(),
                _ => None,
            }
        } else {
            None
        };
        let lr = config.learning_rate(step);
        adam_step(&mut opt, &total, &mut params.theta, lr)?;
        if params.theta.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteLoss { step });
        }
        let rec = HistoryRecord {
            step,
            losses: LossBreakdown {
                stage,
                l_ac: eval.loss[AC],
                l_ch: eval.loss[CH],
                l_bc: eval.loss[BC],
                l_ic: eval.loss[IC],
                w_ac: weights[AC],
                w_ch: weights[CH],
                w_bc: weights[BC],
                w_ic: weights[IC],
            },
            lr,
            cosine,
            resampled,
        };
        if let Some(f) = hist_file.as_mut() {
            writeln!(f, "{}", rec.csv_line())?;
            f.flush()?;
        }
        history.push(rec);
        if let Some(dir) = &io.checkpoint_dir {
            if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
                params.save(&dir.join(format!("checkpoint_{}.txt", step + 1)))?;
            }
        }
    }
    if let Some(dir) = &io.checkpoint_dir {
        params.save(&checkpoint_path(dir))?;
    }
    Ok(TrainOutcome {
        params,
        history,
        weights,
    })
}

pub fn checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoint_final.txt")
}
