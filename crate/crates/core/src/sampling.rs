//! Collocation sets for the residual, boundary and initial-condition losses.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{signed_interface_distance, BcKind, Face, Scenario};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid sampling configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sizes of the three collocation sets and the interface refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Per-axis counts for the general set, spatial axes first, then time.
    pub n_g: Vec<usize>,
    pub n_b: usize,
    pub n_i: usize,
    /// Share of initial points drawn inside the interface band.
    pub band_share: f64,
    /// Band half-width in interface thicknesses.
    pub band_width: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_g: vec![40, 20, 30],
            n_b: 500,
            n_i: 800,
            band_share: 0.5,
            band_width: 1.5,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self, dim: usize) -> Result<(), SamplingError> {
        if self.n_g.len() != dim + 1 {
            return Err(SamplingError::InvalidConfig(format!(
                "n_g needs {} counts, got {}",
                dim + 1,
                self.n_g.len()
            )));
        }
        if self.n_g.contains(&0) || self.n_b == 0 || self.n_i == 0 {
            return Err(SamplingError::InvalidConfig("all counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.band_share) || !(self.band_width > 0.0) {
            return Err(SamplingError::InvalidConfig(
                "band_share must lie in [0, 1] and band_width be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    /// (x…, t)
    pub coords: Vec<f64>,
    pub face: Face,
    pub condition: BcKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub x: Vec<f64>,
    pub phi: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    /// (x…, t) points of the residual loss.
    pub general: Vec<Vec<f64>>,
    pub boundary: Vec<BoundaryPoint>,
    pub initial: Vec<InitialPoint>,
    pub epoch_created: usize,
}

impl CollocationSet {
    pub fn sample<R: Rng>(
        scenario: &Scenario,
        cfg: &SamplingConfig,
        step: usize,
        rng: &mut R,
    ) -> Result<Self, SamplingError> {
        cfg.validate(scenario.dim)?;
        Ok(CollocationSet {
            general: sample_general(scenario, &cfg.n_g, rng),
            boundary: sample_boundary(scenario, cfg.n_b, rng),
            initial: sample_initial_with(scenario, cfg.n_i, cfg.band_share, cfg.band_width, rng)?,
            epoch_created: step,
        })
    }

    /// Writes the set as whitespace-free comma-separated text, one point per
    /// line: `set,axis columns…,targets…`.
    pub fn dump(&self, path: &Path) -> Result<(), SamplingError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# set,coordinates...,targets")?;
        for p in &self.general {
            write!(f, "general")?;
            for v in p {
                write!(f, ",{v:?}")?;
            }
            writeln!(f)?;
        }
        for b in &self.boundary {
            write!(f, "boundary")?;
            for v in &b.coords {
                write!(f, ",{v:?}")?;
            }
            match b.condition {
                BcKind::Dirichlet { phi, c } => writeln!(f, ",{},dirichlet,{phi:?},{c:?}", b.face)?,
                BcKind::Flux { .. } => writeln!(f, ",{},flux", b.face)?,
            }
        }
        for p in &self.initial {
            write!(f, "initial")?;
            for v in &p.x {
                write!(f, ",{v:?}")?;
            }
            writeln!(f, ",{:?},{:?}", p.phi, p.c)?;
        }
        f.flush()?;
        Ok(())
    }
}

fn uniform<R: Rng>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Cartesian product of per-axis uniform draws; axes are the spatial
/// coordinates followed by time. The last axis varies fastest.
pub fn sample_general<R: Rng>(scenario: &Scenario, counts: &[usize], rng: &mut R) -> Vec<Vec<f64>> {
    let d = scenario.dim;
    assert_eq!(counts.len(), d + 1, "one count per axis including time");
    let axes: Vec<Vec<f64>> = (0..=d)
        .map(|a| {
            let (lo, hi) = if a < d {
                (scenario.space_lo[a], scenario.space_hi[a])
            } else {
                (0.0, scenario.t_end)
            };
            (0..counts[a]).map(|_| uniform(lo, hi, rng)).collect()
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d + 1];
    for _ in 0..total {
        out.push((0..=d).map(|a| axes[a][idx[a]]).collect());
        for a in (0..=d).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Points spread over all faces in proportion to face measure, uniform in
/// time. Each carries the condition of its face at that location.
pub fn sample_boundary<R: Rng>(scenario: &Scenario, n_b: usize, rng: &mut R) -> Vec<BoundaryPoint> {
    let d = scenario.dim;
    let faces = Face::all(d);
    let measures: Vec<f64> = faces.iter().map(|&f| scenario.face_measure(f)).collect();
    let total: f64 = measures.iter().sum();
    (0..n_b)
        .map(|_| {
            let mut r = rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < faces.len() && r >= measures[k] {
                r -= measures[k];
                k += 1;
            }
            let face = faces[k];
            let mut coords: Vec<f64> = (0..d)
                .map(|a| {
                    if a == face.axis {
                        if face.high {
                            scenario.space_hi[a]
                        } else {
                            scenario.space_lo[a]
                        }
                    } else {
                        uniform(scenario.space_lo[a], scenario.space_hi[a], rng)
                    }
                })
                .collect();
            let condition = scenario.condition_at(face, &coords);
            coords.push(uniform(0.0, scenario.t_end, rng));
            BoundaryPoint {
                coords,
                face,
                condition,
            }
        })
        .collect()
}

/// Initial points with the default refinement (half of the points within
/// ±1.5 interface thicknesses of the pit rims).
pub fn sample_initial<R: Rng>(scenario: &Scenario, n_i: usize, rng: &mut R) -> Result<Vec<InitialPoint>, SamplingError> {
    sample_initial_with(scenario, n_i, 0.5, 1.5, rng)
}

/// Initial points: `band_share · n_i` drawn uniformly inside the band
/// |x_d| ≤ band_width·ℓ around the initial interface, the rest uniformly
/// over the domain. Without pits every point is uniform.
pub fn sample_initial_with<R: Rng>(
    scenario: &Scenario,
    n_i: usize,
    band_share: f64,
    band_width: f64,
    rng: &mut R,
) -> Result<Vec<InitialPoint>, SamplingError> {
    let d = scenario.dim;
    let band = band_width * scenario.ell_nd();
    let n_band = if scenario.pits.is_empty() {
        0
    } else {
        (band_share * n_i as f64).round() as usize
    };
    let mut pts = Vec::with_capacity(n_i);
    let target = |x: Vec<f64>| {
        let phi = scenario.initial_phi_at(&x);
        let c = scenario.initial_c_at(&x);
        InitialPoint { x, phi, c }
    };
    if n_band > 0 {
        // Rejection sampling inside the union of pit bounding boxes grown by the band.
        let reach = scenario.pits.iter().map(|p| p.radius + band).fold(0.0, f64::max);
        let lo: Vec<f64> = (0..d)
            .map(|a| {
                let m = scenario.pits.iter().map(|p| p.center[a]).fold(f64::INFINITY, f64::min);
                (m - reach).max(scenario.space_lo[a])
            })
            .collect();
        let hi: Vec<f64> = (0..d)
            .map(|a| {
                let m = scenario.pits.iter().map(|p| p.center[a]).fold(f64::NEG_INFINITY, f64::max);
                (m + reach).min(scenario.space_hi[a])
            })
            .collect();
        let max_tries = 10_000 * n_band.max(1);
        let mut tries = 0;
        while pts.len() < n_band {
            tries += 1;
            if tries > max_tries {
                return Err(SamplingError::DegenerateGeometry(
                    "the interface band does not intersect the domain".into(),
                ));
            }
            let x: Vec<f64> = (0..d).map(|a| uniform(lo[a], hi[a], rng)).collect();
            if signed_interface_distance(&x, scenario).abs() <= band {
                pts.push(target(x));
            }
        }
    }
    while pts.len() < n_i {
        let x: Vec<f64> = (0..d)
            .map(|a| uniform(scenario.space_lo[a], scenario.space_hi[a], rng))
            .collect();
        pts.push(target(x));
    }
    Ok(pts)
}

/// Resampling happens at the start of every double stage.
pub fn should_resample(step: usize, s_s: usize) -> bool {
    step % (2 * s_s) == 0
}
