//! Benchmark geometries: a box domain, semicircular (hemispherical) pits
//! seeded on one face, and a boundary condition for every face.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{
    initial_c, initial_phi, nondimensionalize, signed_interface_distance, NondimParams, PhysicalParams,
    PhysicsError, DEFAULT_L_C, DEFAULT_T_C,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// One face of the domain box, written `x-`, `x+`, `y-`, … in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub axis: usize,
    pub high: bool,
}

impl Face {
    pub fn new(axis: usize, high: bool) -> Self {
        Face { axis, high }
    }

    /// All `2·dim` faces in a fixed order.
    pub fn all(dim: usize) -> Vec<Face> {
        (0..dim)
            .flat_map(|a| [Face::new(a, false), Face::new(a, true)])
            .collect()
    }

    /// Outward normal sign along `axis`.
    pub fn normal_sign(&self) -> f64 {
        if self.high {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = ["x", "y", "z"].get(self.axis).copied().unwrap_or("?");
        write!(f, "{axis}{}", if self.high { '+' } else { '-' })
    }
}

impl FromStr for Face {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut chars = s.chars();
        let axis = match chars.next() {
            Some('x') => 0,
            Some('y') => 1,
            Some('z') => 2,
            _ => return Err(ScenarioError::Invalid(format!("bad face name `{s}`"))),
        };
        let high = match (chars.next(), chars.next()) {
            (Some('+'), None) => true,
            (Some('-'), None) => false,
            _ => return Err(ScenarioError::Invalid(format!("bad face name `{s}`"))),
        };
        Ok(Face { axis, high })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pit {
    /// Non-dimensional centre, on a face of the box.
    pub center: Vec<f64>,
    /// Non-dimensional radius.
    pub radius: f64,
}

/// Boundary condition at one boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcKind {
    Dirichlet { phi: f64, c: f64 },
    /// Zero normal derivative of φ and c across a face normal to `axis`.
    Flux { axis: usize },
}

/// Kind of condition declared for a whole face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Solid,
    Liquid,
    Flux,
}

/// A complete benchmark case in non-dimensional units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub space_lo: Vec<f64>,
    pub space_hi: Vec<f64>,
    pub t_end: f64,
    pub pits: Vec<Pit>,
    pub solid_faces: Vec<Face>,
    pub liquid_faces: Vec<Face>,
    pub flux_faces: Vec<Face>,
    /// Boundary points inside a pit mouth carry liquid Dirichlet values
    /// (φ = 0, c = 0) whatever their face declares.
    pub pit_mouth_liquid: bool,
    pub physical: PhysicalParams,
    pub l_c: f64,
    pub t_c: f64,
}

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_SCENARIOS: [&str; 4] = ["2d-2pit", "2d-3pit", "3d-1pit", "3d-2pit"];

const UM: f64 = 1.0e-6;

impl Scenario {
    /// Builds a scenario from micrometre geometry and a time horizon in
    /// seconds, using the default material constants and scales.
    #[allow(clippy::too_many_arguments)]
    pub fn from_microns(
        name: &str,
        lo_um: &[f64],
        hi_um: &[f64],
        t_end_s: f64,
        pits_um: &[(Vec<f64>, f64)],
        solid: &[Face],
        liquid: &[Face],
        flux: &[Face],
    ) -> Self {
        let l_c = DEFAULT_L_C;
        let s = |v: f64| v * UM / l_c;
        Scenario {
            name: name.to_string(),
            dim: lo_um.len(),
            space_lo: lo_um.iter().map(|&v| s(v)).collect(),
            space_hi: hi_um.iter().map(|&v| s(v)).collect(),
            t_end: t_end_s / DEFAULT_T_C,
            pits: pits_um
                .iter()
                .map(|(c, r)| Pit {
                    center: c.iter().map(|&v| s(v)).collect(),
                    radius: s(*r),
                })
                .collect(),
            solid_faces: solid.to_vec(),
            liquid_faces: liquid.to_vec(),
            flux_faces: flux.to_vec(),
            pit_mouth_liquid: true,
            physical: PhysicalParams::default(),
            l_c,
            t_c: DEFAULT_T_C,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let f = |s: &str| Face::from_str(s).expect("static face name");
        let sc = match name {
            "2d-2pit" => Scenario::from_microns(
                name,
                &[-50.0, 0.0],
                &[50.0, 50.0],
                10.0,
                &[(vec![-15.0, 0.0], 5.0), (vec![15.0, 0.0], 5.0)],
                &[f("y+")],
                &[],
                &[f("x-"), f("x+"), f("y-")],
            ),
            "2d-3pit" => Scenario::from_microns(
                name,
                &[-50.0, 0.0],
                &[50.0, 50.0],
                10.0,
                &[
                    (vec![-15.0, 0.0], 5.0),
                    (vec![15.0, 0.0], 5.0),
                    (vec![0.0, 50.0], 5.0),
                ],
                &[],
                &[],
                &[f("x-"), f("x+"), f("y-"), f("y+")],
            ),
            "3d-1pit" => Scenario::from_microns(
                name,
                &[-40.0, -40.0, 0.0],
                &[40.0, 40.0, 40.0],
                10.0,
                &[(vec![0.0, 0.0, 40.0], 10.0)],
                &[f("z-")],
                &[],
                &[f("x-"), f("x+"), f("y-"), f("y+"), f("z+")],
            ),
            "3d-2pit" => Scenario::from_microns(
                name,
                &[-80.0, -80.0, 0.0],
                &[80.0, 80.0, 40.0],
                10.0,
                &[(vec![-20.0, 0.0, 40.0], 10.0), (vec![20.0, 0.0, 40.0], 10.0)],
                &[f("z-")],
                &[],
                &[f("x-"), f("x+"), f("y-"), f("y+"), f("z+")],
            ),
            other => return Err(ScenarioError::UnknownBuiltin(other.to_string())),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn nondim(&self) -> NondimParams {
        nondimensionalize(&self.physical, self.l_c, self.t_c).expect("validated scales")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.dim == 2 || self.dim == 3) {
            return bad(format!("dimension must be 2 or 3, got {}", self.dim));
        }
        if self.space_lo.len() != self.dim || self.space_hi.len() != self.dim {
            return bad("domain bounds do not match the dimension".into());
        }
        for a in 0..self.dim {
            if !(self.space_lo[a] < self.space_hi[a]) {
                return bad(format!("empty extent on axis {a}"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.l_c > 0.0 && self.t_c > 0.0) {
            return Err(PhysicsError::NonPositiveScale {
                l_c: self.l_c,
                t_c: self.t_c,
            }
            .into());
        }
        self.physical.validate()?;
        for face in Face::all(self.dim) {
            let n = [&self.solid_faces, &self.liquid_faces, &self.flux_faces]
                .iter()
                .filter(|set| set.contains(&face))
                .count();
            let dup = [&self.solid_faces, &self.liquid_faces, &self.flux_faces]
                .iter()
                .any(|set| set.iter().filter(|&&f| f == face).count() > 1);
            if n != 1 || dup {
                return bad(format!("face {face} must appear in exactly one face set"));
            }
        }
        for f in self.solid_faces.iter().chain(&self.liquid_faces).chain(&self.flux_faces) {
            if f.axis >= self.dim {
                return bad(format!("face {f} does not exist in {}D", self.dim));
            }
        }
        for (i, pit) in self.pits.iter().enumerate() {
            if pit.center.len() != self.dim {
                return bad(format!("pit {i} has the wrong number of coordinates"));
            }
            if !(pit.radius > 0.0) {
                return bad(format!("pit {i} radius must be positive"));
            }
            if self.pit_face(pit).is_none() {
                return bad(format!("pit {i} centre does not lie on a domain face"));
            }
            let inside = (0..self.dim)
                .all(|a| pit.center[a] >= self.space_lo[a] - 1e-12 && pit.center[a] <= self.space_hi[a] + 1e-12);
            if !inside {
                return bad(format!("pit {i} centre lies outside the domain"));
            }
        }
        Ok(())
    }

    /// The face a pit is seeded on.
    pub fn pit_face(&self, pit: &Pit) -> Option<Face> {
        let tol = 1e-12;
        (0..self.dim).find_map(|a| {
            if (pit.center[a] - self.space_lo[a]).abs() <= tol {
                Some(Face::new(a, false))
            } else if (pit.center[a] - self.space_hi[a]).abs() <= tol {
                Some(Face::new(a, true))
            } else {
                None
            }
        })
    }

    pub fn face_kind(&self, face: Face) -> FaceKind {
        if self.solid_faces.contains(&face) {
            FaceKind::Solid
        } else if self.liquid_faces.contains(&face) {
            FaceKind::Liquid
        } else {
            FaceKind::Flux
        }
    }

    /// Boundary condition at a spatial point on `face`.
    pub fn condition_at(&self, face: Face, point: &[f64]) -> BcKind {
        if self.pit_mouth_liquid && signed_interface_distance(point, self) > 0.0 {
            return BcKind::Dirichlet { phi: 0.0, c: 0.0 };
        }
        match self.face_kind(face) {
            FaceKind::Solid => BcKind::Dirichlet { phi: 1.0, c: 1.0 },
            FaceKind::Liquid => BcKind::Dirichlet { phi: 0.0, c: 0.0 },
            FaceKind::Flux => BcKind::Flux { axis: face.axis },
        }
    }

    /// Measure of a face (length in 2D, area in 3D).
    pub fn face_measure(&self, face: Face) -> f64 {
        (0..self.dim)
            .filter(|&a| a != face.axis)
            .map(|a| self.space_hi[a] - self.space_lo[a])
            .product()
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        (0..self.dim).all(|a| point[a] >= self.space_lo[a] - tol && point[a] <= self.space_hi[a] + tol)
    }

    /// Non-dimensional half-width of one interface thickness.
    pub fn ell_nd(&self) -> f64 {
        self.physical.ell / self.l_c
    }

    pub fn initial_phi_at(&self, point: &[f64]) -> f64 {
        initial_phi(signed_interface_distance(point, self), &self.physical, self.l_c)
    }

    pub fn initial_c_at(&self, point: &[f64]) -> f64 {
        initial_c(signed_interface_distance(point, self), &self.physical, self.l_c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_names_round_trip() {
        for f in Face::all(3) {
            assert_eq!(f.to_string().parse::<Face>().unwrap(), f);
        }
        assert!("w+".parse::<Face>().is_err());
        assert!("x".parse::<Face>().is_err());
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_SCENARIOS {
            Scenario::builtin(name).unwrap();
        }
        assert!(Scenario::builtin("4d").is_err());
    }

    #[test]
    fn pit_off_boundary_is_rejected() {
        let mut s = Scenario::builtin("2d-2pit").unwrap();
        s.pits[0].center[1] = 0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_face_is_rejected() {
        let mut s = Scenario::builtin("2d-2pit").unwrap();
        s.solid_faces.push(Face::new(0, false));
        assert!(s.validate().is_err());
    }

    #[test]
    fn pit_mouth_is_liquid() {
        let s = Scenario::builtin("2d-2pit").unwrap();
        let bottom = Face::new(1, false);
        assert_eq!(
            s.condition_at(bottom, &[0.15, 0.0]),
            BcKind::Dirichlet { phi: 0.0, c: 0.0 }
        );
        assert_eq!(s.condition_at(bottom, &[0.0, 0.0]), BcKind::Flux { axis: 1 });
        assert_eq!(
            s.condition_at(Face::new(1, true), &[0.0, 0.5]),
            BcKind::Dirichlet { phi: 1.0, c: 1.0 }
        );
    }
}
