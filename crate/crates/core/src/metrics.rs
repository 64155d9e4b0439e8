//! Field snapshots on regular grids, error reports and file export.
//!
//! Node arrays are ordered with the first axis varying fastest.

use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::network::{batched, NetworkParams};
use crate::physics::Scenario;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid snapshot: {0}")]
    Invalid(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    /// Non-dimensional time.
    pub time: f64,
    /// Node coordinates per spatial axis.
    pub axes: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub c: Vec<f64>,
}

/// Evenly spaced nodes covering the scenario box with spacing close to `h`.
pub fn uniform_axes(scenario: &Scenario, h: f64) -> Vec<Vec<f64>> {
    (0..scenario.dim)
        .map(|a| {
            let (lo, hi) = (scenario.space_lo[a], scenario.space_hi[a]);
            let n = ((hi - lo) / h).round().max(1.0) as usize + 1;
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        })
        .collect()
}

impl FieldSnapshot {
    pub fn new(time: f64, axes: Vec<Vec<f64>>, phi: Vec<f64>, c: Vec<f64>) -> Result<Self, MetricsError> {
        let n: usize = axes.iter().map(Vec::len).product();
        if axes.is_empty() || phi.len() != n || c.len() != n {
            return Err(MetricsError::Invalid(format!(
                "expected {n} nodes, got phi {} and c {}",
                phi.len(),
                c.len()
            )));
        }
        if phi.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(MetricsError::Invalid("non-finite field value".into()));
        }
        Ok(FieldSnapshot { time, axes, phi, c })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Spatial coordinates of node `idx`.
    pub fn coords(&self, mut idx: usize) -> Vec<f64> {
        self.axes
            .iter()
            .map(|ax| {
                let i = idx % ax.len();
                idx /= ax.len();
                ax[i]
            })
            .collect()
    }

    /// Checks that two snapshots share time and grid.
    pub fn check_compatible(&self, other: &FieldSnapshot) -> Result<(), MetricsError> {
        if self.dims() != other.dims() {
            return Err(MetricsError::GridMismatch(format!(
                "node counts {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let tol = 1e-9;
        for (a, b) in self.axes.iter().zip(&other.axes) {
            if a.iter().zip(b).any(|(x, y)| (x - y).abs() > tol * (1.0 + x.abs())) {
                return Err(MetricsError::GridMismatch("node coordinates differ".into()));
            }
        }
        if (self.time - other.time).abs() > tol * (1.0 + self.time.abs()) {
            return Err(MetricsError::GridMismatch(format!(
                "times {} vs {}",
                self.time, other.time
            )));
        }
        Ok(())
    }

    /// Number of face-connected regions with φ below `threshold`.
    pub fn liquid_components(&self, threshold: f64) -> usize {
        let dims = self.dims();
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        let strides: Vec<usize> = dims
            .iter()
            .scan(1, |s, &d| {
                let cur = *s;
                *s *= d;
                Some(cur)
            })
            .collect();
        for start in 0..n {
            if seen[start] || self.phi[start] >= threshold {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                for (a, &d) in dims.iter().enumerate() {
                    let i = (k / strides[a]) % d;
                    let mut nb = Vec::with_capacity(2);
                    if i > 0 {
                        nb.push(k - strides[a]);
                    }
                    if i + 1 < d {
                        nb.push(k + strides[a]);
                    }
                    for m in nb {
                        if !seen[m] && self.phi[m] < threshold {
                            seen[m] = true;
                            stack.push(m);
                        }
                    }
                }
            }
        }
        count
    }

    /// Share of nodes with φ below `threshold`.
    pub fn liquid_fraction(&self, threshold: f64) -> f64 {
        self.phi.iter().filter(|&&p| p < threshold).count() as f64 / self.len().max(1) as f64
    }

    /// Linear interpolation in time between two snapshots on the same grid.
    pub fn lerp(a: &FieldSnapshot, b: &FieldSnapshot, time: f64) -> FieldSnapshot {
        let w = if b.time > a.time {
            ((time - a.time) / (b.time - a.time)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + w * (q - p)).collect();
        FieldSnapshot {
            time,
            axes: a.axes.clone(),
            phi: mix(&a.phi, &b.phi),
            c: mix(&a.c, &b.c),
        }
    }
}

/// Network prediction at every node of `axes` at `time`.
pub fn evaluate_network_on_grid(params: &NetworkParams, axes: &[Vec<f64>], time: f64) -> FieldSnapshot {
    let n: usize = axes.iter().map(Vec::len).product();
    let d = axes.len();
    let mut coords = Vec::with_capacity(n * (d + 1));
    let proto = FieldSnapshot {
        time,
        axes: axes.to_vec(),
        phi: Vec::new(),
        c: Vec::new(),
    };
    for k in 0..n {
        coords.extend(proto.coords(k));
        coords.push(time);
    }
    let vals = batched::eval_points(params, &coords);
    FieldSnapshot {
        phi: vals.iter().map(|v| v.0).collect(),
        c: vals.iter().map(|v| v.1).collect(),
        ..proto
    }
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

/// Root mean square of the pointwise φ difference.
pub fn l2_error(a: &FieldSnapshot, b: &FieldSnapshot) -> Result<f64, MetricsError> {
    a.check_compatible(b)?;
    Ok(rms(&a.phi, &b.phi))
}

/// Root mean square of the pointwise c difference.
pub fn l2_error_c(a: &FieldSnapshot, b: &FieldSnapshot) -> Result<f64, MetricsError> {
    a.check_compatible(b)?;
    Ok(rms(&a.c, &b.c))
}

/// Per-time φ errors of a prediction against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// Per-time c errors.
    pub errors_c: Vec<f64>,
    pub max_error: f64,
    pub time_of_max: f64,
    /// Time average of the per-time errors.
    pub mean_error: f64,
    /// RMS over all nodes and times.
    pub spacetime_rms: f64,
    /// Location, time and size of the largest pointwise |Δφ|.
    pub worst_point: Vec<f64>,
    pub worst_time: f64,
    pub worst_deviation: f64,
}

impl ErrorReport {
    pub fn compute(pred: &[FieldSnapshot], reference: &[FieldSnapshot]) -> Result<Self, MetricsError> {
        if pred.len() != reference.len() || pred.is_empty() {
            return Err(MetricsError::GridMismatch(format!(
                "{} predicted vs {} reference snapshots",
                pred.len(),
                reference.len()
            )));
        }
        let mut r = ErrorReport {
            times: Vec::new(),
            errors: Vec::new(),
            errors_c: Vec::new(),
            max_error: 0.0,
            time_of_max: pred[0].time,
            mean_error: 0.0,
            spacetime_rms: 0.0,
            worst_point: Vec::new(),
            worst_time: pred[0].time,
            worst_deviation: 0.0,
        };
        let mut sq = 0.0;
        let mut count = 0usize;
        for (p, q) in pred.iter().zip(reference) {
            let e = l2_error(p, q)?;
            r.times.push(p.time);
            r.errors.push(e);
            r.errors_c.push(l2_error_c(p, q)?);
            if e > r.max_error || r.errors.len() == 1 {
                r.max_error = e;
                r.time_of_max = p.time;
            }
            for (k, (a, b)) in p.phi.iter().zip(&q.phi).enumerate() {
                let dev = (a - b).abs();
                sq += dev * dev;
                if dev > r.worst_deviation || r.worst_point.is_empty() {
                    r.worst_deviation = dev;
                    r.worst_point = p.coords(k);
                    r.worst_time = p.time;
                }
            }
            count += p.len();
        }
        r.mean_error = r.errors.iter().sum::<f64>() / r.errors.len() as f64;
        r.spacetime_rms = (sq / count as f64).sqrt();
        Ok(r)
    }

    /// Delimited text: one line per time, then summary lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("time,l2_phi,l2_c\n");
        for k in 0..self.times.len() {
            let _ = writeln!(s, "{:?},{:e},{:e}", self.times[k], self.errors[k], self.errors_c[k]);
        }
        let _ = writeln!(s, "# max_error,{:e},at_time,{:?}", self.max_error, self.time_of_max);
        let _ = writeln!(s, "# mean_error,{:e}", self.mean_error);
        let _ = writeln!(s, "# spacetime_rms,{:e}", self.spacetime_rms);
        let pt: Vec<String> = self.worst_point.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(
            s,
            "# worst_point,{},at_time,{:?},deviation,{:e}",
            pt.join(";"),
            self.worst_time,
            self.worst_deviation
        );
        s
    }
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// CSV with header `x[,y[,z]],t,phi,c` and shortest round-trip floats.
pub fn export_csv(snap: &FieldSnapshot, path: &Path) -> Result<(), MetricsError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    let d = snap.axes.len();
    writeln!(f, "{},t,phi,c", AXIS_NAMES[..d].join(","))?;
    let mut line = String::new();
    for k in 0..snap.len() {
        line.clear();
        for x in snap.coords(k) {
            let _ = write!(line, "{x:?},");
        }
        let _ = write!(line, "{:?},{:?},{:?}", snap.time, snap.phi[k], snap.c[k]);
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a CSV written by [`export_csv`].
pub fn import_csv(path: &Path) -> Result<FieldSnapshot, MetricsError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or(MetricsError::Parse {
            line: 1,
            msg: "empty file".into(),
        })??;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.len().checked_sub(3).filter(|&d| (1..=3).contains(&d)).ok_or(MetricsError::Parse {
        line: 1,
        msg: "unexpected header".into(),
    })?;
    if cols[..d] != AXIS_NAMES[..d] || cols[d..] != ["t", "phi", "c"] {
        return Err(MetricsError::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let (mut phi, mut c) = (Vec::new(), Vec::new());
    let mut time = None;
    for (i, l) in lines.enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let v: Result<Vec<f64>, _> = l.split(',').map(str::parse::<f64>).collect();
        let v = v.map_err(|e| MetricsError::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        if v.len() != d + 3 {
            return Err(MetricsError::Parse {
                line: i + 2,
                msg: format!("expected {} columns", d + 3),
            });
        }
        time.get_or_insert(v[d]);
        pts.push(v[..d].to_vec());
        phi.push(v[d + 1]);
        c.push(v[d + 2]);
    }
    // Axis values in first-axis-fastest order.
    let mut axes = Vec::with_capacity(d);
    let mut stride = 1usize;
    for a in 0..d {
        let mut ax = Vec::new();
        let mut k = 0;
        while k < pts.len() {
            let v = pts[k][a];
            if ax.last() == Some(&v) || (a > 0 && ax.contains(&v)) {
                break;
            }
            ax.push(v);
            k += stride;
            if a == 0 && k < pts.len() && pts[k][a] <= v {
                break;
            }
        }
        stride *= ax.len().max(1);
        axes.push(ax);
    }
    FieldSnapshot::new(time.unwrap_or(0.0), axes, phi, c)
}

/// Legacy ASCII VTK structured-points dataset with scalars `phi` and `c`.
pub fn export_vtk(snap: &FieldSnapshot, path: &Path) -> Result<(), MetricsError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    let mut dims = snap.dims();
    let mut origin: Vec<f64> = snap.axes.iter().map(|a| a[0]).collect();
    let mut spacing: Vec<f64> = snap
        .axes
        .iter()
        .map(|a| if a.len() > 1 { a[1] - a[0] } else { 1.0 })
        .collect();
    while dims.len() < 3 {
        dims.push(1);
        origin.push(0.0);
        spacing.push(1.0);
    }
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "phase field snapshot t={:?}", snap.time)?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET STRUCTURED_POINTS")?;
    writeln!(f, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(f, "ORIGIN {:?} {:?} {:?}", origin[0], origin[1], origin[2])?;
    writeln!(f, "SPACING {:?} {:?} {:?}", spacing[0], spacing[1], spacing[2])?;
    writeln!(f, "POINT_DATA {}", snap.len())?;
    for (name, data) in [("phi", &snap.phi), ("c", &snap.c)] {
        writeln!(f, "SCALARS {name} double 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for v in data.iter() {
            writeln!(f, "{v:?}")?;
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(v: f64) -> FieldSnapshot {
        FieldSnapshot::new(0.5, vec![vec![0.0, 1.0], vec![0.0, 0.5]], vec![v; 4], vec![0.2; 4]).unwrap()
    }

    #[test]
    fn constant_offset() {
        let e = l2_error(&snap(0.3), &snap(0.4)).unwrap();
        assert!((e - 0.1).abs() < 1e-15);
        assert_eq!(l2_error(&snap(0.3), &snap(0.3)).unwrap(), 0.0);
    }

    #[test]
    fn mismatch() {
        let mut b = snap(0.3);
        b.axes[0] = vec![0.0, 2.0];
        assert!(matches!(l2_error(&snap(0.3), &b), Err(MetricsError::GridMismatch(_))));
        let c = FieldSnapshot::new(0.5, vec![vec![0.0, 1.0, 2.0], vec![0.0, 0.5]], vec![0.0; 6], vec![0.0; 6]).unwrap();
        assert!(l2_error(&snap(0.3), &c).is_err());
    }

    #[test]
    fn components() {
        let phi = vec![0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let s = FieldSnapshot::new(0.0, vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0]], phi, vec![0.0; 6]).unwrap();
        assert_eq!(s.liquid_components(0.5), 2);
    }
}
