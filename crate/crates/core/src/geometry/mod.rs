//! Scenario parameter points, their ellipsoidal coverage kernels, and Monte
//! Carlo estimates of the volume covered by a union of kernels.
//!
//! A concrete scenario is a point in a bounded, axis-aligned parameter box.
//! Around each point sits an axis-aligned ellipsoid with per-dimension
//! semi-axes `p_j`; a location `x` is covered by the kernel centered at `c`
//! when `sum_j ((x_j - c_j) / p_j)^2 <= 1` (boundary included). The covered
//! volume of a scenario set is the volume of the union of its kernels,
//! estimated by hit-or-miss sampling over a seeded [`SampleCloud`].

mod cloud;
pub(crate) mod grid;
mod reference;

pub use cloud::{coverage_curve, coverage_curve_from, union_volume, SampleCloud, VolumeEstimate};
pub use reference::{build_reference_volume, ReferenceVolume};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded box of admissible scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::contract("parameter space needs at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::contract(format!(
                    "dimension {j}: lower bound {lo} must be finite and below upper bound {hi}"
                )));
            }
        }
        Ok(ParameterSpace { lower, upper })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Product of the side lengths.
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub(crate) fn check_dims(&self, found: usize) -> Result<()> {
        if found == self.dims() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dims(),
                found,
            })
        }
    }
}

/// One concrete scenario, one coordinate per scenario parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::contract("parameter point needs at least one coordinate"));
        }
        if let Some(j) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("coordinate {j} is not finite")));
        }
        Ok(ParameterPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-dimension half-widths `p_j` of a coverage ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SemiAxes(Vec<f64>);

impl SemiAxes {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("semi-axes need at least one dimension"));
        }
        if let Some(j) = values.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::contract(format!(
                "semi-axis {j} must be a positive finite number, got {}",
                values[j]
            )));
        }
        Ok(SemiAxes(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// Every semi-axis multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        SemiAxes::new(self.0.iter().map(|p| p * factor).collect())
    }

    /// Volume of the full ellipsoid, `pi^(m/2) / Gamma(m/2 + 1) * prod p_j`.
    pub fn ellipsoid_volume(&self) -> f64 {
        unit_ball_volume(self.dims()) * self.0.iter().product::<f64>()
    }
}

impl TryFrom<Vec<f64>> for SemiAxes {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        SemiAxes::new(values)
    }
}

impl From<SemiAxes> for Vec<f64> {
    fn from(axes: SemiAxes) -> Self {
        axes.0
    }
}

/// Volume of the m-dimensional unit ball via the two-step recurrence
/// `V_m = 2 pi / m * V_{m-2}`.
pub fn unit_ball_volume(m: usize) -> f64 {
    let mut v = [1.0, 2.0];
    if m < 2 {
        return v[m];
    }
    let mut out = 0.0;
    for k in 2..=m {
        out = 2.0 * std::f64::consts::PI / k as f64 * v[k % 2];
        v[k % 2] = out;
    }
    out
}

/// Axis-aligned ellipsoid around one scenario point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageKernel {
    center: ParameterPoint,
    semi_axes: SemiAxes,
}

impl CoverageKernel {
    pub fn new(center: ParameterPoint, semi_axes: SemiAxes) -> Result<Self> {
        if center.dims() != semi_axes.dims() {
            return Err(Error::DimensionMismatch {
                expected: semi_axes.dims(),
                found: center.dims(),
            });
        }
        Ok(CoverageKernel { center, semi_axes })
    }

    pub fn center(&self) -> &ParameterPoint {
        &self.center
    }

    pub fn semi_axes(&self) -> &SemiAxes {
        &self.semi_axes
    }

    pub fn dims(&self) -> usize {
        self.center.dims()
    }

    /// Membership test; points on the boundary are covered.
    pub fn contains(&self, x: &ParameterPoint) -> Result<bool> {
        if x.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: x.dims(),
            });
        }
        Ok(self.contains_coords(x.coords()))
    }

    #[inline]
    pub(crate) fn contains_coords(&self, x: &[f64]) -> bool {
        ellipsoid_contains(self.center.coords(), self.semi_axes.values(), x)
    }

    /// Bounding box, padded by a relative 1e-9 so that rounding in the
    /// membership test can never place a covered point outside it.
    pub(crate) fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.center.coords();
        let p = self.semi_axes.values();
        let lo = c
            .iter()
            .zip(p)
            .map(|(c, p)| c - p * (1.0 + 1e-9) - c.abs() * 1e-15)
            .collect();
        let hi = c
            .iter()
            .zip(p)
            .map(|(c, p)| c + p * (1.0 + 1e-9) + c.abs() * 1e-15)
            .collect();
        (lo, hi)
    }
}

/// Partial sums only grow, so leaving the loop once the sum exceeds one
/// gives the same verdict as the full sum.
#[inline]
pub(crate) fn ellipsoid_contains(center: &[f64], semi_axes: &[f64], x: &[f64]) -> bool {
    let mut sum = 0.0;
    for ((xj, cj), pj) in x.iter().zip(center).zip(semi_axes) {
        let d = (xj - cj) / pj;
        sum += d * d;
        if sum > 1.0 {
            return false;
        }
    }
    true
}

/// Kernels with shared semi-axes around every point.
pub fn kernels_for(points: &[ParameterPoint], semi_axes: &SemiAxes) -> Result<Vec<CoverageKernel>> {
    points
        .iter()
        .map(|p| CoverageKernel::new(p.clone(), semi_axes.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> ParameterPoint {
        ParameterPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn space_validation() {
        assert!(ParameterSpace::new(vec![], vec![]).is_err());
        assert!(ParameterSpace::new(vec![0.0], vec![0.0]).is_err());
        assert!(ParameterSpace::new(vec![1.0], vec![0.0]).is_err());
        assert!(matches!(
            ParameterSpace::new(vec![0.0, 0.0], vec![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let s = ParameterSpace::new(vec![-2.0, 0.0], vec![2.0, 0.5]).unwrap();
        assert_eq!(s.volume(), 2.0);
        assert!(s.contains(&[2.0, 0.5]));
        assert!(!s.contains(&[2.1, 0.5]));
    }

    #[test]
    fn point_and_axes_validation() {
        assert!(ParameterPoint::new(vec![f64::NAN]).is_err());
        assert!(ParameterPoint::new(vec![]).is_err());
        assert!(SemiAxes::new(vec![1.0, 0.0]).is_err());
        assert!(SemiAxes::new(vec![1.0, -2.0]).is_err());
        assert!(SemiAxes::new(vec![f64::INFINITY]).is_err());
        let axes: std::result::Result<SemiAxes, _> = serde_json::from_str("[1.0, -1.0]");
        assert!(axes.is_err());
    }

    #[test]
    fn kernel_membership_includes_boundary() {
        let k = CoverageKernel::new(pt(&[0.0, 0.0]), SemiAxes::new(vec![2.0, 1.0]).unwrap()).unwrap();
        assert!(k.contains(&pt(&[2.0, 0.0])).unwrap());
        assert!(k.contains(&pt(&[0.0, -1.0])).unwrap());
        assert!(!k.contains(&pt(&[2.0, 0.1])).unwrap());
        assert!(k.contains(&pt(&[1.0, 0.5])).unwrap());
        assert!(matches!(
            k.contains(&pt(&[0.0])),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn ball_volumes() {
        let pi = std::f64::consts::PI;
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - pi).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * pi).abs() < 1e-14);
        assert!((unit_ball_volume(4) - pi * pi / 2.0).abs() < 1e-14);
        let axes = SemiAxes::new(vec![2.0, 3.0]).unwrap();
        assert!((axes.ellipsoid_volume() - 6.0 * pi).abs() < 1e-13);
    }

    #[test]
    fn bounding_box_contains_kernel() {
        let k = CoverageKernel::new(pt(&[1e6, -3.0]), SemiAxes::new(vec![0.1, 0.2]).unwrap()).unwrap();
        let (lo, hi) = k.bounding_box();
        assert!(lo[0] <= 1e6 - 0.1 && hi[0] >= 1e6 + 0.1);
        assert!(lo[1] <= -3.2 && hi[1] >= -2.8);
    }
}
