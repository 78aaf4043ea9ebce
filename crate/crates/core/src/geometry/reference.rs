use rayon::prelude::*;

use super::grid::{CellBuckets, UniformGrid};
use super::{kernels_for, CoverageKernel, ParameterPoint, ParameterSpace, SampleCloud, SemiAxes, VolumeEstimate};
use crate::error::{Error, Result};

/// Upper bound on grid cells of a kernel index.
const MAX_INDEX_CELLS: usize = 1 << 22;

/// Kernels bucketed by the grid cells their bounding boxes overlap.
///
/// A location is only tested against the kernels of its own cell. Locations
/// outside the grid's box are clamped into the border cells, so callers that
/// care about the box must clip first.
#[derive(Debug, Clone)]
pub(crate) struct KernelIndex {
    kernels: Vec<CoverageKernel>,
    grid: UniformGrid,
    buckets: CellBuckets,
}

impl KernelIndex {
    pub(crate) fn new(kernels: Vec<CoverageKernel>, space: &ParameterSpace) -> Self {
        let m = space.dims();
        let mut half = vec![0.0f64; m];
        for k in &kernels {
            for (h, p) in half.iter_mut().zip(k.semi_axes().values()) {
                *h = h.max(*p);
            }
        }
        let cap = (kernels.len().saturating_mul(4)).clamp(64, MAX_INDEX_CELLS);
        let grid = UniformGrid::for_extent(space, &half, cap);
        let mut pairs = Vec::new();
        for (i, k) in kernels.iter().enumerate() {
            let (lo, hi) = k.bounding_box();
            grid.for_each_cell_in_box(&lo, &hi, |cell| pairs.push((cell, i as u32)));
        }
        let buckets = CellBuckets::from_pairs(grid.len(), &pairs);
        KernelIndex { kernels, grid, buckets }
    }

    #[inline]
    pub(crate) fn any_contains(&self, x: &[f64]) -> bool {
        self.buckets
            .cell(self.grid.cell_of(x))
            .iter()
            .any(|&i| self.kernels[i as usize].contains_coords(x))
    }

    pub(crate) fn kernels(&self) -> &[CoverageKernel] {
        &self.kernels
    }
}

/// Dilated union of trusted kernels, clipped to the parameter space.
///
/// Serves as the approximation of the complete valid region: a generated
/// scenario counts as valid when it falls inside.
#[derive(Debug, Clone)]
pub struct ReferenceVolume {
    space: ParameterSpace,
    dilation: f64,
    index: KernelIndex,
}

/// Builds the reference volume from a valid scenario set by scaling every
/// semi-axis by `dilation` (at least 1).
pub fn build_reference_volume(
    valid_points: &[ParameterPoint],
    semi_axes: &SemiAxes,
    dilation: f64,
    space: &ParameterSpace,
) -> Result<ReferenceVolume> {
    if valid_points.is_empty() {
        return Err(Error::contract("reference volume needs at least one valid point"));
    }
    if !(dilation.is_finite() && dilation >= 1.0) {
        return Err(Error::contract(format!(
            "dilation must be a finite factor >= 1, got {dilation}"
        )));
    }
    if valid_points.len() > u32::MAX as usize {
        return Err(Error::contract("reference volume is limited to 2^32 - 1 kernels"));
    }
    space.check_dims(semi_axes.dims())?;
    for p in valid_points {
        space.check_dims(p.dims())?;
    }
    let scaled = semi_axes.scaled(dilation)?;
    let kernels = kernels_for(valid_points, &scaled)?;
    Ok(ReferenceVolume {
        space: space.clone(),
        dilation,
        index: KernelIndex::new(kernels, space),
    })
}

impl ReferenceVolume {
    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    /// Kernels with their dilated semi-axes.
    pub fn kernels(&self) -> &[CoverageKernel] {
        self.index.kernels()
    }

    /// Grid-indexed membership test.
    pub fn contains(&self, point: &ParameterPoint) -> Result<bool> {
        self.space.check_dims(point.dims())?;
        Ok(self.contains_coords(point.coords()))
    }

    /// Membership by scanning every kernel; the reference for the indexed
    /// path.
    pub fn contains_naive(&self, point: &ParameterPoint) -> Result<bool> {
        self.space.check_dims(point.dims())?;
        let x = point.coords();
        Ok(self.space.contains(x) && self.kernels().iter().any(|k| k.contains_coords(x)))
    }

    #[inline]
    pub(crate) fn contains_coords(&self, x: &[f64]) -> bool {
        self.space.contains(x) && self.index.any_contains(x)
    }

    /// Volume of the reference region, estimated on `cloud`.
    pub fn volume(&self, cloud: &SampleCloud) -> Result<VolumeEstimate> {
        self.space.check_dims(cloud.space().dims())?;
        if cloud.space() != &self.space {
            return Err(Error::contract(
                "cloud and reference volume must share a parameter space",
            ));
        }
        let inside = cloud.par_count(|x| self.contains_coords(x));
        Ok(cloud.estimate(inside))
    }

    /// Number of `points` outside the region, counted in parallel.
    pub(crate) fn outside_count(&self, points: &[ParameterPoint]) -> usize {
        points
            .par_iter()
            .with_min_len(1024)
            .filter(|p| !self.contains_coords(p.coords()))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> ParameterPoint {
        ParameterPoint::new(v.to_vec()).unwrap()
    }

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap()
    }

    #[test]
    fn dilation_below_one_is_rejected() {
        let axes = SemiAxes::new(vec![1.0, 1.0]).unwrap();
        let err = build_reference_volume(&[pt(&[0.0, 0.0])], &axes, 0.9, &space());
        assert!(matches!(err, Err(Error::Contract(_))));
        assert!(build_reference_volume(&[], &axes, 1.5, &space()).is_err());
    }

    #[test]
    fn dilated_membership() {
        let axes = SemiAxes::new(vec![1.0, 1.0]).unwrap();
        let r = build_reference_volume(&[pt(&[0.0, 0.0])], &axes, 2.0, &space()).unwrap();
        // (1.5 / 2)^2 = 0.5625
        assert!(r.contains(&pt(&[1.5, 0.0])).unwrap());
        assert!(r.contains(&pt(&[0.0, 0.0])).unwrap());
        assert!(!r.contains(&pt(&[2.1, 0.0])).unwrap());
        let raw = build_reference_volume(&[pt(&[0.0, 0.0])], &axes, 1.0, &space()).unwrap();
        assert!(!raw.contains(&pt(&[1.5, 0.0])).unwrap());
    }

    #[test]
    fn clip_rule_excludes_points_outside_space() {
        let axes = SemiAxes::new(vec![3.0, 3.0]).unwrap();
        let r = build_reference_volume(&[pt(&[4.5, 0.0])], &axes, 1.0, &space()).unwrap();
        assert!(r.contains(&pt(&[5.0, 0.0])).unwrap());
        assert!(!r.contains(&pt(&[5.5, 0.0])).unwrap());
        assert!(!r.contains_naive(&pt(&[5.5, 0.0])).unwrap());
    }

    #[test]
    fn center_outside_space_is_accepted() {
        let axes = SemiAxes::new(vec![1.0, 1.0]).unwrap();
        let r = build_reference_volume(&[pt(&[5.5, 0.0])], &axes, 1.0, &space()).unwrap();
        assert!(r.contains(&pt(&[4.8, 0.0])).unwrap());
        assert!(!r.contains(&pt(&[4.0, 0.0])).unwrap());
    }

    #[test]
    fn query_dimension_mismatch() {
        let axes = SemiAxes::new(vec![1.0, 1.0]).unwrap();
        let r = build_reference_volume(&[pt(&[0.0, 0.0])], &axes, 1.0, &space()).unwrap();
        assert!(matches!(r.contains(&pt(&[0.0])), Err(Error::DimensionMismatch { .. })));
    }
}
