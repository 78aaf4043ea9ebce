use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{CellBuckets, UniformGrid};
use super::reference::KernelIndex;
use super::{CoverageKernel, ParameterPoint, ParameterSpace, SemiAxes};
use crate::error::{Error, Result};

/// Average number of samples per bucket of the cloud's grid.
const SAMPLES_PER_CELL: usize = 4;

/// Hit-or-miss estimate of a covered volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    /// `vol(space) * sqrt(p (1 - p) / N)`.
    pub std_error: f64,
    pub covered: usize,
    pub samples: usize,
}

impl VolumeEstimate {
    fn from_counts(space_volume: f64, covered: usize, samples: usize) -> Self {
        let p = covered as f64 / samples as f64;
        VolumeEstimate {
            volume: space_volume * p,
            std_error: space_volume * (p * (1.0 - p) / samples as f64).sqrt(),
            covered,
            samples,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.samples as f64
    }
}

/// Seeded uniform samples over a parameter space, with per-sample covered
/// flags.
///
/// The samples are a pure function of `(space, seed, N)`: ChaCha8 seeded with
/// `seed`, coordinates drawn row by row as `lower + u * (upper - lower)`.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    space: ParameterSpace,
    seed: u64,
    coords: Vec<f64>,
    covered: Vec<bool>,
    covered_count: usize,
    grid: UniformGrid,
    buckets: CellBuckets,
}

impl SampleCloud {
    pub fn new(space: ParameterSpace, seed: u64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::contract("sample cloud needs at least one sample"));
        }
        if samples > u32::MAX as usize {
            return Err(Error::contract("sample cloud is limited to 2^32 - 1 samples"));
        }
        let m = space.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coords = Vec::with_capacity(samples * m);
        for _ in 0..samples {
            for j in 0..m {
                let (lo, hi) = (space.lower()[j], space.upper()[j]);
                let u: f64 = rng.random();
                coords.push(lo + u * (hi - lo));
            }
        }
        let grid = UniformGrid::balanced(&space, samples / SAMPLES_PER_CELL);
        let pairs: Vec<(usize, u32)> = coords
            .chunks_exact(m)
            .enumerate()
            .map(|(i, x)| (grid.cell_of(x), i as u32))
            .collect();
        let buckets = CellBuckets::from_pairs(grid.len(), &pairs);
        Ok(SampleCloud {
            space,
            seed,
            coords,
            covered: vec![false; samples],
            covered_count: 0,
            grid,
            buckets,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covered.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let m = self.space.dims();
        &self.coords[i * m..(i + 1) * m]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.space.dims())
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    /// Flags every still-uncovered sample inside `kernel`; returns how many
    /// flags flipped. Flags are never cleared except by [`Self::reset`].
    pub fn add_kernel(&mut self, kernel: &CoverageKernel) -> Result<usize> {
        self.space.check_dims(kernel.dims())?;
        let mut flags = std::mem::take(&mut self.covered);
        let flipped = self.mark(kernel, &mut flags);
        self.covered = flags;
        self.covered_count += flipped;
        Ok(flipped)
    }

    pub fn reset(&mut self) {
        self.covered.iter_mut().for_each(|f| *f = false);
        self.covered_count = 0;
    }

    /// Volume currently flagged as covered.
    pub fn covered_volume(&self) -> VolumeEstimate {
        self.estimate(self.covered_count)
    }

    pub(crate) fn estimate(&self, covered: usize) -> VolumeEstimate {
        VolumeEstimate::from_counts(self.space.volume(), covered, self.len())
    }

    /// Count of samples matching `pred`, split across the rayon pool. The
    /// reduction is an integer sum so the worker count cannot change it.
    pub(crate) fn par_count(&self, pred: impl Fn(&[f64]) -> bool + Sync) -> usize {
        let m = self.space.dims();
        self.coords
            .par_chunks_exact(m)
            .with_min_len(4096)
            .filter(|x| pred(x))
            .count()
    }

    fn mark(&self, kernel: &CoverageKernel, flags: &mut [bool]) -> usize {
        let (lo, hi) = kernel.bounding_box();
        let mut flipped = 0;
        self.grid.for_each_cell_in_box(&lo, &hi, |cell| {
            for &i in self.buckets.cell(cell) {
                let i = i as usize;
                if !flags[i] && kernel.contains_coords(self.point(i)) {
                    flags[i] = true;
                    flipped += 1;
                }
            }
        });
        flipped
    }
}

/// Covered volume of the union of `kernels`, estimated on `cloud`.
///
/// The cloud's own flags are ignored; the count is recomputed from scratch
/// with a kernel grid index. An empty kernel list yields exactly zero.
pub fn union_volume(kernels: &[CoverageKernel], cloud: &SampleCloud) -> Result<VolumeEstimate> {
    for k in kernels {
        cloud.space.check_dims(k.dims())?;
    }
    if kernels.is_empty() {
        return Ok(cloud.estimate(0));
    }
    let index = KernelIndex::new(kernels.to_vec(), cloud.space());
    let covered = cloud.par_count(|x| index.any_contains(x));
    Ok(cloud.estimate(covered))
}

/// Cumulative union volume after each point of `points`, in order.
///
/// Entry `i` is `(i + 1, volume of the first i + 1 kernels)`. The cloud is
/// not modified; a scratch copy of the flags is used.
pub fn coverage_curve(
    points: &[ParameterPoint],
    semi_axes: &SemiAxes,
    cloud: &SampleCloud,
) -> Result<Vec<(usize, f64)>> {
    coverage_curve_from(&[], points, semi_axes, cloud).map(|(_, curve)| curve)
}

/// Like [`coverage_curve`], but starting from the coverage of `base`.
///
/// Returns the initial covered volume (the base's union volume) and the
/// curve over `points`; counts in the curve exclude the base points.
pub fn coverage_curve_from(
    base: &[ParameterPoint],
    points: &[ParameterPoint],
    semi_axes: &SemiAxes,
    cloud: &SampleCloud,
) -> Result<(f64, Vec<(usize, f64)>)> {
    cloud.space.check_dims(semi_axes.dims())?;
    for p in base.iter().chain(points) {
        cloud.space.check_dims(p.dims())?;
    }
    let mut flags = vec![false; cloud.len()];
    let mut covered = 0usize;
    for p in base {
        let kernel = CoverageKernel::new(p.clone(), semi_axes.clone())?;
        covered += cloud.mark(&kernel, &mut flags);
    }
    let initial = cloud.estimate(covered).volume;
    let mut curve = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let kernel = CoverageKernel::new(p.clone(), semi_axes.clone())?;
        covered += cloud.mark(&kernel, &mut flags);
        curve.push((i + 1, cloud.estimate(covered).volume));
    }
    Ok((initial, curve))
}
