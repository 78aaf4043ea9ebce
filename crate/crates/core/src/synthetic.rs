//! Seeded scenario sources with known ground truth.
//!
//! Every source draws from ChaCha8 seeded with its `seed`, consuming the
//! stream in a fixed order, so a `(kind, params, seed)` triple always yields
//! the same samples. Repeated [`SyntheticSource::draw`] calls continue the
//! stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ParameterPoint, ParameterSpace, SemiAxes};

/// One Gaussian component with a diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone)]
enum SourceKind {
    UniformBox {
        space: ParameterSpace,
    },
    GaussianMixture {
        components: Vec<MixtureComponent>,
        cumulative: Vec<f64>,
    },
    Degradable {
        seed_data: Vec<ParameterPoint>,
        semi_axes: SemiAxes,
        space: ParameterSpace,
        leak_rate: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SyntheticSource {
    kind: SourceKind,
    seed: u64,
    rng: ChaCha8Rng,
}

impl SyntheticSource {
    /// Uniform samples over the box; all samples lie inside it.
    pub fn uniform_box(space: ParameterSpace, seed: u64) -> Self {
        Self::with_kind(SourceKind::UniformBox { space }, seed)
    }

    /// Mixture of axis-aligned Gaussians. Weights are normalized; samples are
    /// not clipped to any space.
    pub fn gaussian_mixture(components: Vec<MixtureComponent>, seed: u64) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::contract("mixture needs at least one component"));
        };
        let m = first.mean.len();
        if m == 0 {
            return Err(Error::contract("mixture components need at least one dimension"));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != m || c.std.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: if c.mean.len() != m { c.mean.len() } else { c.std.len() },
                });
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::contract(format!("component {i}: weight must be non-negative")));
            }
            if c.mean.iter().any(|v| !v.is_finite()) || c.std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::contract(format!(
                    "component {i}: means must be finite and standard deviations non-negative"
                )));
            }
            total += c.weight;
        }
        if !(total > 0.0) {
            return Err(Error::contract("mixture weights sum to zero"));
        }
        let mut acc = 0.0;
        let cumulative = components
            .iter()
            .map(|c| {
                acc += c.weight / total;
                acc
            })
            .collect();
        Ok(Self::with_kind(
            SourceKind::GaussianMixture { components, cumulative },
            seed,
        ))
    }

    fn with_kind(kind: SourceKind, seed: u64) -> Self {
        SyntheticSource {
            kind,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> usize {
        match &self.kind {
            SourceKind::UniformBox { space } => space.dims(),
            SourceKind::GaussianMixture { components, .. } => components[0].mean.len(),
            SourceKind::Degradable { space, .. } => space.dims(),
        }
    }

    /// Effective probability of a uniform (possibly invalid) draw, for
    /// degradable sources.
    pub fn leak_rate(&self) -> Option<f64> {
        match &self.kind {
            SourceKind::Degradable { leak_rate, .. } => Some(*leak_rate),
            _ => None,
        }
    }

    /// The next `count` samples of the stream.
    pub fn draw(&mut self, count: usize) -> Vec<ParameterPoint> {
        (0..count)
            .map(|_| ParameterPoint::new(self.next_coords()).expect("finite sample"))
            .collect()
    }

    fn next_coords(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        match &self.kind {
            SourceKind::UniformBox { space } => uniform_in(rng, space),
            SourceKind::GaussianMixture { components, cumulative } => {
                let u: f64 = rng.random();
                let idx = cumulative.iter().position(|&c| u < c).unwrap_or(components.len() - 1);
                let comp = &components[idx];
                comp.mean
                    .iter()
                    .zip(&comp.std)
                    .map(|(mu, sd)| {
                        let z: f64 = rng.sample(StandardNormal);
                        mu + sd * z
                    })
                    .collect()
            }
            SourceKind::Degradable {
                seed_data,
                semi_axes,
                space,
                leak_rate,
            } => {
                let u: f64 = rng.random();
                if u < *leak_rate {
                    uniform_in(rng, space)
                } else {
                    let center = &seed_data[rng.random_range(0..seed_data.len())];
                    let mut x = uniform_in_ellipsoid(rng, center.coords(), semi_axes.values());
                    // Clamping moves each coordinate toward an in-box center,
                    // so the sample stays inside the kernel.
                    for (v, (lo, hi)) in x.iter_mut().zip(space.lower().iter().zip(space.upper())) {
                        *v = v.clamp(*lo, *hi);
                    }
                    x
                }
            }
        }
    }
}

/// Free-function form of [`SyntheticSource::draw`].
pub fn draw(source: &mut SyntheticSource, count: usize) -> Vec<ParameterPoint> {
    source.draw(count)
}

/// Test double for a data-driven generator whose error falls with the size of
/// its seed data.
///
/// With probability `1 - leak_eff` a sample is drawn uniformly inside the
/// coverage kernel of a random seed point (clamped to `space`); otherwise it
/// is drawn uniformly over `space`. `leak_eff = leak / sqrt(|seed_data|)`.
pub fn degradable_generator(
    seed_data: &[ParameterPoint],
    leak: f64,
    semi_axes: &SemiAxes,
    space: &ParameterSpace,
    seed: u64,
) -> Result<SyntheticSource> {
    if seed_data.is_empty() {
        return Err(Error::contract("degradable generator needs seed data"));
    }
    if !(0.0..=1.0).contains(&leak) {
        return Err(Error::contract(format!("leak must lie in [0, 1], got {leak}")));
    }
    space.check_dims(semi_axes.dims())?;
    for p in seed_data {
        space.check_dims(p.dims())?;
    }
    let leak_rate = leak / (seed_data.len() as f64).sqrt();
    Ok(SyntheticSource::with_kind(
        SourceKind::Degradable {
            seed_data: seed_data.to_vec(),
            semi_axes: semi_axes.clone(),
            space: space.clone(),
            leak_rate,
        },
        seed,
    ))
}

fn uniform_in(rng: &mut ChaCha8Rng, space: &ParameterSpace) -> Vec<f64> {
    space
        .lower()
        .iter()
        .zip(space.upper())
        .map(|(lo, hi)| {
            let u: f64 = rng.random();
            lo + u * (hi - lo)
        })
        .collect()
}

/// Uniform in the ellipsoid: Gaussian direction, radius `U^(1/m)`.
fn uniform_in_ellipsoid(rng: &mut ChaCha8Rng, center: &[f64], semi_axes: &[f64]) -> Vec<f64> {
    let m = center.len();
    let dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let radius = u.powf(1.0 / m as f64);
    let scale = if norm > 0.0 { radius / norm } else { 0.0 };
    center
        .iter()
        .zip(semi_axes)
        .zip(dir)
        .map(|((c, p), d)| c + p * d * scale)
        .collect()
}

/// A scenario source fitted on (seeded with) mined scenarios.
pub trait ScenarioGenerator: Sync {
    /// Draws `count` scenarios from a generator seeded with `seed_data`,
    /// using `seed` for its randomness.
    fn generate(&self, seed_data: &[ParameterPoint], count: usize, seed: u64) -> Result<Vec<ParameterPoint>>;
}

/// Replays the seed data verbatim, cycling when more samples are asked for.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayGenerator;

impl ScenarioGenerator for ReplayGenerator {
    fn generate(&self, seed_data: &[ParameterPoint], count: usize, _seed: u64) -> Result<Vec<ParameterPoint>> {
        if seed_data.is_empty() {
            return Err(Error::contract("replay generator needs seed data"));
        }
        Ok(seed_data.iter().cycle().take(count).cloned().collect())
    }
}

/// [`degradable_generator`] as a [`ScenarioGenerator`].
#[derive(Debug, Clone)]
pub struct DegradableGenerator {
    pub leak: f64,
    pub semi_axes: SemiAxes,
    pub space: ParameterSpace,
}

impl ScenarioGenerator for DegradableGenerator {
    fn generate(&self, seed_data: &[ParameterPoint], count: usize, seed: u64) -> Result<Vec<ParameterPoint>> {
        Ok(degradable_generator(seed_data, self.leak, &self.semi_axes, &self.space, seed)?.draw(count))
    }
}

/// Gaussian kernel mixture over the seed data: one equally weighted component
/// per seed point with standard deviation `bandwidth_j * k^(-1/(m+4))`
/// (Silverman-style shrinkage in the seed count `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMixtureGenerator {
    pub bandwidth: Vec<f64>,
}

impl ScenarioGenerator for KernelMixtureGenerator {
    fn generate(&self, seed_data: &[ParameterPoint], count: usize, seed: u64) -> Result<Vec<ParameterPoint>> {
        if seed_data.is_empty() {
            return Err(Error::contract("kernel mixture generator needs seed data"));
        }
        let m = self.bandwidth.len();
        let shrink = (seed_data.len() as f64).powf(-1.0 / (m as f64 + 4.0));
        let std: Vec<f64> = self.bandwidth.iter().map(|h| h * shrink).collect();
        let components = seed_data
            .iter()
            .map(|p| {
                if p.dims() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        found: p.dims(),
                    });
                }
                Ok(MixtureComponent {
                    weight: 1.0,
                    mean: p.coords().to_vec(),
                    std: std.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticSource::gaussian_mixture(components, seed)?.draw(count))
    }
}
