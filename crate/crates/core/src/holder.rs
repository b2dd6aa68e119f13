//! Empirical Hölder moduli in the intrinsic parabolic metric.
//!
//! Pairs of space-time samples are drawn from seeded ChaCha streams, one
//! stream per chunk of pairs, so the sample set is independent of the thread
//! count. The exponent is the slope of a least-squares line through the
//! per-bin maxima of `log|Δu|` against `log d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cube_cells, Cube, Domain, FieldSeries, MAX_DIM};

const CHUNK: usize = 1024;

/// Weight `M^{(m−1)/2}` of `|Δt|^{1/2}`; `(1, true)` when `M = 0`.
pub fn time_weight(sup_norm: f64, m: f64) -> (f64, bool) {
    if sup_norm > 0.0 {
        (sup_norm.powf(0.5 * (m - 1.0)), false)
    } else {
        (1.0, true)
    }
}

/// `|x₁ − x₂| + M^{(m−1)/2} |t₁ − t₂|^{1/2}` with the periodic-minimal
/// spatial distance.
pub fn intrinsic_distance(domain: &Domain, p1: (&[f64], f64), p2: (&[f64], f64), sup_norm: f64, m: f64) -> f64 {
    let (w, _) = time_weight(sup_norm, m);
    domain.distance(p1.0, p2.0) + w * (p1.1 - p2.1).abs().sqrt()
}

/// Space-time box `K × [t_start, t_end]` the pairs are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderRegion {
    pub cube: Cube,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub pairs: usize,
    pub bins: usize,
}

impl SamplerConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            pairs: 50_000,
            bins: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Fitted exponent capped at 1; `None` for an exactly constant sample.
    pub holder_exponent: Option<f64>,
    pub raw_slope: Option<f64>,
    pub prefactor: Option<f64>,
    pub sup_norm: f64,
    pub time_weight: f64,
    /// `M = 0`: the time weight was set to 1.
    pub zero_sup: bool,
    pub exact_constant: bool,
    pub distance_cutoff: f64,
    pub residual_rms: f64,
    pub residual_max: f64,
    pub pairs_sampled: usize,
    pub pairs_used: usize,
    pub bins_used: usize,
    pub seed: u64,
}

struct Sample {
    d: f64,
    du: f64,
}

/// Upper-envelope fit of `|u(x₁,t₁) − u(x₂,t₂)| ≤ γ d^α` over a region.
pub fn holder_fit(series: &FieldSeries, region: &HolderRegion, m: f64, config: &SamplerConfig) -> Result<HolderFit> {
    if !(region.t_start > 0.0 && region.t_start <= region.t_end) {
        return Err(Error::Precondition(format!(
            "region times must satisfy 0 < t_start <= t_end (got {}, {})",
            region.t_start, region.t_end
        )));
    }
    if config.bins < 5 {
        return Err(Error::Parameter(format!("bins >= 5 violated (bins = {})", config.bins)));
    }
    let domain = series.domain().ok_or(Error::EmptyWindow {
        start: region.t_start,
        end: region.t_end,
    })?;
    if region.cube.radius >= domain.extent() {
        return Err(Error::Precondition(
            "region cube must lie strictly inside the box".into(),
        ));
    }
    let tol = 1e-12 * (1.0 + region.t_end.abs());
    let block = cube_cells(&domain, &region.cube)?;
    let snaps: Vec<(f64, Vec<f64>)> = series
        .snapshots()
        .iter()
        .filter(|s| s.time >= region.t_start - tol && s.time <= region.t_end + tol)
        .map(|s| (s.time, block.gather(&s.values)))
        .collect();
    if snaps.is_empty() {
        return Err(Error::EmptyWindow {
            start: region.t_start,
            end: region.t_end,
        });
    }
    let sup_norm = snaps
        .iter()
        .flat_map(|(_, v)| v.iter())
        .fold(0.0f64, |a, &u| a.max(u.abs()));
    let (weight, zero_sup) = time_weight(sup_norm, m);
    let spacing = snaps
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .reduce(f64::min)
        .unwrap_or(0.0);
    let cutoff = (3.0 * block.spacing()).max(spacing.sqrt() * weight);

    let dim = block.dim();
    let shape = block.shape().to_vec();
    let max_extent = *shape.iter().max().unwrap_or(&1) as f64;
    let n_cells = block.len();
    let chunks = config.pairs.div_ceil(CHUNK);
    let samples: Vec<Vec<Sample>> = crate::exec::map_range(chunks, 2, |chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(chunk as u64);
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(config.pairs);
        (lo..hi)
            .map(|i| {
                let a = i % n_cells;
                let sa = rng.random_range(0..snaps.len());
                let sb = if rng.random_bool(0.5) {
                    sa
                } else {
                    rng.random_range(0..snaps.len())
                };
                let b = partner(&mut rng, &block, &shape, a, max_extent, dim);
                let (xa, xb) = (block.offset(a), block.offset(b));
                let dx = (0..dim).map(|k| (xa[k] - xb[k]).powi(2)).sum::<f64>().sqrt();
                let d = dx + weight * (snaps[sa].0 - snaps[sb].0).abs().sqrt();
                Sample {
                    d,
                    du: (snaps[sa].1[a] - snaps[sb].1[b]).abs(),
                }
            })
            .collect()
    });
    let samples: Vec<Sample> = samples.into_iter().flatten().collect();

    let mut fit = HolderFit {
        holder_exponent: None,
        raw_slope: None,
        prefactor: None,
        sup_norm,
        time_weight: weight,
        zero_sup,
        exact_constant: false,
        distance_cutoff: cutoff,
        residual_rms: 0.0,
        residual_max: 0.0,
        pairs_sampled: samples.len(),
        pairs_used: 0,
        bins_used: 0,
        seed: config.seed,
    };
    if samples.iter().all(|s| s.du == 0.0) {
        fit.exact_constant = true;
        return Ok(fit);
    }

    let d_max = region.cube.radius;
    if !(d_max > cutoff) {
        return Err(Error::Precondition(format!(
            "region radius {d_max} does not exceed the resolution cutoff {cutoff}"
        )));
    }
    let usable: Vec<&Sample> = samples.iter().filter(|s| s.d >= cutoff && s.d <= d_max).collect();
    let (lmin, lmax) = (cutoff.ln(), d_max.ln());
    let width = (lmax - lmin) / config.bins as f64;
    // (count, best |Δu|, its d)
    let mut bins = vec![(0usize, 0.0f64, 0.0f64); config.bins];
    for s in &usable {
        let j = if width > 0.0 {
            (((s.d.ln() - lmin) / width) as usize).min(config.bins - 1)
        } else {
            0
        };
        let bin = &mut bins[j];
        bin.0 += 1;
        if s.du > bin.1 {
            bin.1 = s.du;
            bin.2 = s.d;
        }
    }
    let points: Vec<(f64, f64)> = bins
        .iter()
        .filter(|b| b.1 > 0.0)
        .map(|b| (b.2.ln(), b.1.ln()))
        .collect();
    fit.pairs_used = bins.iter().filter(|b| b.1 > 0.0).map(|b| b.0).sum();
    fit.bins_used = points.len();
    if points.len() < 5 {
        return Err(Error::Precondition(format!(
            "only {} usable distance bins (at least 5 needed)",
            points.len()
        )));
    }
    if fit.pairs_used < 200 {
        return Err(Error::Precondition(format!(
            "only {} usable pairs (at least 200 needed)",
            fit.pairs_used
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = points.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    fit.residual_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    fit.residual_max = residuals.iter().fold(0.0, |a, r| a.max(r.abs()));
    fit.raw_slope = Some(slope);
    fit.holder_exponent = Some(slope.min(1.0));
    fit.prefactor = Some(intercept.exp());
    Ok(fit)
}

/// A second cell at a log-uniform offset from `a`, falling back to a uniform
/// draw when the offset leaves the block.
fn partner(
    rng: &mut ChaCha8Rng,
    block: &crate::grid::CellBlock,
    shape: &[usize],
    a: usize,
    max_extent: f64,
    dim: usize,
) -> usize {
    let ia = block.local_multi_index(a);
    for _ in 0..8 {
        let len = max_extent.powf(rng.random::<f64>());
        let mut dir = [0.0; MAX_DIM];
        let mut norm = 0.0;
        for d in dir.iter_mut().take(dim) {
            *d = rng.random::<f64>() * 2.0 - 1.0;
            norm += *d * *d;
        }
        let norm = norm.sqrt().max(1e-12);
        let mut idx = 0usize;
        let mut ok = true;
        for k in 0..dim {
            let j = ia[k] as f64 + (len * dir[k] / norm).round();
            if j < 0.0 || j >= shape[k] as f64 {
                ok = false;
                break;
            }
            idx = idx * shape[k] + j as usize;
        }
        if ok {
            return idx;
        }
    }
    rng.random_range(0..block.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_domain;
    use approx::assert_relative_eq;

    fn region(r: f64) -> HolderRegion {
        HolderRegion {
            cube: Cube::new([0.0], r),
            t_start: 1.0,
            t_end: 1.0,
        }
    }

    #[test]
    fn distance_examples() {
        let d = make_domain(2, 1.0, 16).unwrap();
        let p = ([0.1, 0.2].as_slice(), 0.3);
        assert_eq!(intrinsic_distance(&d, p, p, 2.0, 0.5), 0.0);
        let q = ([0.4, -0.2].as_slice(), 0.55);
        for m in [0.2, 0.7] {
            assert_relative_eq!(intrinsic_distance(&d, p, q, 1.0, m), 0.5 + 0.5, max_relative = 1e-14);
        }
        assert_relative_eq!(intrinsic_distance(&d, p, q, 7.0, 1.0), 1.0, max_relative = 1e-14);
        assert!(time_weight(0.0, 0.5).1);
        // periodic-minimal: 0.9 and -0.9 are 0.2 apart
        let a = ([0.9, 0.0].as_slice(), 0.0);
        let b = ([-0.9, 0.0].as_slice(), 0.0);
        assert_relative_eq!(intrinsic_distance(&d, a, b, 1.0, 0.5), 0.2, max_relative = 1e-12);
    }

    #[test]
    fn constant_field_is_flagged() {
        let d = make_domain(1, 1.0, 128).unwrap();
        let s = FieldSeries::from_fn(d, &[1.0], |_, _| 0.7).unwrap();
        let f = holder_fit(&s, &region(0.9), 0.5, &SamplerConfig::new(1)).unwrap();
        assert!(f.exact_constant && f.holder_exponent.is_none());
    }

    #[test]
    fn linear_field_is_lipschitz() {
        let d = make_domain(1, 1.0, 256).unwrap();
        let s = FieldSeries::from_fn(d, &[1.0], |x, _| x[0]).unwrap();
        let f = holder_fit(&s, &region(0.9), 0.5, &SamplerConfig::new(3)).unwrap();
        assert!(f.holder_exponent.unwrap() >= 0.95);
    }

    #[test]
    fn rejects_initial_time_and_few_pairs() {
        let d = make_domain(1, 1.0, 256).unwrap();
        let s = FieldSeries::from_fn(d, &[0.0, 1.0], |x, _| x[0]).unwrap();
        let bad = HolderRegion {
            cube: Cube::new([0.0], 0.9),
            t_start: 0.0,
            t_end: 1.0,
        };
        assert!(holder_fit(&s, &bad, 0.5, &SamplerConfig::new(3)).is_err());
        let few = SamplerConfig {
            pairs: 100,
            ..SamplerConfig::new(3)
        };
        assert!(holder_fit(&s, &region(0.9), 0.5, &few).is_err());
    }

    // Singular point on a cell center, where the grid envelope is exact.
    #[test]
    fn square_root_field() {
        let d = make_domain(1, 1.0, 256).unwrap();
        let h = d.spacing();
        let s = FieldSeries::from_fn(d, &[1.0], |x, _| (x[0] - 0.5 * h).abs().sqrt()).unwrap();
        for seed in 0..4 {
            let f = holder_fit(&s, &region(0.9), 0.5, &SamplerConfig::new(seed)).unwrap();
            let g = holder_fit(
                &s,
                &region(0.9),
                0.5,
                &SamplerConfig {
                    pairs: 100_000,
                    ..SamplerConfig::new(seed)
                },
            )
            .unwrap();
            assert!((f.raw_slope.unwrap() - 0.5).abs() < 1e-9);
            assert!((g.raw_slope.unwrap() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_covariance() {
        let d = make_domain(1, 1.0, 256).unwrap();
        let h = d.spacing();
        let s = FieldSeries::from_fn(d, &[1.0], |x, _| (x[0] - 0.5 * h).abs().sqrt()).unwrap();
        let s3 = FieldSeries::from_fn(d, &[1.0], |x, _| 3.0 * (x[0] - 0.5 * h).abs().sqrt()).unwrap();
        let cfg = SamplerConfig::new(11);
        let a = holder_fit(&s, &region(0.9), 0.5, &cfg).unwrap();
        let b = holder_fit(&s3, &region(0.9), 0.5, &cfg).unwrap();
        assert_relative_eq!(a.raw_slope.unwrap(), b.raw_slope.unwrap(), max_relative = 1e-10);
        assert_relative_eq!(3.0 * a.prefactor.unwrap(), b.prefactor.unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn sampling_is_thread_independent() {
        let d = make_domain(1, 1.0, 256).unwrap();
        let s = FieldSeries::from_fn(d, &[1.0, 1.5, 2.0], |x, t| (x[0] * t).sin()).unwrap();
        let r = HolderRegion {
            cube: Cube::new([0.0], 0.9),
            t_start: 1.0,
            t_end: 2.0,
        };
        let cfg = SamplerConfig::new(5);
        let par = holder_fit(&s, &r, 0.5, &cfg).unwrap();
        let seq = crate::exec::sequential(|| holder_fit(&s, &r, 0.5, &cfg).unwrap());
        assert_eq!(par, seq);
    }
}
