//! Periodic uniform grids, gridded fields and the cube / cylinder geometry
//! every diagnostic slices over.
//!
//! Cells are indexed row-major with axis 0 slowest. Cell `i` along an axis
//! has center `-L + (i + 1/2) h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
}

/// The periodic box `[-L, L)^N` split into `cells_per_dim^N` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    dim: usize,
    extent: f64,
    cells_per_dim: usize,
    spacing: f64,
}

impl Domain {
    pub fn new(dim: usize, extent: f64, cells_per_dim: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Domain(format!("dimension {dim} not in 1..=3")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Domain(format!("extent {extent} must be positive")));
        }
        if cells_per_dim < 8 {
            return Err(Error::Domain(format!(
                "cells_per_dim {cells_per_dim} must be at least 8"
            )));
        }
        if !cells_per_dim.is_multiple_of(2) {
            return Err(Error::Domain(format!("cells_per_dim {cells_per_dim} must be even")));
        }
        Ok(Self {
            dim,
            extent,
            cells_per_dim,
            spacing: 2.0 * extent / cells_per_dim as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        Boundary::Periodic
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_dim.pow(self.dim as u32)
    }

    /// `h^N`, the weight of one cell in every quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Lebesgue measure of the whole box, `(2L)^N`.
    pub fn box_measure(&self) -> f64 {
        (2.0 * self.extent).powi(self.dim as i32)
    }

    /// Flat-index distance between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells_per_dim.pow((self.dim - 1 - axis) as u32)
    }

    pub fn axis_center(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.spacing
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.cells_per_dim;
            rest /= self.cells_per_dim;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .fold(0, |acc, &i| acc * self.cells_per_dim + i)
    }

    /// Cell center; unused trailing coordinates are zero.
    pub fn cell_center(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.axis_center(idx[axis]);
        }
        x
    }

    /// Periodic neighbour of `flat` one cell up (`forward`) or down along `axis`.
    #[inline]
    pub fn neighbor(&self, flat: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let n = self.cells_per_dim;
        let i = (flat / stride) % n;
        if forward {
            if i + 1 == n {
                flat + stride - n * stride
            } else {
                flat + stride
            }
        } else if i == 0 {
            flat + (n - 1) * stride
        } else {
            flat - stride
        }
    }

    /// Minimal-image displacement, wrapped into `[-L, L)`.
    pub fn wrap(&self, d: f64) -> f64 {
        let period = 2.0 * self.extent;
        (d + self.extent).rem_euclid(period) - self.extent
    }

    /// Periodic-minimal Euclidean distance between two points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.dim)
            .map(|axis| self.wrap(a[axis] - b[axis]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn make_domain(dim: usize, extent: f64, cells_per_dim: usize) -> Result<Domain> {
    Domain::new(dim, extent, cells_per_dim)
}

/// One gridded scalar (`u` or `v`) at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub domain: Domain,
    pub values: Vec<f64>,
    pub time: f64,
}

impl ScalarField {
    pub fn new(domain: Domain, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != domain.cell_count() {
            return Err(Error::Domain(format!(
                "field has {} values, domain has {} cells",
                values.len(),
                domain.cell_count()
            )));
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell });
        }
        if !time.is_finite() {
            return Err(Error::Precondition(format!("field time {time} is not finite")));
        }
        Ok(Self { domain, values, time })
    }

    pub fn constant(domain: Domain, value: f64, time: f64) -> Self {
        Self {
            domain,
            values: vec![value; domain.cell_count()],
            time,
        }
    }

    /// Sample `f` at cell centers.
    pub fn from_fn<F>(domain: Domain, time: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; domain.cell_count()];
        crate::exec::fill(&mut values, |i| f(&domain.cell_center(i)[..domain.dim()]));
        Self { domain, values, time }
    }

    /// `∫ w dx` by the cell-sum rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Reject any negative entry (density fields).
    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(cell) => Err(Error::NegativeDensity {
                cell,
                value: self.values[cell],
            }),
            None => Ok(()),
        }
    }
}

/// Time-ordered snapshots sharing one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    snapshots: Vec<ScalarField>,
    pub dt_history: Vec<f64>,
}

impl FieldSeries {
    pub fn new(snapshots: Vec<ScalarField>) -> Result<Self> {
        let mut series = Self {
            snapshots: Vec::with_capacity(snapshots.len()),
            dt_history: Vec::new(),
        };
        for snap in snapshots {
            series.push(snap)?;
        }
        Ok(series)
    }

    /// Sample `f(x, t)` at cell centers for each listed time.
    pub fn from_fn<F>(domain: Domain, times: &[f64], f: F) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> f64 + Sync + Send,
    {
        let snaps = times
            .iter()
            .map(|&t| ScalarField::from_fn(domain, t, |x| f(x, t)))
            .collect();
        Self::new(snaps)
    }

    pub fn push(&mut self, snap: ScalarField) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snap.domain != last.domain {
                return Err(Error::Domain("snapshot domain differs from series".into()));
            }
            if snap.time <= last.time {
                return Err(Error::Precondition(format!(
                    "snapshot times must increase strictly ({} after {})",
                    snap.time, last.time
                )));
            }
        }
        self.snapshots.push(snap);
        Ok(())
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn domain(&self) -> Option<Domain> {
        self.snapshots.first().map(|s| s.domain)
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.snapshots.first().map(|s| s.time)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.snapshots.last().map(|s| s.time)
    }

    /// Smallest gap between consecutive snapshots.
    pub fn min_spacing(&self) -> Option<f64> {
        self.snapshots
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .reduce(f64::min)
    }
}

/// Axis-aligned cube `center + [-R, R)^N`, wrapped periodically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Cube {
    pub fn new(center: impl Into<Vec<f64>>, radius: f64) -> Self {
        Self {
            center: center.into(),
            radius,
        }
    }

    /// Same center, different radius.
    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            center: self.center.clone(),
            radius,
        }
    }

    /// Continuum measure `(2R)^N`.
    pub fn nominal_measure(&self, dim: usize) -> f64 {
        (2.0 * self.radius).powi(dim as i32)
    }
}

/// Space-time cylinder `K_R(x0) × (t0 - θR², t0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicCylinder {
    pub cube: Cube,
    pub t_end: f64,
    pub theta: f64,
}

impl IntrinsicCylinder {
    pub fn new(cube: Cube, t_end: f64, theta: f64) -> Self {
        Self { cube, t_end, theta }
    }

    /// Intrinsic scaling `θ = ω^{1-m}`.
    pub fn from_oscillation(cube: Cube, t_end: f64, omega: f64, m: f64) -> Self {
        Self::new(cube, t_end, omega.powf(1.0 - m))
    }

    pub fn duration(&self) -> f64 {
        self.theta * self.cube.radius * self.cube.radius
    }

    pub fn t_start(&self) -> f64 {
        self.t_end - self.duration()
    }

    /// Same apex and scaling, different radius.
    pub fn with_radius(&self, radius: f64) -> Self {
        Self::new(self.cube.with_radius(radius), self.t_end, self.theta)
    }

    /// Coordinate test for `self ⊂ other`.
    pub fn is_inside(&self, other: &IntrinsicCylinder) -> bool {
        let tol = 1e-12 * (1.0 + other.t_end.abs());
        let same_center = self
            .cube
            .center
            .iter()
            .zip(&other.cube.center)
            .all(|(a, b)| (a - b).abs() <= 1e-12);
        same_center
            && self.cube.radius <= other.cube.radius * (1.0 + 1e-12)
            && self.t_end <= other.t_end + tol
            && self.t_start() >= other.t_start() - tol
    }
}

/// The cells of one cube, arranged as a local box.
///
/// Local cells are ordered row-major over per-axis index lists sorted by
/// displacement from the center, so local neighbours are grid neighbours
/// even when the cube wraps around the periodic boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBlock {
    dim: usize,
    spacing: f64,
    shape: [usize; MAX_DIM],
    axes: Vec<Vec<usize>>,
    offsets: Vec<Vec<f64>>,
    cells: Vec<usize>,
}

impl CellBlock {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Flat global indices, in local order.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Counting measure `count · h^N`.
    pub fn measure(&self) -> f64 {
        self.len() as f64 * self.cell_volume()
    }

    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| values[c]).collect()
    }

    /// Local stride along `axis`.
    pub fn local_stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..self.dim].iter().product()
    }

    pub fn local_multi_index(&self, local: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = local;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.shape[axis];
            rest /= self.shape[axis];
        }
        idx
    }

    /// Displacement of a local cell's center from the cube center.
    pub fn offset(&self, local: usize) -> [f64; MAX_DIM] {
        let idx = self.local_multi_index(local);
        let mut d = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            d[axis] = self.offsets[axis][idx[axis]];
        }
        d
    }

    /// Interior faces of the block: `(low, high, axis)` local index pairs.
    pub fn faces(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.dim).flat_map(move |axis| {
            let stride = self.local_stride(axis);
            let extent = self.shape[axis];
            (0..self.len()).filter_map(move |j| {
                let i = (j / stride) % extent;
                (i + 1 < extent).then_some((j, j + stride, axis))
            })
        })
    }

    /// `Σ_faces |Δw/h|^p · h^N`, the discrete `∫|∇w|^p` over the block.
    pub fn gradient_power_sum(&self, values: &[f64], p: f64) -> f64 {
        let h = self.spacing;
        let sum: f64 = self
            .faces()
            .map(|(lo, hi, _)| ((values[hi] - values[lo]) / h).abs().powf(p))
            .sum();
        sum * self.cell_volume()
    }

    /// Squared face differences weighted per face, `Σ w_f |Δw/h|² h^N`.
    pub fn weighted_gradient_sq<W>(&self, values: &[f64], weight: W) -> f64
    where
        W: Fn(usize, usize) -> f64,
    {
        let h = self.spacing;
        let sum: f64 = self
            .faces()
            .map(|(lo, hi, _)| weight(lo, hi) * ((values[hi] - values[lo]) / h).powi(2))
            .sum();
        sum * self.cell_volume()
    }

    /// Cell-centered gradient magnitude: per axis, the mean of the
    /// available adjacent face differences.
    pub fn cell_gradient_magnitudes(&self, values: &[f64]) -> Vec<f64> {
        let h = self.spacing;
        (0..self.len())
            .map(|j| {
                let idx = self.local_multi_index(j);
                let mut sq = 0.0;
                for axis in 0..self.dim {
                    let stride = self.local_stride(axis);
                    let mut acc = 0.0;
                    let mut count = 0.0;
                    if idx[axis] > 0 {
                        acc += (values[j] - values[j - stride]) / h;
                        count += 1.0;
                    }
                    if idx[axis] + 1 < self.shape[axis] {
                        acc += (values[j + stride] - values[j]) / h;
                        count += 1.0;
                    }
                    if count > 0.0 {
                        sq += (acc / count).powi(2);
                    }
                }
                sq.sqrt()
            })
            .collect()
    }
}

/// Cells whose centers lie in the cube (`-R <= d < R` per axis, periodic).
pub fn cube_cells(domain: &Domain, cube: &Cube) -> Result<CellBlock> {
    let dim = domain.dim();
    if cube.center.len() < dim {
        return Err(Error::Precondition(format!(
            "cube center has {} coordinates, domain is {dim}-dimensional",
            cube.center.len()
        )));
    }
    if !(cube.radius > 0.0 && cube.radius <= domain.extent() * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "cube radius {} must lie in (0, extent = {}]",
            cube.radius,
            domain.extent()
        )));
    }
    let h = domain.spacing();
    let tol = 1e-9 * h;
    let n = domain.cells_per_dim();
    let mut shape = [1; MAX_DIM];
    let mut axes = Vec::with_capacity(dim);
    let mut offsets = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut members: Vec<(f64, usize)> = (0..n)
            .filter_map(|i| {
                let d = domain.wrap(domain.axis_center(i) - cube.center[axis]);
                (d >= -cube.radius - tol && d < cube.radius - tol).then_some((d, i))
            })
            .collect();
        if members.is_empty() {
            return Err(Error::Unresolved {
                radius: cube.radius,
                axis,
            });
        }
        members.sort_by(|a, b| a.0.total_cmp(&b.0));
        shape[axis] = members.len();
        offsets.push(members.iter().map(|m| m.0).collect());
        axes.push(members.into_iter().map(|m| m.1).collect::<Vec<_>>());
    }
    let total: usize = shape[..dim].iter().product();
    let mut cells = Vec::with_capacity(total);
    let mut idx = [0usize; MAX_DIM];
    for local in 0..total {
        let mut rest = local;
        for axis in (0..dim).rev() {
            idx[axis] = axes[axis][rest % shape[axis]];
            rest /= shape[axis];
        }
        cells.push(domain.flat_index(&idx[..dim]));
    }
    Ok(CellBlock {
        dim,
        spacing: h,
        shape,
        axes,
        offsets,
        cells,
    })
}

/// One stored snapshot restricted to a cube, with its trapezoid weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub time: f64,
    pub weight: f64,
    pub snapshot: usize,
    pub values: Vec<f64>,
}

/// The stored slices of a series inside a cylinder.
///
/// Time integrals use the trapezoid rule over the slice times; the gap
/// between the window start and the first slice is charged to that slice and
/// the gap before the window end to the last one, so the weights sum to the
/// window length.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderSlices {
    pub block: CellBlock,
    pub t_start: f64,
    pub t_end: f64,
    pub slices: Vec<Slice>,
}

impl CylinderSlices {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Discrete space-time measure `|K| · duration`.
    pub fn measure(&self) -> f64 {
        self.block.measure() * self.duration()
    }

    /// `∫ f(slice) dt` with the slice weights.
    pub fn time_integral<F>(&self, f: F) -> f64
    where
        F: Fn(&Slice) -> f64,
    {
        self.slices.iter().map(|s| s.weight * f(s)).sum()
    }

    /// Maximum of `f(slice)` over the stored slices (the discrete ess sup).
    pub fn time_max<F>(&self, f: F) -> f64
    where
        F: Fn(&Slice) -> f64,
    {
        self.slices.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.slices
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.slices
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn time_tol(t: f64) -> f64 {
    1e-12 * (1.0 + t.abs())
}

/// Slice a series over a cylinder.
pub fn cylinder_slices(series: &FieldSeries, cylinder: &IntrinsicCylinder) -> Result<CylinderSlices> {
    let (first, last, domain) = match (series.first_time(), series.last_time(), series.domain()) {
        (Some(f), Some(l), Some(d)) => (f, l, d),
        _ => {
            return Err(Error::EmptyWindow {
                start: cylinder.t_start(),
                end: cylinder.t_end,
            })
        }
    };
    let start = cylinder.t_start();
    let end = cylinder.t_end;
    if !(cylinder.theta > 0.0 && cylinder.duration().is_finite()) {
        return Err(Error::Precondition(format!(
            "cylinder scaling θ = {} must be positive",
            cylinder.theta
        )));
    }
    if end > last + time_tol(last) || start < first - time_tol(first) {
        return Err(Error::WindowOutOfRange {
            start,
            end,
            first,
            last,
        });
    }
    let block = cube_cells(&domain, &cylinder.cube)?;
    let inside: Vec<usize> = series
        .snapshots()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.time > start + time_tol(start) && s.time <= end + time_tol(end))
        .map(|(i, _)| i)
        .collect();
    if inside.is_empty() {
        return Err(Error::EmptyWindow { start, end });
    }
    let times: Vec<f64> = inside.iter().map(|&i| series.snapshots()[i].time).collect();
    let count = times.len();
    let slices = inside
        .iter()
        .enumerate()
        .map(|(j, &snap)| {
            let mut weight = 0.0;
            if j == 0 {
                weight += times[0] - start;
            } else {
                weight += 0.5 * (times[j] - times[j - 1]);
            }
            if j + 1 == count {
                weight += (end - times[j]).max(0.0);
            } else {
                weight += 0.5 * (times[j + 1] - times[j]);
            }
            Slice {
                time: times[j],
                weight,
                snapshot: snap,
                values: block.gather(&series.snapshots()[snap].values),
            }
        })
        .collect();
    Ok(CylinderSlices {
        block,
        t_start: start,
        t_end: end,
        slices,
    })
}
