//! MUSIC localization.
//!
//! For a search point `z_s` the receiver-side steering vectors
//! `g_l(z_s)_n = (D²G(r_n, z_s) q_n) · e_l`, `l = 1, 2, 3`, lie in the range of
//! `A₀` exactly when `z_s = z`. The imaging functional is
//!
//! ```text
//! I(z_s) = [ Σ_l ‖(I − P) g_l(z_s)‖² ]^{-1/2}
//! ```
//!
//! with `P` the projector onto the leading left singular vectors of the
//! measured matrix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::forward::{receiver_steering, ResponseMatrix, Sensor};
use crate::geometry::{Point3, Vec3};
use crate::{Error, Result};

/// Upper bound returned when the MUSIC denominator vanishes.
pub const MUSIC_CAP: f64 = 1e30;
/// Default signal-space dimension (a small sphere has three).
pub const DEFAULT_RANK: usize = 3;
const RANK_WARN_RATIO: f64 = 1e-12;

/// Orthogonal projector `P = U Uᵀ`, stored through its orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    basis: DMatrix<f64>,
}

impl Projector {
    /// `basis` must have orthonormal columns.
    pub fn from_basis(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_basis(DMatrix::identity(n, n))
    }

    pub fn zero(n: usize) -> Self {
        Self::from_basis(DMatrix::zeros(n, 0))
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Dense `N × N` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `(I − P) v`.
    pub fn complement_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.basis * (self.basis.transpose() * v)
    }
}

/// Projector onto the `rank` leading left singular vectors of `a`.
pub fn signal_projector(a: &ResponseMatrix, rank: usize) -> Result<Projector> {
    let sv = a.singular_values();
    if rank > sv.len() {
        return Err(Error::InvalidInput(format!(
            "signal rank {rank} exceeds min(N, M) = {}",
            sv.len()
        )));
    }
    if rank > 0 && !(sv[rank - 1] >= RANK_WARN_RATIO * sv[0]) {
        log::warn!(
            "signal subspace is rank deficient: sigma_{rank}/sigma_1 = {:e}",
            sv[rank - 1] / sv[0]
        );
    }
    Ok(Projector::from_basis(a.leading_left_vectors(rank)?))
}

/// MUSIC functional at `z_s`, capped at [`MUSIC_CAP`].
pub fn music_value(z_s: &Point3, projector: &Projector, receivers: &[Sensor]) -> Result<f64> {
    if projector.dim() != receivers.len() {
        return Err(Error::InvalidInput(format!(
            "projector acts on {} receivers, array has {}",
            projector.dim(),
            receivers.len()
        )));
    }
    let g = receiver_steering(receivers, z_s)?;
    let mut denom = 0.0;
    for l in 0..3 {
        denom += projector.complement_apply(&g.column(l).into_owned()).norm_squared();
    }
    Ok(if denom > MUSIC_CAP.powi(-2) {
        denom.sqrt().recip()
    } else {
        MUSIC_CAP
    })
}

/// Regular grid over an axis-aligned box. An axis with a single sample is
/// a slice and needs `lo == hi` on that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    lo: Point3,
    hi: Point3,
    counts: [usize; 3],
}

impl SearchGrid {
    pub fn new(lo: Point3, hi: Point3, counts: [usize; 3]) -> Result<Self> {
        for axis in 0..3 {
            let (a, b, c) = (lo[axis], hi[axis], counts[axis]);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidInput("search box corners must be finite".into()));
            }
            match c {
                0 => return Err(Error::InvalidInput(format!("axis {axis} has no samples"))),
                1 if a != b => {
                    return Err(Error::InvalidInput(format!(
                        "axis {axis} has one sample but a nonzero extent [{a}, {b}]"
                    )))
                }
                1 => {}
                _ if !(a < b) => {
                    return Err(Error::InvalidInput(format!(
                        "axis {axis} needs lo < hi, got [{a}, {b}]"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { lo, hi, counts })
    }

    /// Cube `[-half, half]³` with `per_axis` samples on each axis.
    pub fn cube(half: f64, per_axis: usize) -> Result<Self> {
        Self::new(Point3::repeat(-half), Point3::repeat(half), [per_axis; 3])
    }

    pub fn lo(&self) -> &Point3 {
        &self.lo
    }

    pub fn hi(&self) -> &Point3 {
        &self.hi
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node spacing per axis (0 on slice axes).
    pub fn spacing(&self) -> Vec3 {
        Vec3::from_fn(|axis, _| {
            let c = self.counts[axis];
            if c > 1 {
                (self.hi[axis] - self.lo[axis]) / (c - 1) as f64
            } else {
                0.0
            }
        })
    }

    /// Flat index with x varying fastest.
    pub fn flat_index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.counts[0] * (ijk[1] + self.counts[1] * ijk[2])
    }

    pub fn unflatten(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.counts;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn point(&self, index: usize) -> Point3 {
        let ijk = self.unflatten(index);
        let h = self.spacing();
        Point3::from_fn(|axis, _| self.lo[axis] + ijk[axis] as f64 * h[axis])
    }

    pub fn contains(&self, x: &Point3) -> bool {
        (0..3).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }

    /// Rejects grids whose closed box contains any sensor.
    pub fn check_sensors(&self, sensors: &[Sensor]) -> Result<()> {
        match sensors.iter().position(|s| self.contains(&s.position)) {
            Some(i) => Err(Error::InvalidInput(format!(
                "sensor {i} at {:?} lies inside the search box",
                sensors[i].position.as_slice()
            ))),
            None => Ok(()),
        }
    }

    /// The `z = value` cross-section with the same x/y sampling.
    pub fn slice_z(&self, value: f64) -> Result<Self> {
        self.slice(2, value)
    }

    /// The `x = value` cross-section with the same y/z sampling.
    pub fn slice_x(&self, value: f64) -> Result<Self> {
        self.slice(0, value)
    }

    fn slice(&self, axis: usize, value: f64) -> Result<Self> {
        let (mut lo, mut hi, mut counts) = (self.lo, self.hi, self.counts);
        lo[axis] = value;
        hi[axis] = value;
        counts[axis] = 1;
        Self::new(lo, hi, counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicImage {
    grid: SearchGrid,
    values: Vec<f64>,
    argmax: usize,
}

impl MusicImage {
    /// Wraps precomputed values; the argmax is the first maximal index.
    pub fn new(grid: SearchGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Degenerate(format!("image value {} at node {i}", values[i])));
        }
        let mut argmax = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[argmax] {
                argmax = i;
            }
        }
        Ok(Self { grid, values, argmax })
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn argmax(&self) -> usize {
        self.argmax
    }

    pub fn peak_value(&self) -> f64 {
        self.values[self.argmax]
    }

    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn peak_to_median(&self) -> f64 {
        self.peak_value() / self.median()
    }

    /// Nodes with their values, in flat-index order.
    pub fn nodes(&self) -> impl Iterator<Item = (Point3, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.grid.point(i), v))
    }
}

/// Evaluates the MUSIC functional on every grid node.
pub fn music_scan(grid: &SearchGrid, projector: &Projector, receivers: &[Sensor]) -> Result<MusicImage> {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| music_value(&grid.point(i), projector, receivers))
        .collect::<Result<Vec<_>>>()?;
    MusicImage::new(grid.clone(), values)
}

/// Grid node with the largest value (lowest flat index on ties).
pub fn locate(image: &MusicImage) -> Point3 {
    image.grid.point(image.argmax)
}

/// Sub-grid refinement of [`locate`].
///
/// Near the inclusion the squared inverse `I⁻²` is a smooth quadratic in the
/// search point, so a 3-point parabola per axis through `I⁻²` gives the
/// offset. Axes at the grid boundary or with a capped peak are not moved.
pub fn locate_refined(image: &MusicImage) -> Point3 {
    let grid = &image.grid;
    let mut p = locate(image);
    if image.peak_value() >= MUSIC_CAP {
        return p;
    }
    let ijk = grid.unflatten(image.argmax);
    let h = grid.spacing();
    let d = |idx: [usize; 3]| image.values[grid.flat_index(idx)].powi(-2);
    for axis in 0..3 {
        let i = ijk[axis];
        if i == 0 || i + 1 >= grid.counts[axis] {
            continue;
        }
        let (mut lo, mut hi) = (ijk, ijk);
        lo[axis] -= 1;
        hi[axis] += 1;
        let (fm, f0, fp) = (d(lo), d(ijk), d(hi));
        let curv = fm - 2.0 * f0 + fp;
        if curv > 0.0 {
            let offset = (0.5 * (fm - fp) / curv).clamp(-0.5, 0.5);
            p[axis] += offset * h[axis];
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;
    use num_complex::Complex64;

    use super::*;
    use crate::forward::{planar_grid, response_matrix, InclusionModel, Polarization, SensorArray};

    fn reference_array() -> SensorArray {
        let sensors = planar_grid(2.0, 16, 1.0, Vector3::z_axis());
        SensorArray::new(sensors.clone(), sensors).unwrap()
    }

    fn a0_at(array: &SensorArray, z: Point3) -> ResponseMatrix {
        let incl = InclusionModel::new(z, 0.01, 1.2566e-6, 1.2566e-6, 5.96e7, 133.5).unwrap();
        response_matrix(array, &incl, &Polarization::sphere(Complex64::new(-0.4110, -0.0387))).unwrap()
    }

    #[test]
    fn projector_algebra() {
        let array = reference_array();
        let a0 = a0_at(&array, Point3::new(0.1, -0.2, 0.15));
        let p = signal_projector(&a0, 3).unwrap().matrix();
        assert!((p.trace() - 3.0).abs() < 1e-12);
        assert!((&p * &p - &p).amax() < 1e-12);
        assert!((&p - p.transpose()).amax() < 1e-12);
    }

    #[test]
    fn steering_vectors_lie_in_signal_space() {
        let array = reference_array();
        let z = Point3::new(0.1, -0.2, 0.15);
        let proj = signal_projector(&a0_at(&array, z), 3).unwrap();
        let g = receiver_steering(array.receivers(), &z).unwrap();
        for l in 0..3 {
            let col = g.column(l).into_owned();
            assert!(proj.complement_apply(&col).norm() / col.norm() < 1e-8);
        }
    }

    #[test]
    fn degenerate_projectors() {
        let array = reference_array();
        let z = Point3::new(0.2, 0.0, 0.0);
        let full = music_value(&z, &Projector::identity(256), array.receivers()).unwrap();
        assert_eq!(full, MUSIC_CAP);
        let none = music_value(&z, &Projector::zero(256), array.receivers()).unwrap();
        let g = receiver_steering(array.receivers(), &z).unwrap();
        assert!((none - g.norm_squared().sqrt().recip()).abs() <= 1e-14 * none);
        assert!(none.is_finite() && none < 10.0);
        assert!(music_value(&z, &Projector::zero(10), array.receivers()).is_err());
    }

    #[test]
    fn coincident_search_point() {
        let array = reference_array();
        let at_sensor = array.receivers()[5].position;
        assert!(music_value(&at_sensor, &Projector::zero(256), array.receivers()).is_err());
    }

    #[test]
    fn grid_indexing_and_validation() {
        let g = SearchGrid::cube(0.5, 21).unwrap();
        assert_eq!(g.len(), 9261);
        assert!((g.spacing() - Vec3::repeat(0.05)).norm() < 1e-15);
        assert_eq!(g.point(0), Point3::repeat(-0.5));
        assert_eq!(g.point(1), Point3::new(-0.45, -0.5, -0.5));
        assert_eq!(g.flat_index([3, 4, 5]), 3 + 21 * (4 + 21 * 5));
        assert_eq!(g.unflatten(g.flat_index([3, 4, 5])), [3, 4, 5]);
        assert!((g.point(g.flat_index([10, 10, 10]))).norm() < 1e-15);
        assert!(g.check_sensors(reference_array().receivers()).is_ok());
        let big = SearchGrid::cube(1.5, 5).unwrap();
        assert!(big.check_sensors(reference_array().receivers()).is_err());
        assert!(SearchGrid::new(Point3::zeros(), Point3::repeat(1.0), [2, 0, 2]).is_err());
        assert!(SearchGrid::new(Point3::zeros(), Point3::repeat(1.0), [2, 1, 2]).is_err());
        assert!(SearchGrid::new(Point3::repeat(1.0), Point3::zeros(), [2, 2, 2]).is_err());
        let slice = g.slice_z(0.0).unwrap();
        assert_eq!(slice.len(), 441);
        assert!(slice.nodes_all_at_z(0.0));
    }

    impl SearchGrid {
        fn nodes_all_at_z(&self, z: f64) -> bool {
            (0..self.len()).all(|i| self.point(i).z == z)
        }
    }

    #[test]
    fn single_node_and_ties() {
        let one = SearchGrid::new(Point3::new(0.1, 0.2, 0.3), Point3::new(0.1, 0.2, 0.3), [1, 1, 1]).unwrap();
        let img = MusicImage::new(one, vec![4.0]).unwrap();
        assert_eq!(locate(&img), Point3::new(0.1, 0.2, 0.3));
        assert_eq!(locate_refined(&img), Point3::new(0.1, 0.2, 0.3));

        let line = SearchGrid::new(Point3::zeros(), Point3::new(1.0, 0.0, 0.0), [5, 1, 1]).unwrap();
        let img = MusicImage::new(line, vec![1.0, 3.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(img.argmax(), 1);
        assert_eq!(locate(&img), Point3::new(0.25, 0.0, 0.0));
        assert!(MusicImage::new(img.grid().clone(), vec![1.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn reference_configuration_peak() {
        let array = reference_array();
        let a0 = a0_at(&array, Point3::zeros());
        let proj = signal_projector(&a0, 3).unwrap();
        let grid = SearchGrid::cube(0.5, 21).unwrap();
        let img = music_scan(&grid, &proj, array.receivers()).unwrap();
        assert!(locate(&img).norm() <= 0.05 + 1e-12);
        assert!(img.peak_value() >= 1e4 * img.median());
        assert!(locate_refined(&img).norm() < 0.025);
    }

    #[test]
    fn refinement_tracks_off_grid_inclusion() {
        let array = reference_array();
        let z = Point3::new(0.013, -0.021, 0.037);
        let proj = signal_projector(&a0_at(&array, z), 3).unwrap();
        let grid = SearchGrid::cube(0.5, 21).unwrap();
        let img = music_scan(&grid, &proj, array.receivers()).unwrap();
        let coarse = (locate(&img) - z).norm();
        let fine = (locate_refined(&img) - z).norm();
        assert!(coarse <= 0.05 * 3f64.sqrt());
        assert!(fine < 0.025, "refined error {fine}");
        assert!(fine < coarse);
    }
}
