//! Free-space Laplace kernel `G(x, y) = 1 / (4π|x − y|)` and the dipole fields
//! derived from it.
//!
//! All functions are pure. Evaluation at (numerically) coincident points is a
//! hard error: MUSIC denominators and response matrices must never see a
//! silently regularized kernel.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Unit, Vector3};

use crate::{Error, Result};

/// Position in meters.
pub type Point3 = Vector3<f64>;
/// Free 3-vector (field values, directions before normalization).
pub type Vec3 = Vector3<f64>;
/// Row-major 3×3 real tensor, e.g. the Hessian of `G` (1/m³).
pub type Dyadic3 = Matrix3<f64>;
/// Dipole or measurement direction.
pub type Direction = Unit<Vector3<f64>>;

/// Points closer than this (meters) are treated as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-12;

fn separation(x: &Point3, y: &Point3) -> Result<(Vec3, f64)> {
    let r = x - y;
    let dist = r.norm();
    if !(dist >= COINCIDENCE_TOL) {
        return Err(Error::CoincidentPoints { distance: dist });
    }
    Ok((r, dist))
}

/// `G(x, y) = 1 / (4π|x − y|)`.
pub fn green_scalar(x: &Point3, y: &Point3) -> Result<f64> {
    let (_, dist) = separation(x, y)?;
    Ok(1.0 / (4.0 * PI * dist))
}

/// Hessian of `G` with respect to `x`:
/// `(3 r rᵀ − |r|² I) / (4π|r|⁵)` with `r = x − y`.
///
/// Symmetric, traceless, and invariant under swapping `x` and `y`.
pub fn green_hessian(x: &Point3, y: &Point3) -> Result<Dyadic3> {
    let (r, dist) = separation(x, y)?;
    let r2 = dist * dist;
    let scale = 1.0 / (4.0 * PI * r2 * r2 * dist);
    let mut h = r * r.transpose() * 3.0;
    for i in 0..3 {
        h[(i, i)] -= r2;
    }
    Ok(h * scale)
}

/// Magnetic field at `x` of a unit dipole at `s` pointing along `p`:
/// `H₀(x) = D²G(x, s) p`.
pub fn dipole_field(x: &Point3, s: &Point3, p: &Direction) -> Result<Vec3> {
    Ok(green_hessian(x, s)? * p.as_ref())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    use super::*;

    fn e3() -> Direction {
        Vector3::z_axis()
    }

    /// Second-order central differences of `green_scalar`; the oracle for
    /// the closed-form Hessian.
    fn fd_hessian(x: &Point3, y: &Point3, h: f64) -> Dyadic3 {
        let g = |p: Point3| green_scalar(&p, y).unwrap();
        let mut out = Dyadic3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let ei = Vec3::ith(i, h);
                let ej = Vec3::ith(j, h);
                out[(i, j)] = if i == j {
                    (g(x + ei) - 2.0 * g(*x) + g(x - ei)) / (h * h)
                } else {
                    (g(x + ei + ej) - g(x + ei - ej) - g(x - ei + ej) + g(x - ei - ej))
                        / (4.0 * h * h)
                };
            }
        }
        out
    }

    fn point_pair() -> impl Strategy<Value = (Point3, Point3)> {
        let coord = -5.0..5.0f64;
        (
            [coord.clone(), coord.clone(), coord.clone()],
            [coord.clone(), coord.clone(), coord],
        )
            .prop_map(|(a, b)| (Point3::from(a), Point3::from(b)))
    }

    #[test]
    fn scalar_kernel_values() {
        let o = Point3::zeros();
        assert_relative_eq!(
            green_scalar(&Point3::new(0.0, 0.0, 1.0), &o).unwrap(),
            1.0 / (4.0 * PI),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            green_scalar(&Point3::new(0.0, 0.0, 2.0), &o).unwrap(),
            1.0 / (8.0 * PI),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            green_scalar(&Point3::new(1.0, 1.0, 1.0), &o).unwrap(),
            1.0 / (4.0 * PI * 3f64.sqrt()),
            max_relative = 1e-15
        );
        assert!((green_scalar(&Point3::new(0.0, 0.0, 1.0), &o).unwrap() - 0.0795775).abs() < 1e-7);
    }

    #[test]
    fn coincident_points_rejected() {
        let p = Point3::new(0.3, -0.1, 2.0);
        assert!(matches!(green_scalar(&p, &p), Err(Error::CoincidentPoints { .. })));
        assert!(green_hessian(&p, &(p + Vec3::new(1e-13, 0.0, 0.0))).is_err());
        assert!(dipole_field(&p, &p, &e3()).is_err());
        assert!(green_hessian(&p, &(p + Vec3::new(1e-11, 0.0, 0.0))).is_ok());
    }

    #[test]
    fn axial_hessian_closed_form() {
        let h = green_hessian(&Point3::new(0.0, 0.0, 1.0), &Point3::zeros()).unwrap();
        let expected = Dyadic3::from_diagonal(&Vec3::new(-1.0, -1.0, 2.0)) / (4.0 * PI);
        assert_relative_eq!(h, expected, epsilon = 1e-16);
        let fd = fd_hessian(&Point3::new(0.0, 0.0, 1.0), &Point3::zeros(), 1e-4);
        assert!((fd - expected).norm() / expected.norm() < 1e-6);
    }

    #[test]
    fn axial_dipole_field() {
        let f = dipole_field(&Point3::new(0.0, 0.0, 1.0), &Point3::zeros(), &e3()).unwrap();
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, 1.0 / (2.0 * PI)), epsilon = 1e-16);
    }

    #[test]
    fn field_rotates_with_configuration() {
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.4);
        let x = Point3::new(0.4, -0.7, 1.3);
        let s = Point3::new(-0.2, 0.5, 0.1);
        let p = Unit::new_normalize(Vec3::new(1.0, 2.0, -0.5));
        let base = dipole_field(&x, &s, &p).unwrap();
        let rotated = dipole_field(&(rot * x), &(rot * s), &Unit::new_normalize(rot * p.into_inner()))
            .unwrap();
        assert_relative_eq!(rotated, rot * base, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn hessian_matches_finite_differences((x, y) in point_pair()) {
            let d = (x - y).norm();
            prop_assume!(d > 0.1 && d < 10.0);
            let exact = green_hessian(&x, &y).unwrap();
            let fd = fd_hessian(&x, &y, 1e-4 * d);
            prop_assert!((fd - exact).norm() / exact.norm() < 1e-6);
        }

        #[test]
        fn hessian_traceless_and_symmetric((x, y) in point_pair()) {
            prop_assume!((x - y).norm() > 1e-3);
            let h = green_hessian(&x, &y).unwrap();
            prop_assert!(h.trace().abs() <= 1e-12 * h.norm());
            prop_assert!((h - h.transpose()).norm() == 0.0);
        }

        #[test]
        fn hessian_scales_as_inverse_cube((x, y) in point_pair(), lambda in 0.1..10.0f64) {
            prop_assume!((x - y).norm() > 1e-2);
            let h = green_hessian(&x, &y).unwrap();
            let hs = green_hessian(&(x * lambda), &(y * lambda)).unwrap();
            prop_assert!((hs - h / lambda.powi(3)).norm() <= 1e-12 * h.norm() / lambda.powi(3));
        }

        #[test]
        fn dipole_reciprocity(
            (x, s) in point_pair(),
            p in [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
            q in [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
        ) {
            prop_assume!((x - s).norm() > 1e-2);
            let (p, q) = (Vec3::from(p), Vec3::from(q));
            prop_assume!(p.norm() > 1e-3 && q.norm() > 1e-3);
            let (p, q) = (Unit::new_normalize(p), Unit::new_normalize(q));
            let lhs = dipole_field(&x, &s, &p).unwrap().dot(&q);
            let rhs = dipole_field(&s, &x, &q).unwrap().dot(&p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
        }
    }
}
