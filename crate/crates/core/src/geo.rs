//! Planar geometry for positions, forwarding progress, and destination areas.
//!
//! All protocol logic works in a local Cartesian plane in meters. Geographic
//! traces are projected once at ingestion; nothing in here deals with
//! latitude/longitude except the [`haversine_m`] reference used to validate
//! that projection.

use std::fmt;

/// Planar position in meters.
#[derive(Copy, Clone, PartialEq, Default, serde::Serialize)]
pub struct GeoPosition {
    pub x: f64,
    pub y: f64,
}

impl GeoPosition {
    pub fn new(x: f64, y: f64) -> Self {
        GeoPosition { x, y }
    }
}

impl fmt::Debug for GeoPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.1}, {:.1})", self.x, self.y)
    }
}

/// Euclidean distance in meters.
pub fn planar_distance(a: GeoPosition, b: GeoPosition) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Forwarding progress of `candidate` relative to `sender` toward `center`:
/// positive when the candidate is closer to the area center than the sender.
pub fn progress_toward(sender: GeoPosition, candidate: GeoPosition, center: GeoPosition) -> f64 {
    planar_distance(sender, center) - planar_distance(candidate, center)
}

/// Minimal absolute difference between two headings in degrees, in `[0, 180]`.
pub fn heading_delta_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Shape of a destination area.
#[derive(Copy, Clone, PartialEq, Eq, Debug, serde::Serialize)]
pub enum AreaShape {
    Circle,
    Rectangle,
    Ellipse,
}

/// Geographic destination area: a circle, axis pair rectangle, or ellipse,
/// centered at `center` and rotated by `azimuth_deg` (counterclockwise from
/// the +x axis toward the long `a` half-axis).
#[derive(Copy, Clone, PartialEq, Debug, serde::Serialize)]
pub struct GeoArea {
    pub shape: AreaShape,
    pub center: GeoPosition,
    /// Half-axis along the rotated x direction (radius for circles).
    pub a: f64,
    /// Half-axis along the rotated y direction (radius for circles).
    pub b: f64,
    pub azimuth_deg: f64,
}

impl GeoArea {
    pub fn circle(center: GeoPosition, r: f64) -> Self {
        GeoArea { shape: AreaShape::Circle, center, a: r, b: r, azimuth_deg: 0.0 }
    }

    pub fn rectangle(center: GeoPosition, a: f64, b: f64, azimuth_deg: f64) -> Self {
        GeoArea { shape: AreaShape::Rectangle, center, a, b, azimuth_deg }
    }

    pub fn ellipse(center: GeoPosition, a: f64, b: f64, azimuth_deg: f64) -> Self {
        GeoArea { shape: AreaShape::Ellipse, center, a, b, azimuth_deg }
    }

    /// Characteristic function: positive inside, zero on the boundary,
    /// negative outside.
    fn characteristic(&self, p: GeoPosition) -> f64 {
        let (sin, cos) = self.azimuth_deg.to_radians().sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        // rotate into the area frame
        let lx = dx * cos + dy * sin;
        let ly = -dx * sin + dy * cos;
        let u = lx / self.a;
        let v = ly / self.b;
        match self.shape {
            AreaShape::Circle | AreaShape::Ellipse => 1.0 - u * u - v * v,
            AreaShape::Rectangle => (1.0 - u * u).min(1.0 - v * v),
        }
    }
}

/// Membership test; boundary points count as inside.
pub fn contains(area: &GeoArea, p: GeoPosition) -> bool {
    area.characteristic(p) >= 0.0
}

/// Great-circle distance between two WGS-84 degree coordinates, in meters.
/// Reference implementation for validating planar projections of traces.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const R: f64 = 6_371_008.8;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * h.sqrt().asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_pythagorean() {
        let a = GeoPosition::new(0.0, 0.0);
        let b = GeoPosition::new(300.0, 400.0);
        assert_eq!(planar_distance(a, b), 500.0);
        assert_eq!(planar_distance(a, a), 0.0);
    }

    #[test]
    fn progress_is_distance_difference() {
        let sender = GeoPosition::new(0.0, 0.0);
        let me = GeoPosition::new(500.0, 0.0);
        let center = GeoPosition::new(2000.0, 0.0);
        assert_eq!(progress_toward(sender, me, center), 500.0);
        // moving away from the center gives negative progress
        let behind = GeoPosition::new(-250.0, 0.0);
        assert_eq!(progress_toward(sender, behind, center), -250.0);
    }

    #[test]
    fn heading_delta_wraps() {
        assert_eq!(heading_delta_deg(350.0, 10.0), 20.0);
        assert_eq!(heading_delta_deg(10.0, 350.0), 20.0);
        assert_eq!(heading_delta_deg(90.0, 90.0), 0.0);
        assert_eq!(heading_delta_deg(0.0, 180.0), 180.0);
    }

    /// Oracle: membership in a rotated area equals membership of the
    /// counter-rotated point in the unrotated area.
    fn rotate_about(p: GeoPosition, c: GeoPosition, deg: f64) -> GeoPosition {
        let (sin, cos) = deg.to_radians().sin_cos();
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        GeoPosition::new(c.x + dx * cos - dy * sin, c.y + dx * sin + dy * cos)
    }

    #[test]
    fn rectangle_containment_rotate_then_compare() {
        let c = GeoPosition::new(100.0, -50.0);
        let area = GeoArea::rectangle(c, 200.0, 20.0, 30.0);
        let axis_aligned = GeoArea::rectangle(c, 200.0, 20.0, 0.0);
        for &(px, py) in &[
            (150.0, -50.0),
            (299.0, -50.0),
            (301.0, -50.0),
            (100.0, -29.0),
            (100.0, -71.0),
            (260.0, 40.0),
        ] {
            let p = rotate_about(GeoPosition::new(px, py), c, 30.0);
            assert_eq!(
                contains(&area, p),
                contains(&axis_aligned, GeoPosition::new(px, py)),
                "point ({px}, {py})"
            );
        }
    }

    #[test]
    fn boundary_counts_as_inside() {
        let area = GeoArea::circle(GeoPosition::new(0.0, 0.0), 100.0);
        assert!(contains(&area, GeoPosition::new(100.0, 0.0)));
        assert!(!contains(&area, GeoPosition::new(100.1, 0.0)));
        let rect = GeoArea::rectangle(GeoPosition::new(0.0, 0.0), 50.0, 10.0, 0.0);
        assert!(contains(&rect, GeoPosition::new(50.0, 10.0)));
        assert!(!contains(&rect, GeoPosition::new(50.0, 10.1)));
    }

    #[test]
    fn ellipse_differs_from_rectangle_at_corner() {
        let e = GeoArea::ellipse(GeoPosition::new(0.0, 0.0), 50.0, 10.0, 0.0);
        let r = GeoArea::rectangle(GeoPosition::new(0.0, 0.0), 50.0, 10.0, 0.0);
        let corner = GeoPosition::new(49.0, 9.0);
        assert!(contains(&r, corner));
        assert!(!contains(&e, corner));
    }

    #[test]
    fn haversine_reference_points() {
        // one degree of latitude at the equator
        let d = haversine_m(0.0, 0.0, 1.0, 0.0);
        assert!((d - 111_195.0).abs() < 30.0, "{d}");
        assert_eq!(haversine_m(48.1, 11.5, 48.1, 11.5), 0.0);
    }

    proptest! {
        #[test]
        fn distance_symmetric_nonnegative(
            ax in -5000.0..5000.0f64, ay in -5000.0..5000.0f64,
            bx in -5000.0..5000.0f64, by in -5000.0..5000.0f64,
        ) {
            let a = GeoPosition::new(ax, ay);
            let b = GeoPosition::new(bx, by);
            prop_assert!(planar_distance(a, b) >= 0.0);
            prop_assert!((planar_distance(a, b) - planar_distance(b, a)).abs() < 1e-9);
        }

        #[test]
        fn distance_triangle_inequality(
            ax in -5000.0..5000.0f64, ay in -5000.0..5000.0f64,
            bx in -5000.0..5000.0f64, by in -5000.0..5000.0f64,
            cx in -5000.0..5000.0f64, cy in -5000.0..5000.0f64,
        ) {
            let a = GeoPosition::new(ax, ay);
            let b = GeoPosition::new(bx, by);
            let c = GeoPosition::new(cx, cy);
            prop_assert!(planar_distance(a, c) <= planar_distance(a, b) + planar_distance(b, c) + 1e-6);
        }

        #[test]
        fn progress_antisymmetric(
            ax in -5000.0..5000.0f64, ay in -5000.0..5000.0f64,
            bx in -5000.0..5000.0f64, by in -5000.0..5000.0f64,
        ) {
            let a = GeoPosition::new(ax, ay);
            let b = GeoPosition::new(bx, by);
            let center = GeoPosition::new(3500.0, 0.0);
            prop_assert!((progress_toward(a, b, center) + progress_toward(b, a, center)).abs() < 1e-9);
        }

        #[test]
        fn containment_rotation_invariant(
            px in -300.0..300.0f64, py in -300.0..300.0f64,
            deg in 0.0..360.0f64,
        ) {
            let c = GeoPosition::new(10.0, 20.0);
            let area = GeoArea::ellipse(c, 120.0, 40.0, deg);
            let base = GeoArea::ellipse(c, 120.0, 40.0, 0.0);
            let p = GeoPosition::new(px, py);
            // skip numerically borderline points
            prop_assume!(base.characteristic(rotate_about(p, c, -deg)).abs() > 1e-9);
            prop_assert_eq!(contains(&area, p), contains(&base, rotate_about(p, c, -deg)));
        }
    }
}
