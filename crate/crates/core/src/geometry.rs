//! Planar polygon utilities: shoelace area, simplicity checks, ray-casting
//! point-in-polygon, and grid-sampled overlap fractions.
//!
//! Plots are field-scale, so lon/lat is treated as a flat plane; overlap is
//! only ever compared against thresholds, so the grid estimate's documented
//! error bound (≤ 2/resolution) is enough.

use crate::error::{Error, Result};

/// A polygon ring as ordered (lon, lat) vertices, implicitly closed.
pub type Ring = Vec<(f64, f64)>;

/// Axis-aligned bounding box of a ring.
pub fn bounding_box(ring: &[(f64, f64)]) -> Option<(f64, f64, f64, f64)> {
    if ring.is_empty() {
        return None;
    }
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for &(x, y) in ring {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    Some((min_x, min_y, max_x, max_y))
}

fn distinct_vertices(ring: &[(f64, f64)]) -> usize {
    let mut seen: Vec<(f64, f64)> = Vec::with_capacity(ring.len());
    for &v in ring {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.len()
}

/// True if the ring has too few distinct vertices to bound any area.
pub fn has_too_few_vertices(ring: &[(f64, f64)]) -> bool {
    distinct_vertices(ring) < 3
}

/// True if the ring cannot serve as a polygon: too few distinct vertices
/// or zero enclosed area (collinear vertices, bowties).
pub fn is_degenerate(ring: &[(f64, f64)]) -> bool {
    has_too_few_vertices(ring) || shoelace(ring).abs() <= f64::EPSILON
}

fn shoelace(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % n];
        acc += x1 * y2 - x2 * y1;
    }
    acc / 2.0
}

/// Absolute shoelace area in squared degrees. Vertex-order independent.
pub fn polygon_area(ring: &[(f64, f64)]) -> Result<f64> {
    if distinct_vertices(ring) < 3 {
        return Err(Error::Geometry(format!(
            "degenerate ring: {} distinct vertices",
            distinct_vertices(ring)
        )));
    }
    Ok(shoelace(ring).abs())
}

fn orientation(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> i32 {
    let v = (q.1 - p.1) * (r.0 - q.0) - (q.0 - p.0) * (r.1 - q.1);
    if v.abs() < 1e-15 {
        0
    } else if v > 0.0 {
        1
    } else {
        2
    }
}

fn on_segment(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> bool {
    q.0 <= p.0.max(r.0) && q.0 >= p.0.min(r.0) && q.1 <= p.1.max(r.1) && q.1 >= p.1.min(r.1)
}

fn segments_intersect(p1: (f64, f64), q1: (f64, f64), p2: (f64, f64), q2: (f64, f64)) -> bool {
    let o1 = orientation(p1, q1, p2);
    let o2 = orientation(p1, q1, q2);
    let o3 = orientation(p2, q2, p1);
    let o4 = orientation(p2, q2, q1);

    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(p1, p2, q1))
        || (o2 == 0 && on_segment(p1, q2, q1))
        || (o3 == 0 && on_segment(p2, p1, q2))
        || (o4 == 0 && on_segment(p2, q1, q2))
}

/// True if any two non-adjacent edges of the ring intersect.
pub fn is_self_intersecting(ring: &[(f64, f64)]) -> bool {
    let n = ring.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let a1 = ring[i];
        let a2 = ring[(i + 1) % n];
        for j in (i + 1)..n {
            // Skip edges sharing a vertex (adjacent, or first/last pair).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b1 = ring[j];
            let b2 = ring[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return true;
            }
        }
    }
    false
}

/// Ray-casting point-in-polygon test (crossing number, rightward ray).
pub fn point_in_polygon(point: (f64, f64), ring: &[(f64, f64)]) -> bool {
    let (px, py) = point;
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % n];
        if (y1 > py) != (y2 > py) {
            let x_cross = (x2 - x1) * (py - y1) / (y2 - y1) + x1;
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Fraction of `a`'s area covered by `b`, estimated on a `resolution`²
/// point grid over `a`'s bounding box restricted to points inside `a`.
///
/// Deterministic; absolute error ≤ 2/resolution on simple rings.
pub fn overlap_fraction(a: &[(f64, f64)], b: &[(f64, f64)], resolution: u32) -> Result<f64> {
    if is_degenerate(a) || is_degenerate(b) {
        return Err(Error::Geometry("degenerate ring in overlap test".into()));
    }
    if resolution < 32 {
        return Err(Error::Config(format!(
            "overlap grid resolution {resolution} < 32"
        )));
    }
    // Disjoint bounding boxes cannot overlap; skip the grid entirely.
    let (ax0, ay0, ax1, ay1) = bounding_box(a).expect("non-degenerate ring");
    if let Some((bx0, by0, bx1, by1)) = bounding_box(b) {
        if bx0 > ax1 || bx1 < ax0 || by0 > ay1 || by1 < ay0 {
            return Ok(0.0);
        }
    }

    let r = resolution as usize;
    let dx = (ax1 - ax0) / resolution as f64;
    let dy = (ay1 - ay0) / resolution as f64;
    let mut inside_a = 0usize;
    let mut inside_both = 0usize;
    for i in 0..r {
        // Cell centers, so boundary points do not flap.
        let x = ax0 + (i as f64 + 0.5) * dx;
        for j in 0..r {
            let y = ay0 + (j as f64 + 0.5) * dy;
            if point_in_polygon((x, y), a) {
                inside_a += 1;
                if point_in_polygon((x, y), b) {
                    inside_both += 1;
                }
            }
        }
    }
    if inside_a == 0 {
        return Err(Error::Geometry(
            "ring too thin for overlap grid; raise resolution".into(),
        ));
    }
    Ok(inside_both as f64 / inside_a as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn unit_square() -> Ring {
        vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    }

    #[test]
    fn area_unit_square() {
        assert_eq!(polygon_area(&unit_square()).unwrap(), 1.0);
    }

    #[test]
    fn area_triangle() {
        let tri = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert_eq!(polygon_area(&tri).unwrap(), 0.5);
    }

    #[test]
    fn area_ignores_vertex_order() {
        let mut sq = unit_square();
        sq.reverse();
        assert_eq!(polygon_area(&sq).unwrap(), 1.0);
    }

    #[test]
    fn area_rejects_degenerate() {
        assert!(polygon_area(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(polygon_area(&[(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)]).is_err());
    }

    #[test]
    fn bowtie_is_self_intersecting() {
        let bowtie = vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(is_self_intersecting(&bowtie));
        assert!(!is_self_intersecting(&unit_square()));
    }

    #[test]
    fn point_in_polygon_basics() {
        let sq = unit_square();
        assert!(point_in_polygon((0.5, 0.5), &sq));
        assert!(!point_in_polygon((1.5, 0.5), &sq));
        assert!(!point_in_polygon((-0.5, 0.5), &sq));
    }

    #[test]
    fn overlap_identical_squares() {
        let sq = unit_square();
        let f = overlap_fraction(&sq, &sq, 256).unwrap();
        assert!((f - 1.0).abs() <= 0.01, "got {f}");
    }

    #[test]
    fn overlap_disjoint_squares() {
        let a = unit_square();
        let b = vec![(5.0, 5.0), (6.0, 5.0), (6.0, 6.0), (5.0, 6.0)];
        assert_eq!(overlap_fraction(&a, &b, 256).unwrap(), 0.0);
    }

    #[test]
    fn overlap_half_shifted_square() {
        // Exact intersection area of a unit square and its 0.5-shift is 0.5.
        let a = unit_square();
        let b = vec![(0.5, 0.0), (1.5, 0.0), (1.5, 1.0), (0.5, 1.0)];
        let f = overlap_fraction(&a, &b, 256).unwrap();
        assert!((f - 0.5).abs() <= 0.01, "got {f}");
    }

    #[test]
    fn overlap_rejects_low_resolution() {
        let sq = unit_square();
        assert!(overlap_fraction(&sq, &sq, 16).is_err());
    }

    #[test]
    fn overlap_rejects_degenerate_ring() {
        let sq = unit_square();
        let line = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)];
        assert!(overlap_fraction(&sq, &line, 256).is_err());
    }
}
