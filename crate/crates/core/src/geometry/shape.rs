//! Rasterization of analytic solid inclusions centered in the unit cell.
//! A pixel is solid iff its center lies inside the shape (no anti-aliasing).

use super::{GeometryError, PoreImage, ShapeKind, ShapeSpec};

/// Exact direction cosines. Multiples of 90 degrees use exact unit vectors so
/// that axis-aligned rotations of symmetric shapes stay pixel-exact.
fn rotation_cos_sin(deg: f64) -> (f64, f64) {
    let quarter = deg.rem_euclid(360.0);
    if quarter == 0.0 {
        (1.0, 0.0)
    } else if quarter == 90.0 {
        (0.0, 1.0)
    } else if quarter == 180.0 {
        (-1.0, 0.0)
    } else if quarter == 270.0 {
        (0.0, -1.0)
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

struct Triangle {
    verts: [(f64, f64); 3],
}

impl Triangle {
    /// Equilateral triangle with the given side, centroid at the origin,
    /// base parallel to the x-axis (apex up) before rotation.
    fn new(side: f64, cos: f64, sin: f64) -> Triangle {
        let circum = side / 3f64.sqrt();
        let base = [(0.0, circum), (-side / 2.0, -circum / 2.0), (side / 2.0, -circum / 2.0)];
        let verts = base.map(|(x, y)| (cos * x - sin * y, sin * x + cos * y));
        Triangle { verts }
    }

    fn contains(&self, px: f64, py: f64) -> bool {
        // Same-side test against each directed edge; boundary counts inside.
        let mut sign = 0i8;
        for i in 0..3 {
            let (x0, y0) = self.verts[i];
            let (x1, y1) = self.verts[(i + 1) % 3];
            let cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
            if cross != 0.0 {
                let s = if cross > 0.0 { 1 } else { -1 };
                if sign == 0 {
                    sign = s;
                } else if sign != s {
                    return false;
                }
            }
        }
        true
    }

    fn half_extents(&self) -> (f64, f64) {
        let ex = self.verts.iter().map(|v| v.0.abs()).fold(0.0, f64::max);
        let ey = self.verts.iter().map(|v| v.1.abs()).fold(0.0, f64::max);
        (ex, ey)
    }
}

/// Axis-aligned half extents of the rotated shape, in unit-cell lengths.
fn half_extents(spec: &ShapeSpec, cos: f64, sin: f64) -> (f64, f64) {
    match spec.kind {
        ShapeKind::Circle => (spec.size, spec.size),
        ShapeKind::Square => {
            let half = spec.size / 2.0;
            let e = half * (cos.abs() + sin.abs());
            (e, e)
        }
        ShapeKind::Ellipse => {
            let a = spec.size;
            let b = spec.size / spec.aspect;
            let ex = ((a * cos).powi(2) + (b * sin).powi(2)).sqrt();
            let ey = ((a * sin).powi(2) + (b * cos).powi(2)).sqrt();
            (ex, ey)
        }
        ShapeKind::Triangle => Triangle::new(spec.size, cos, sin).half_extents(),
    }
}

pub fn rasterize_shape(spec: &ShapeSpec, resolution: usize) -> Result<PoreImage, GeometryError> {
    if resolution < 2 {
        return Err(GeometryError::BadDimensions {
            width: resolution,
            height: resolution,
        });
    }
    if !(spec.size.is_finite() && spec.size >= 0.0) {
        return Err(GeometryError::InvalidShape(format!(
            "size must be finite and non-negative, got {}",
            spec.size
        )));
    }
    if spec.kind == ShapeKind::Ellipse && !(spec.aspect.is_finite() && spec.aspect > 0.0) {
        return Err(GeometryError::InvalidShape(format!(
            "ellipse aspect must be positive, got {}",
            spec.aspect
        )));
    }
    if spec.size == 0.0 {
        return Ok(PoreImage::filled(resolution, resolution, true));
    }

    let (cos, sin) = rotation_cos_sin(spec.rotation_deg);
    let (ex, ey) = half_extents(spec, cos, sin);
    if ex >= 0.5 || ey >= 0.5 {
        return Err(GeometryError::ShapeTouchesBoundary { extent: ex.max(ey) });
    }

    let n = resolution as f64;
    let triangle = match spec.kind {
        ShapeKind::Triangle => Some(Triangle::new(spec.size, cos, sin)),
        _ => None,
    };
    let inside = |x: usize, y: usize| -> bool {
        let dx = (x as f64 + 0.5) / n - 0.5;
        let dy = (y as f64 + 0.5) / n - 0.5;
        // Rotate the offset into the shape's local frame (inverse rotation).
        let lx = cos * dx + sin * dy;
        let ly = -sin * dx + cos * dy;
        match spec.kind {
            ShapeKind::Circle => lx * lx + ly * ly <= spec.size * spec.size,
            ShapeKind::Square => {
                let half = spec.size / 2.0;
                lx.abs() <= half && ly.abs() <= half
            }
            ShapeKind::Ellipse => {
                let a = spec.size;
                let b = spec.size / spec.aspect;
                (lx / a).powi(2) + (ly / b).powi(2) <= 1.0
            }
            ShapeKind::Triangle => triangle.as_ref().unwrap().contains(dx, dy),
        }
    };
    Ok(PoreImage::from_fn(resolution, resolution, |x, y| {
        !inside(x, y)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_size_circle_is_all_void() {
        let img = rasterize_shape(&ShapeSpec::new(ShapeKind::Circle, 0.0), 64).unwrap();
        assert_eq!(img.void_count(), 64 * 64);
    }

    #[test]
    fn centered_half_square_has_porosity_three_quarters() {
        let img = rasterize_shape(&ShapeSpec::new(ShapeKind::Square, 0.5), 100).unwrap();
        let solid = 100 * 100 - img.void_count();
        assert_eq!(solid, 50 * 50);
        assert_eq!(img.porosity(), 0.75);
    }

    #[test]
    fn ellipse_rotation_identity() {
        // 2:1 ellipse rotated 90 degrees equals the 1:2 ellipse (half the
        // size parameter) at 0 degrees, pixel for pixel.
        let rotated = rasterize_shape(
            &ShapeSpec::new(ShapeKind::Ellipse, 0.3)
                .with_aspect(2.0)
                .with_rotation(90.0),
            64,
        )
        .unwrap();
        let aligned = rasterize_shape(
            &ShapeSpec::new(ShapeKind::Ellipse, 0.15).with_aspect(0.5),
            64,
        )
        .unwrap();
        assert_eq!(rotated, aligned);
    }

    #[test]
    fn boundary_touching_shape_rejected() {
        let err = rasterize_shape(&ShapeSpec::new(ShapeKind::Circle, 0.5), 64).unwrap_err();
        assert!(matches!(err, GeometryError::ShapeTouchesBoundary { .. }));
        // Rotated square whose diagonal exceeds the cell.
        let err = rasterize_shape(
            &ShapeSpec::new(ShapeKind::Square, 0.75).with_rotation(45.0),
            64,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::ShapeTouchesBoundary { .. }));
    }

    #[test]
    fn porosity_monotone_in_size_for_circles_and_squares() {
        for kind in [ShapeKind::Circle, ShapeKind::Square] {
            let mut last = 1.0f64;
            for i in 0..20 {
                let size = 0.02 + 0.022 * i as f64;
                let img = rasterize_shape(&ShapeSpec::new(kind, size), 64).unwrap();
                assert!(
                    img.porosity() <= last + 1e-12,
                    "{kind:?} porosity must not increase with size"
                );
                last = img.porosity();
            }
        }
    }

    #[test]
    fn triangle_is_centered_and_interior() {
        let img = rasterize_shape(
            &ShapeSpec::new(ShapeKind::Triangle, 0.4).with_rotation(15.0),
            64,
        )
        .unwrap();
        assert!(img.porosity() < 1.0 && img.porosity() > 0.8);
        // Border pixels stay void (shape is interior).
        for x in 0..64 {
            assert!(img.is_void(x, 0) && img.is_void(x, 63));
            assert!(img.is_void(0, x) && img.is_void(63, x));
        }
    }
}
