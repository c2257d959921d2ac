//! Stationary incompressible flow on the void space of a fully periodic
//! unit cell, driven by a constant body force, discretized with a staggered
//! MAC finite-volume scheme. Default path solves Stokes; Picard iterations
//! on the convective term are available behind `navier_stokes`.

mod stokes;

use crate::container::{read_arrays, write_arrays, ContainerError};
use crate::geometry::PoreImage;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use stokes::MacOperators;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("all-void geometry: a body force on a wall-free periodic domain admits no stationary solution")]
    NoDrag,
    #[error("geometry not preprocessed: {0}")]
    NotPreprocessed(String),
    #[error("solver did not converge in {stage} after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        stage: String,
        residual: f64,
        iterations: usize,
    },
    #[error("field/geometry dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("field container error: {0}")]
    Container(#[from] ContainerError),
    #[error("invalid fluid properties: {0}")]
    BadProps(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FluidProps {
    pub density: f64,
    pub viscosity: f64,
    pub body_force: Vec2,
}

impl Default for FluidProps {
    fn default() -> Self {
        FluidProps {
            density: 1.0,
            viscosity: 1.0,
            body_force: Vec2::new(1.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative momentum residual target.
    pub momentum_tol: f64,
    /// Per-cell mass residual target, relative to the mean face speed.
    pub mass_tol: f64,
    /// Inner velocity-CG relative tolerance.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub navier_stokes: bool,
    pub picard_max: usize,
    pub picard_damping: f64,
    pub picard_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            momentum_tol: 1e-9,
            mass_tol: 1e-12,
            inner_tol: 1e-13,
            max_outer: 600,
            max_inner: 60_000,
            navier_stokes: false,
            picard_max: 50,
            picard_damping: 0.7,
            picard_tol: 1e-8,
        }
    }
}

/// Staggered velocity + cell pressure on one periodic unit cell.
/// `u[j*W+i]` is the x-velocity on the face between cells ((i-1) mod W, j)
/// and (i, j); `v[j*W+i]` the y-velocity between (i, (j-1) mod H) and (i, j);
/// `p` is cell-centered with zero entries in solid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize, pixel_size: f64) -> Self {
        let n = width * height;
        FlowField {
            width,
            height,
            pixel_size,
            u: vec![0.0; n],
            v: vec![0.0; n],
            p: vec![0.0; n],
        }
    }

    pub fn matches(&self, image: &PoreImage) -> bool {
        self.width == image.width()
            && self.height == image.height()
            && (self.pixel_size - image.pixel_size()).abs() < 1e-12 * self.pixel_size.abs().max(1.0)
    }

    pub fn save(&self, path: &Path) -> Result<(), FlowError> {
        write_arrays(
            path,
            self.width,
            self.height,
            self.pixel_size,
            &[&self.u, &self.v, &self.p],
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FlowError> {
        let f = read_arrays(path)?;
        if f.arrays.len() != 3 {
            return Err(FlowError::Container(ContainerError::BadHeader(format!(
                "flow field needs 3 arrays, found {}",
                f.arrays.len()
            ))));
        }
        let mut arrays = f.arrays.into_iter();
        Ok(FlowField {
            width: f.width,
            height: f.height,
            pixel_size: f.pixel_size,
            u: arrays.next().unwrap(),
            v: arrays.next().unwrap(),
            p: arrays.next().unwrap(),
        })
    }

    /// Scales velocities (and pressure) by k; Stokes linearity.
    pub fn scaled(&self, k: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            pixel_size: self.pixel_size,
            u: self.u.iter().map(|x| x * k).collect(),
            v: self.v.iter().map(|x| x * k).collect(),
            p: self.p.iter().map(|x| x * k).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub inner_iterations: usize,
    pub momentum_residual: f64,
    pub mass_residual: f64,
    pub residual_history: Vec<f64>,
    pub picard_iterations: usize,
}

/// Solves the stationary momentum/mass balance on the void space. The
/// geometry must be preprocessed (single periodically connected void
/// component) and contain at least one solid pixel.
pub fn solve_flow(
    image: &PoreImage,
    props: &FluidProps,
    opts: &SolverOptions,
) -> Result<(FlowField, ConvergenceReport), FlowError> {
    if !(props.viscosity > 0.0) || !(props.density > 0.0) {
        return Err(FlowError::BadProps(format!(
            "density and viscosity must be positive, got rho={} mu={}",
            props.density, props.viscosity
        )));
    }
    let (w, h) = (image.width(), image.height());
    if w < 2 || h < 2 {
        return Err(FlowError::NotPreprocessed(format!(
            "domain too small: {w}x{h}"
        )));
    }
    let void = image.void_count();
    if void == 0 {
        return Err(FlowError::NotPreprocessed("no void space".into()));
    }
    if void == w * h {
        return Err(FlowError::NoDrag);
    }
    if !image.is_connected() {
        return Err(FlowError::NotPreprocessed(
            "void space has multiple periodic components".into(),
        ));
    }

    let mut field = FlowField::zeros(w, h, image.pixel_size());
    let q = props.body_force;
    if q.x == 0.0 && q.y == 0.0 {
        // Zero forcing: the zero field with constant (pinned) pressure.
        return Ok((
            field,
            ConvergenceReport {
                inner_iterations: 0,
                momentum_residual: 0.0,
                mass_residual: 0.0,
                residual_history: vec![0.0],
                picard_iterations: 0,
            },
        ));
    }

    let ops = MacOperators::new(image, props.viscosity);
    let n = ops.n();
    let force_u: Vec<f64> = (0..n)
        .map(|i| if ops.active_u[i] { q.x } else { 0.0 })
        .collect();
    let force_v: Vec<f64> = (0..n)
        .map(|i| if ops.active_v[i] { q.y } else { 0.0 })
        .collect();

    let mut history = Vec::new();
    let mut inner_total = 0usize;
    let mut picard_iterations = 0usize;

    let stokes_pass = |field: &mut FlowField,
                           fu: &[f64],
                           fv: &[f64],
                           history: &mut Vec<f64>|
     -> Result<usize, FlowError> {
        let mut inner = 0usize;
        field.u.fill(0.0);
        field.v.fill(0.0);
        field.p.fill(0.0);
        inner += ops.solve_a(fu, fv, &mut field.u, &mut field.v, opts.inner_tol, opts.max_inner)?;
        inner += ops.schur_solve(&mut field.u, &mut field.v, &mut field.p, opts, history)?;
        // Drive per-cell divergence to rounding level so long transport runs
        // cannot accumulate bound violations.
        let speed = ops.mean_face_speed(&field.u, &field.v);
        let div_target = 5e-15 * speed / image.pixel_size();
        ops.polish_divergence(&mut field.u, &mut field.v, div_target, opts.max_inner)?;
        Ok(inner)
    };

    inner_total += stokes_pass(&mut field, &force_u, &force_v, &mut history)?;

    if opts.navier_stokes {
        let mut rhs_u = vec![0.0; n];
        let mut rhs_v = vec![0.0; n];
        let mut conv_u = vec![0.0; n];
        let mut conv_v = vec![0.0; n];
        let mut prev = field.clone();
        for k in 0..opts.picard_max {
            picard_iterations = k + 1;
            ops.convection(props.density, &field.u, &field.v, &mut conv_u, &mut conv_v);
            for i in 0..n {
                rhs_u[i] = force_u[i] - conv_u[i];
                rhs_v[i] = force_v[i] - conv_v[i];
            }
            let mut next = field.clone();
            inner_total += stokes_pass(&mut next, &rhs_u, &rhs_v, &mut history)?;
            let d = opts.picard_damping;
            for i in 0..n {
                next.u[i] = d * next.u[i] + (1.0 - d) * field.u[i];
                next.v[i] = d * next.v[i] + (1.0 - d) * field.v[i];
                next.p[i] = d * next.p[i] + (1.0 - d) * field.p[i];
            }
            // Damped mixtures are no longer exactly divergence free.
            let speed = ops.mean_face_speed(&next.u, &next.v);
            let div_target = 5e-15 * speed / image.pixel_size();
            ops.polish_divergence(&mut next.u, &mut next.v, div_target, opts.max_inner)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += (next.u[i] - prev.u[i]).powi(2) + (next.v[i] - prev.v[i]).powi(2);
                den += next.u[i].powi(2) + next.v[i].powi(2);
            }
            prev = next.clone();
            field = next;
            if den > 0.0 && (num / den).sqrt() <= opts.picard_tol {
                break;
            }
            if k + 1 == opts.picard_max {
                return Err(FlowError::Convergence {
                    stage: "picard".into(),
                    residual: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
                    iterations: opts.picard_max,
                });
            }
        }
    }

    // Residual accounting; in Navier-Stokes mode the convective contribution
    // moves to the right-hand side of the linear balance.
    let (mom_res, mass_res) = {
        let (fu, fv) = if opts.navier_stokes {
            let mut conv_u = vec![0.0; n];
            let mut conv_v = vec![0.0; n];
            ops.convection(props.density, &field.u, &field.v, &mut conv_u, &mut conv_v);
            let fu: Vec<f64> = (0..n).map(|i| force_u[i] - conv_u[i]).collect();
            let fv: Vec<f64> = (0..n).map(|i| force_v[i] - conv_v[i]).collect();
            (fu, fv)
        } else {
            (force_u.clone(), force_v.clone())
        };
        let mom = ops.momentum_residual(&field.u, &field.v, &field.p, &fu, &fv);
        let mass = max_divergence_rel(image, &field);
        (mom, mass)
    };
    if mom_res > opts.momentum_tol {
        return Err(FlowError::Convergence {
            stage: "momentum residual check".into(),
            residual: mom_res,
            iterations: inner_total,
        });
    }

    Ok((
        field,
        ConvergenceReport {
            inner_iterations: inner_total,
            momentum_residual: mom_res,
            mass_residual: mass_res,
            residual_history: history,
            picard_iterations,
        },
    ))
}

/// Cell-centered velocity: per component, the arithmetic mean of the two
/// bounding face values; exactly zero in solid cells.
pub fn interpolate_to_centers(image: &PoreImage, field: &FlowField) -> Vec<Vec2> {
    let (w, h) = (image.width(), image.height());
    let mut out = vec![Vec2::ZERO; w * h];
    for j in 0..h {
        for i in 0..w {
            let c = j * w + i;
            if !image.cells()[c] {
                continue;
            }
            let east = j * w + (i + 1) % w;
            let north = ((j + 1) % h) * w + i;
            out[c] = Vec2::new(
                0.5 * (field.u[c] + field.u[east]),
                0.5 * (field.v[c] + field.v[north]),
            );
        }
    }
    out
}

/// Per-cell discrete divergence (zero rows for solid cells).
pub fn divergence(image: &PoreImage, field: &FlowField) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let hp = field.pixel_size;
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let c = j * w + i;
            if !image.cells()[c] {
                continue;
            }
            let east = j * w + (i + 1) % w;
            let north = ((j + 1) % h) * w + i;
            out[c] = (field.u[east] - field.u[c] + field.v[north] - field.v[c]) / hp;
        }
    }
    out
}

/// Mean absolute face speed over the active faces.
pub fn mean_face_speed(image: &PoreImage, field: &FlowField) -> f64 {
    let ops = MacOperators::new(image, 1.0);
    ops.mean_face_speed(&field.u, &field.v)
}

/// Projects the face velocities onto the (discretely) divergence-free
/// subspace without touching no-slip faces. `abs_l2_tol` bounds the final
/// l2 norm of the per-cell divergence.
pub fn project_divergence_free(
    image: &PoreImage,
    field: &mut FlowField,
    abs_l2_tol: f64,
    max_iter: usize,
) -> Result<(), FlowError> {
    let ops = MacOperators::new(image, 1.0);
    ops.polish_divergence(&mut field.u, &mut field.v, abs_l2_tol, max_iter)
}

/// Maximum per-cell mass residual, nondimensionalized by the mean face speed:
/// max_c |div_c| * h / mean|u_f|.
pub fn max_divergence_rel(image: &PoreImage, field: &FlowField) -> f64 {
    let div = divergence(image, field);
    let max_div = div.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let speed = mean_face_speed(image, field);
    if speed > 0.0 {
        max_div * field.pixel_size / speed
    } else {
        max_div
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize_shape, ShapeKind, ShapeSpec};

    fn channel(width: usize, gap: usize) -> PoreImage {
        // Solid top and bottom rows, void gap in between.
        PoreImage::from_fn(width, gap + 2, |_, y| y >= 1 && y <= gap)
    }

    #[test]
    fn zero_forcing_gives_zero_field() {
        let img = channel(8, 6);
        let props = FluidProps {
            body_force: Vec2::ZERO,
            ..FluidProps::default()
        };
        let (field, report) = solve_flow(&img, &props, &SolverOptions::default()).unwrap();
        assert!(field.u.iter().all(|&x| x == 0.0));
        assert!(field.v.iter().all(|&x| x == 0.0));
        assert!(field.p.iter().all(|&x| x == 0.0));
        assert_eq!(report.momentum_residual, 0.0);
    }

    #[test]
    fn all_void_is_no_drag() {
        let img = PoreImage::filled(8, 8, true);
        assert!(matches!(
            solve_flow(&img, &FluidProps::default(), &SolverOptions::default()),
            Err(FlowError::NoDrag)
        ));
    }

    #[test]
    fn disconnected_void_rejected() {
        let mut img = PoreImage::filled(8, 8, false);
        for x in 0..8 {
            img.set(x, 1, true);
            img.set(x, 5, true);
        }
        assert!(matches!(
            solve_flow(&img, &FluidProps::default(), &SolverOptions::default()),
            Err(FlowError::NotPreprocessed(_))
        ));
    }

    /// Analytic plane-Poiseuille oracle: u(y) = f y (d - y) / (2 mu), mean
    /// u over the gap = f d^2 / (12 mu). 64 cells across the gap.
    #[test]
    fn plane_poiseuille_mean_velocity() {
        let gap = 64usize;
        let img = channel(8, gap);
        let props = FluidProps::default();
        let (field, report) = solve_flow(&img, &props, &SolverOptions::default()).unwrap();
        let h = img.pixel_size();
        let d = gap as f64 * h;
        let analytic_mean = props.body_force.x * d * d / (12.0 * props.viscosity);
        let w = img.width();
        let mut mean = 0.0;
        for y in 1..=gap {
            mean += field.u[y * w]; // face column i = 0
        }
        mean /= gap as f64;
        let rel = (mean - analytic_mean).abs() / analytic_mean;
        assert!(rel < 0.02, "mean {mean} vs analytic {analytic_mean} (rel {rel:.2e})");
        assert!(report.mass_residual <= 1e-10, "mass {}", report.mass_residual);
        let vmax = field.v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(vmax < 1e-10 * mean.abs());
    }

    /// The parabola itself: compare pointwise against the analytic profile.
    #[test]
    fn plane_poiseuille_profile_shape() {
        let gap = 32usize;
        let img = channel(4, gap);
        let props = FluidProps::default();
        let (field, _) = solve_flow(&img, &props, &SolverOptions::default()).unwrap();
        let h = img.pixel_size();
        let d = gap as f64 * h;
        for y in 1..=gap {
            let yc = (y as f64 - 0.5) * h; // distance from the lower wall
            let analytic = props.body_force.x * yc * (d - yc) / (2.0 * props.viscosity);
            let got = field.u[y * img.width()];
            assert!(
                (got - analytic).abs() <= 0.03 * analytic.max(1e-30),
                "row {y}: {got} vs {analytic}"
            );
        }
    }

    #[test]
    fn centered_circle_has_zero_mean_v() {
        let img = rasterize_shape(&ShapeSpec::new(ShapeKind::Circle, 0.25), 32).unwrap();
        let (field, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default())
            .unwrap();
        let centers = interpolate_to_centers(&img, &field);
        let mean_v: f64 = centers.iter().map(|c| c.y).sum::<f64>() / centers.len() as f64;
        let mean_u: f64 = centers.iter().map(|c| c.x).sum::<f64>() / centers.len() as f64;
        assert!(mean_u > 0.0);
        assert!(mean_v.abs() <= 1e-9 * mean_u, "mean v {mean_v} vs mean u {mean_u}");
    }

    #[test]
    fn mass_conservation_per_cell() {
        let img = rasterize_shape(
            &ShapeSpec::new(ShapeKind::Ellipse, 0.3)
                .with_aspect(2.0)
                .with_rotation(30.0),
            32,
        )
        .unwrap();
        let (field, report) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default())
            .unwrap();
        assert!(report.mass_residual <= 1e-10);
        assert!(max_divergence_rel(&img, &field) <= 1e-10);
    }

    #[test]
    fn no_slip_faces_are_exactly_zero() {
        let img = rasterize_shape(&ShapeSpec::new(ShapeKind::Square, 0.4), 24).unwrap();
        let (field, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default())
            .unwrap();
        let (w, h) = (img.width(), img.height());
        for j in 0..h {
            for i in 0..w {
                let c = j * w + i;
                let west = j * w + (i + w - 1) % w;
                let south = ((j + h - 1) % h) * w + i;
                if !(img.cells()[c] && img.cells()[west]) {
                    assert_eq!(field.u[c], 0.0);
                }
                if !(img.cells()[c] && img.cells()[south]) {
                    assert_eq!(field.v[c], 0.0);
                }
            }
        }
    }

    /// Mirroring the geometry across the x-axis mirrors u and negates v.
    #[test]
    fn mirror_symmetry() {
        let img = rasterize_shape(
            &ShapeSpec::new(ShapeKind::Triangle, 0.35).with_rotation(20.0),
            24,
        )
        .unwrap();
        let (field, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default())
            .unwrap();
        let flipped = img.flipped_y();
        let (mirror, _) = solve_flow(&flipped, &FluidProps::default(), &SolverOptions::default())
            .unwrap();
        let (w, h) = (img.width(), img.height());
        let scale = field.u.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for j in 0..h {
            for i in 0..w {
                let c = j * w + i;
                let mj = h - 1 - j;
                let mu = mirror.u[mj * w + i];
                assert!(
                    (field.u[c] - mu).abs() <= 1e-7 * scale,
                    "u mismatch at ({i},{j}): {} vs {}",
                    field.u[c],
                    mu
                );
                // v face (i, j) sits on row boundary j, which mirrors to
                // boundary (h - j) mod h with a sign flip.
                let mv = mirror.v[((h - j) % h) * w + i];
                assert!((field.v[c] + mv).abs() <= 1e-7 * scale);
            }
        }
    }

    /// Stokes linearity: scaling the body force scales the solution.
    #[test]
    fn stokes_linearity() {
        let img = rasterize_shape(&ShapeSpec::new(ShapeKind::Circle, 0.3), 24).unwrap();
        let (f1, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default()).unwrap();
        let props3 = FluidProps {
            body_force: Vec2::new(3.0, 0.0),
            ..FluidProps::default()
        };
        let (f3, _) = solve_flow(&img, &props3, &SolverOptions::default()).unwrap();
        let scale = f3.u.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for i in 0..f1.u.len() {
            assert!((3.0 * f1.u[i] - f3.u[i]).abs() <= 1e-7 * scale);
            assert!((3.0 * f1.v[i] - f3.v[i]).abs() <= 1e-7 * scale);
        }
    }

    /// Poiseuille flow is an exact Navier-Stokes solution (convection
    /// vanishes for parallel flow), so the Picard path must reproduce the
    /// Stokes answer.
    #[test]
    fn navier_stokes_matches_stokes_in_channel() {
        let img = channel(6, 16);
        let ns_opts = SolverOptions {
            navier_stokes: true,
            ..SolverOptions::default()
        };
        let (a, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default()).unwrap();
        let (b, rep) = solve_flow(&img, &FluidProps::default(), &ns_opts).unwrap();
        assert!(rep.picard_iterations >= 1);
        let scale = a.u.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
        for i in 0..a.u.len() {
            assert!((a.u[i] - b.u[i]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn interpolate_trivials() {
        let img = PoreImage::from_fn(4, 4, |x, y| !(x == 2 && y == 2));
        let mut field = FlowField::zeros(4, 4, img.pixel_size());
        for j in 0..4 {
            for i in 0..4 {
                let c = j * 4 + i;
                let west = j * 4 + (i + 3) % 4;
                if img.cells()[c] && img.cells()[west] {
                    field.u[c] = 1.0;
                }
            }
        }
        let centers = interpolate_to_centers(&img, &field);
        assert_eq!(centers[2 * 4 + 2], Vec2::ZERO, "solid cell stays zero");
        assert_eq!(centers[0], Vec2::new(1.0, 0.0), "uniform faces average to 1");
        let mut f2 = FlowField::zeros(4, 4, img.pixel_size());
        f2.u[0] = 0.0;
        f2.u[1] = 2.0;
        let c = interpolate_to_centers(&img, &f2);
        assert_eq!(c[0].x, 1.0, "faces 0 and 2 average to the center value 1");
    }

    #[test]
    fn field_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = rasterize_shape(&ShapeSpec::new(ShapeKind::Circle, 0.2), 16).unwrap();
        let (field, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default())
            .unwrap();
        let path = dir.path().join("flow.field");
        field.save(&path).unwrap();
        let loaded = FlowField::load(&path).unwrap();
        assert_eq!(field, loaded);
    }
}
