//! Matrix-free MAC operators and the nested Schur-complement CG solve.
//!
//! Unknowns: x-velocities u on vertical faces (u[j*W+i] sits between cells
//! ((i-1) mod W, j) and (i, j)), y-velocities v on horizontal faces
//! (v[j*W+i] between cells (i, (j-1) mod H) and (i, j)), and cell pressures.
//! A face is active iff both adjacent cells are void; inactive faces carry
//! exactly zero velocity (no-slip walls and solid interiors).
//!
//! The viscous stencil is the 5-point Laplacian. An inactive neighbor in the
//! face-normal direction is a Dirichlet zero at the neighbor's own location
//! (the wall passes through that face); an inactive tangential neighbor is a
//! ghost reflection (u_ghost = -u), which puts the no-slip wall on the cell
//! face between them and adds one to the stencil diagonal.

use super::{FlowError, SolverOptions};
use crate::geometry::PoreImage;

pub(super) struct MacOperators {
    pub w: usize,
    pub h: usize,
    pub hpx: f64,
    pub mu: f64,
    pub active_u: Vec<bool>,
    pub active_v: Vec<bool>,
    pub u_faces: Vec<u32>,
    pub v_faces: Vec<u32>,
    pub cells: Vec<u32>,
    diag_u: Vec<f64>,
    diag_v: Vec<f64>,
}

impl MacOperators {
    pub fn new(image: &PoreImage, mu: f64) -> Self {
        let (w, h) = (image.width(), image.height());
        let n = w * h;
        let mut active_u = vec![false; n];
        let mut active_v = vec![false; n];
        let void_cell: Vec<bool> = image.cells().to_vec();
        for j in 0..h {
            for i in 0..w {
                let c = j * w + i;
                let west = j * w + (i + w - 1) % w;
                let south = ((j + h - 1) % h) * w + i;
                active_u[c] = void_cell[c] && void_cell[west];
                active_v[c] = void_cell[c] && void_cell[south];
            }
        }
        let u_faces: Vec<u32> = (0..n).filter(|&i| active_u[i]).map(|i| i as u32).collect();
        let v_faces: Vec<u32> = (0..n).filter(|&i| active_v[i]).map(|i| i as u32).collect();
        let cells: Vec<u32> = (0..n).filter(|&i| void_cell[i]).map(|i| i as u32).collect();

        let mut diag_u = vec![0.0; n];
        let mut diag_v = vec![0.0; n];
        for &f in &u_faces {
            let (i, j) = ((f as usize) % w, (f as usize) / w);
            let north = ((j + 1) % h) * w + i;
            let south = ((j + h - 1) % h) * w + i;
            let mut d = 4.0;
            if !active_u[north] {
                d += 1.0;
            }
            if !active_u[south] {
                d += 1.0;
            }
            diag_u[f as usize] = d;
        }
        for &f in &v_faces {
            let (i, j) = ((f as usize) % w, (f as usize) / w);
            let east = j * w + (i + 1) % w;
            let west = j * w + (i + w - 1) % w;
            let mut d = 4.0;
            if !active_v[east] {
                d += 1.0;
            }
            if !active_v[west] {
                d += 1.0;
            }
            diag_v[f as usize] = d;
        }
        MacOperators {
            w,
            h,
            hpx: image.pixel_size(),
            mu,
            active_u,
            active_v,
            u_faces,
            v_faces,
            cells,
            diag_u,
            diag_v,
        }
    }

    pub fn n(&self) -> usize {
        self.w * self.h
    }

    /// A x = -mu * Laplacian(x) on active faces (zero elsewhere).
    pub fn apply_a(&self, xu: &[f64], xv: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        let k = self.mu / (self.hpx * self.hpx);
        out_u.fill(0.0);
        out_v.fill(0.0);
        for &f in &self.u_faces {
            let f = f as usize;
            let (i, j) = (f % w, f / w);
            let e = j * w + (i + 1) % w;
            let ww = j * w + (i + w - 1) % w;
            let nn = ((j + 1) % h) * w + i;
            let ss = ((j + h - 1) % h) * w + i;
            let mut acc = self.diag_u[f] * xu[f];
            if self.active_u[e] {
                acc -= xu[e];
            }
            if self.active_u[ww] {
                acc -= xu[ww];
            }
            if self.active_u[nn] {
                acc -= xu[nn];
            }
            if self.active_u[ss] {
                acc -= xu[ss];
            }
            out_u[f] = k * acc;
        }
        for &f in &self.v_faces {
            let f = f as usize;
            let (i, j) = (f % w, f / w);
            let e = j * w + (i + 1) % w;
            let ww = j * w + (i + w - 1) % w;
            let nn = ((j + 1) % h) * w + i;
            let ss = ((j + h - 1) % h) * w + i;
            let mut acc = self.diag_v[f] * xv[f];
            if self.active_v[e] {
                acc -= xv[e];
            }
            if self.active_v[ww] {
                acc -= xv[ww];
            }
            if self.active_v[nn] {
                acc -= xv[nn];
            }
            if self.active_v[ss] {
                acc -= xv[ss];
            }
            out_v[f] = k * acc;
        }
    }

    /// Discrete divergence at void cells: (u_E - u_W + v_N - v_S) / h.
    pub fn divergence(&self, xu: &[f64], xv: &[f64], out: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        out.fill(0.0);
        for &c in &self.cells {
            let c = c as usize;
            let (i, j) = (c % w, c / w);
            let east = j * w + (i + 1) % w;
            let north = ((j + 1) % h) * w + i;
            out[c] = (xu[east] - xu[c] + xv[north] - xv[c]) / self.hpx;
        }
    }

    /// Pressure gradient on active faces: (p_cell - p_upwind_cell) / h.
    pub fn gradient(&self, p: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        out_u.fill(0.0);
        out_v.fill(0.0);
        for &f in &self.u_faces {
            let f = f as usize;
            let (i, j) = (f % w, f / w);
            let west = j * w + (i + w - 1) % w;
            out_u[f] = (p[f] - p[west]) / self.hpx;
        }
        for &f in &self.v_faces {
            let f = f as usize;
            let (i, j) = (f % w, f / w);
            let south = ((j + h - 1) % h) * w + i;
            out_v[f] = (p[f] - p[south]) / self.hpx;
        }
    }

    fn dot_faces(&self, au: &[f64], av: &[f64], bu: &[f64], bv: &[f64]) -> f64 {
        let mut s = 0.0;
        for &f in &self.u_faces {
            s += au[f as usize] * bu[f as usize];
        }
        for &f in &self.v_faces {
            s += av[f as usize] * bv[f as usize];
        }
        s
    }

    fn dot_cells(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cells.iter().map(|&c| a[c as usize] * b[c as usize]).sum()
    }

    fn project_mean_cells(&self, x: &mut [f64]) {
        let mean = self.cells.iter().map(|&c| x[c as usize]).sum::<f64>() / self.cells.len() as f64;
        for &c in &self.cells {
            x[c as usize] -= mean;
        }
    }

    pub fn mean_face_speed(&self, xu: &[f64], xv: &[f64]) -> f64 {
        let n = self.u_faces.len() + self.v_faces.len();
        if n == 0 {
            return 0.0;
        }
        let s: f64 = self
            .u_faces
            .iter()
            .map(|&f| xu[f as usize].abs())
            .chain(self.v_faces.iter().map(|&f| xv[f as usize].abs()))
            .sum();
        s / n as f64
    }

    /// Jacobi-preconditioned CG for A x = b on the active faces. `x` holds
    /// the initial guess on entry and the solution on exit. Returns the
    /// iteration count.
    pub fn solve_a(
        &self,
        bu: &[f64],
        bv: &[f64],
        xu: &mut [f64],
        xv: &mut [f64],
        rel_tol: f64,
        max_iter: usize,
    ) -> Result<usize, FlowError> {
        let n = self.n();
        let k = self.mu / (self.hpx * self.hpx);
        let b_norm = self.dot_faces(bu, bv, bu, bv).sqrt();
        if b_norm == 0.0 {
            for &f in &self.u_faces {
                xu[f as usize] = 0.0;
            }
            for &f in &self.v_faces {
                xv[f as usize] = 0.0;
            }
            return Ok(0);
        }
        let tol = rel_tol * b_norm;
        let mut ru = vec![0.0; n];
        let mut rv = vec![0.0; n];
        self.apply_a(xu, xv, &mut ru, &mut rv);
        for &f in &self.u_faces {
            let f = f as usize;
            ru[f] = bu[f] - ru[f];
        }
        for &f in &self.v_faces {
            let f = f as usize;
            rv[f] = bv[f] - rv[f];
        }
        let mut zu = vec![0.0; n];
        let mut zv = vec![0.0; n];
        let precond = |z: &mut [f64], r: &[f64], faces: &[u32], diag: &[f64]| {
            for &f in faces {
                let f = f as usize;
                z[f] = r[f] / (k * diag[f]);
            }
        };
        precond(&mut zu, &ru, &self.u_faces, &self.diag_u);
        precond(&mut zv, &rv, &self.v_faces, &self.diag_v);
        let mut du = zu.clone();
        let mut dv = zv.clone();
        let mut rz = self.dot_faces(&ru, &rv, &zu, &zv);
        let mut adu = vec![0.0; n];
        let mut adv = vec![0.0; n];
        for it in 0..max_iter {
            let r_norm = self.dot_faces(&ru, &rv, &ru, &rv).sqrt();
            if r_norm <= tol {
                return Ok(it);
            }
            self.apply_a(&du, &dv, &mut adu, &mut adv);
            let dad = self.dot_faces(&du, &dv, &adu, &adv);
            if dad <= 0.0 {
                return Err(FlowError::Convergence {
                    stage: "velocity cg lost positive definiteness".into(),
                    residual: r_norm / b_norm,
                    iterations: it,
                });
            }
            let alpha = rz / dad;
            for &f in &self.u_faces {
                let f = f as usize;
                xu[f] += alpha * du[f];
                ru[f] -= alpha * adu[f];
            }
            for &f in &self.v_faces {
                let f = f as usize;
                xv[f] += alpha * dv[f];
                rv[f] -= alpha * adv[f];
            }
            precond(&mut zu, &ru, &self.u_faces, &self.diag_u);
            precond(&mut zv, &rv, &self.v_faces, &self.diag_v);
            let rz_new = self.dot_faces(&ru, &rv, &zu, &zv);
            let beta = rz_new / rz;
            rz = rz_new;
            for &f in &self.u_faces {
                let f = f as usize;
                du[f] = zu[f] + beta * du[f];
            }
            for &f in &self.v_faces {
                let f = f as usize;
                dv[f] = zv[f] + beta * dv[f];
            }
        }
        let r_norm = self.dot_faces(&ru, &rv, &ru, &rv).sqrt();
        Err(FlowError::Convergence {
            stage: "velocity cg".into(),
            residual: r_norm / b_norm,
            iterations: max_iter,
        })
    }

    /// Outer CG on the pressure Schur complement S = D A^-1 D^T, with the
    /// velocity updated alongside: on return `(xu, xv)` solve the momentum
    /// equation with the returned pressure and their divergence matches the
    /// final Schur residual. Stops when the cell mass residual (relative to
    /// the mean face speed) reaches `opts.mass_tol`.
    #[allow(clippy::too_many_arguments)]
    pub fn schur_solve(
        &self,
        xu: &mut [f64],
        xv: &mut [f64],
        p: &mut [f64],
        opts: &SolverOptions,
        history: &mut Vec<f64>,
    ) -> Result<usize, FlowError> {
        let n = self.n();
        let mut r = vec![0.0; n];
        self.divergence(xu, xv, &mut r);
        for &c in &self.cells {
            r[c as usize] = -r[c as usize];
        }
        self.project_mean_cells(&mut r);
        let mut d = r.clone();
        let mut rs = self.dot_cells(&r, &r);
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        let mut wu = vec![0.0; n];
        let mut wv = vec![0.0; n];
        let mut sd = vec![0.0; n];
        let mut total_inner = 0usize;
        for it in 0..opts.max_outer {
            // Mass residual check: r = -div(u) holds by construction.
            let max_div = self.cells.iter().map(|&c| r[c as usize].abs()).fold(0.0, f64::max);
            let speed = self.mean_face_speed(xu, xv);
            let rel = if speed > 0.0 {
                max_div * self.hpx / speed
            } else {
                max_div
            };
            history.push(rel);
            if rel <= opts.mass_tol {
                self.project_mean_cells(p);
                return Ok(total_inner);
            }
            self.gradient(&d, &mut gu, &mut gv);
            for &f in &self.u_faces {
                wu[f as usize] = 0.0;
            }
            for &f in &self.v_faces {
                wv[f as usize] = 0.0;
            }
            total_inner +=
                self.solve_a(&gu, &gv, &mut wu, &mut wv, opts.inner_tol, opts.max_inner)?;
            self.divergence(&wu, &wv, &mut sd);
            for &c in &self.cells {
                sd[c as usize] = -sd[c as usize];
            }
            self.project_mean_cells(&mut sd);
            let dsd = self.dot_cells(&d, &sd);
            if dsd <= 0.0 {
                return Err(FlowError::Convergence {
                    stage: "schur cg lost positive definiteness".into(),
                    residual: rel,
                    iterations: it,
                });
            }
            let alpha = rs / dsd;
            for &c in &self.cells {
                let c = c as usize;
                p[c] += alpha * d[c];
                r[c] -= alpha * sd[c];
            }
            for &f in &self.u_faces {
                let f = f as usize;
                xu[f] -= alpha * wu[f];
            }
            for &f in &self.v_faces {
                let f = f as usize;
                xv[f] -= alpha * wv[f];
            }
            self.project_mean_cells(&mut r);
            let rs_new = self.dot_cells(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            for &c in &self.cells {
                let c = c as usize;
                d[c] = r[c] + beta * d[c];
            }
        }
        let max_div = self.cells.iter().map(|&c| r[c as usize].abs()).fold(0.0, f64::max);
        let speed = self.mean_face_speed(xu, xv);
        Err(FlowError::Convergence {
            stage: "schur cg".into(),
            residual: if speed > 0.0 { max_div * self.hpx / speed } else { max_div },
            iterations: opts.max_outer,
        })
    }

    /// Divergence-polish projection: subtracts a masked potential gradient so
    /// the per-cell divergence drops to rounding level. The potential solves
    /// the cell Poisson problem with solid-wall (zero-gradient) boundaries.
    /// `abs_tol` bounds the final l2 norm of the divergence (units 1/time);
    /// pass a few ulps of mean_face_speed / h.
    pub fn polish_divergence(
        &self,
        xu: &mut [f64],
        xv: &mut [f64],
        abs_tol: f64,
        max_iter: usize,
    ) -> Result<(), FlowError> {
        // Correction u += grad(phi) with -Lap(phi) = +div(u) cancels the
        // divergence: div(u + grad phi) = div u + Lap phi = 0.
        let n = self.n();
        let mut rhs = vec![0.0; n];
        self.divergence(xu, xv, &mut rhs);
        self.project_mean_cells(&mut rhs);
        // CG on P(q) = -div(masked_grad(q)), SPD on mean-zero cell vectors.
        let mut phi = vec![0.0; n];
        let mut r = rhs.clone();
        let mut d = r.clone();
        let mut rs = self.dot_cells(&r, &r);
        if rs.sqrt() <= abs_tol {
            return Ok(());
        }
        let tol = abs_tol;
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        let mut pd = vec![0.0; n];
        for _ in 0..max_iter {
            if rs.sqrt() <= tol {
                break;
            }
            self.gradient(&d, &mut gu, &mut gv);
            self.divergence(&gu, &gv, &mut pd);
            for &c in &self.cells {
                pd[c as usize] = -pd[c as usize];
            }
            self.project_mean_cells(&mut pd);
            let dpd = self.dot_cells(&d, &pd);
            if dpd <= 0.0 {
                break;
            }
            let alpha = rs / dpd;
            for &c in &self.cells {
                let c = c as usize;
                phi[c] += alpha * d[c];
                r[c] -= alpha * pd[c];
            }
            self.project_mean_cells(&mut r);
            let rs_new = self.dot_cells(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            for &c in &self.cells {
                let c = c as usize;
                d[c] = r[c] + beta * d[c];
            }
        }
        self.gradient(&phi, &mut gu, &mut gv);
        for &f in &self.u_faces {
            let f = f as usize;
            xu[f] += gu[f];
        }
        for &f in &self.v_faces {
            let f = f as usize;
            xv[f] += gv[f];
        }
        Ok(())
    }

    /// Relative momentum residual ||f - A u - grad p|| / ||f|| over active faces.
    pub fn momentum_residual(
        &self,
        xu: &[f64],
        xv: &[f64],
        p: &[f64],
        fu: &[f64],
        fv: &[f64],
    ) -> f64 {
        let n = self.n();
        let mut au = vec![0.0; n];
        let mut av = vec![0.0; n];
        self.apply_a(xu, xv, &mut au, &mut av);
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        self.gradient(p, &mut gu, &mut gv);
        let mut rr = 0.0;
        let mut ff = 0.0;
        for &f in &self.u_faces {
            let f = f as usize;
            let r = fu[f] - au[f] - gu[f];
            rr += r * r;
            ff += fu[f] * fu[f];
        }
        for &f in &self.v_faces {
            let f = f as usize;
            let r = fv[f] - av[f] - gv[f];
            rr += r * r;
            ff += fv[f] * fv[f];
        }
        if ff == 0.0 {
            rr.sqrt()
        } else {
            (rr / ff).sqrt()
        }
    }

    /// Convective term of the momentum balance, rho * div(v v^T), evaluated
    /// with centered interpolations on the MAC grid. Zero-velocity faces at
    /// walls embed the no-slip condition into the interpolants.
    pub fn convection(&self, rho: f64, xu: &[f64], xv: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        let hp = self.hpx;
        out_u.fill(0.0);
        out_v.fill(0.0);
        let uc = |i: usize, j: usize| {
            let c = j * w + i;
            let e = j * w + (i + 1) % w;
            0.5 * (xu[c] + xu[e])
        };
        let vc = |i: usize, j: usize| {
            let c = j * w + i;
            let nn = ((j + 1) % h) * w + i;
            0.5 * (xv[c] + xv[nn])
        };
        // Corner (i, j): intersection of u-face column i and v-face row j.
        let u_corner = |i: usize, j: usize| {
            let c = j * w + i;
            let s = ((j + h - 1) % h) * w + i;
            0.5 * (xu[c] + xu[s])
        };
        let v_corner = |i: usize, j: usize| {
            let c = j * w + i;
            let ww = j * w + (i + w - 1) % w;
            0.5 * (xv[c] + xv[ww])
        };
        for &f in &self.u_faces {
            let f = f as usize;
            let (i, j) = (f % w, f / w);
            let iw = (i + w - 1) % w;
            let jn = (j + 1) % h;
            let duu = (uc(i, j).powi(2) - uc(iw, j).powi(2)) / hp;
            let duv = (u_corner(i, jn) * v_corner(i, jn) - u_corner(i, j) * v_corner(i, j)) / hp;
            out_u[f] = rho * (duu + duv);
        }
        for &f in &self.v_faces {
            let f = f as usize;
            let (i, j) = (f % w, f / w);
            let js = (j + h - 1) % h;
            let ie = (i + 1) % w;
            let dvv = (vc(i, j).powi(2) - vc(i, js).powi(2)) / hp;
            let duv = (u_corner(ie, j) * v_corner(ie, j) - u_corner(i, j) * v_corner(i, j)) / hp;
            out_v[f] = rho * (duv + dvv);
        }
    }
}
