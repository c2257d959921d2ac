use pdl_core::flow::{solve_flow, FluidProps, SolverOptions};
use pdl_core::geometry::{rasterize_shape, ShapeKind, ShapeSpec};
use pdl_core::transport::{advect, build_extended, AdvectOptions};
use pdl_core::upscaling::extract_dispersivities;

fn run(spec: &ShapeSpec, res: usize) -> (f64, f64, f64) {
    let img = rasterize_shape(spec, res).unwrap();
    let (field, _) = solve_flow(&img, &FluidProps::default(), &SolverOptions::default()).unwrap();
    let domain = build_extended(&img, &field).unwrap();
    let t0 = std::time::Instant::now();
    let run = advect(&domain, &AdvectOptions::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let r = extract_dispersivities(&img, &field, &domain, &run.snapshots).unwrap();
    eprintln!("  steps {} window ({:.1},{:.1}) transport {:.2}s degen_frac {:.2}", run.steps, run.window.0, run.window.1, secs, r.stats.frac_t_degenerate);
    (r.pair.alpha_l, r.pair.alpha_t, r.v_bar.norm())
}

fn main() {
    println!("circle sweep at 64:");
    for ratio in [0.08, 0.14, 0.20, 0.26, 0.32, 0.38] {
        let t = std::time::Instant::now();
        let (al, at, vn) = run(&ShapeSpec::new(ShapeKind::Circle, ratio), 64);
        println!("  r/L {ratio}: alpha_L {al:.5} alpha_T {at:.3e} |v| {vn:.4e}  ({:.1}s)", t.elapsed().as_secs_f64());
    }
    println!("ellipse 2:1 rotations at 64:");
    for rot in [0.0, 30.0, 90.0, 180.0] {
        let spec = ShapeSpec::new(ShapeKind::Ellipse, 0.3).with_aspect(2.0).with_rotation(rot);
        let (al, at, _) = run(&spec, 64);
        println!("  rot {rot}: alpha_L {al:.5} alpha_T {at:.4e}");
    }
}
