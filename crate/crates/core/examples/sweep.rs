use cutfem_core::stepper::*;
use cutfem_core::mesh::*;
use cutfem_core::problems;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let nu: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let skip: bool = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(false);
    // kite acceptance grid: Lx=0..3 (nx = 8 * 2^Lx), Lt=0..5 (N = 2^Lt)
    println!("nu={nu} skip_plus_layers={skip}");
    println!("{:>4} {:>4} {:>12} {:>12} {:>8}", "Lx", "Lt", "LinfL2", "L2H1", "secs");
    for lx in 0..=3usize {
        let nx = 8 << lx;
        let mesh = BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal).unwrap();
        for lt in 0..=5usize {
            let mut cfg = StepperConfig::new(problems::kite(), mesh.clone());
            cfg.nu = nu; cfg.r = 2; cfg.n_steps = 1 << lt; cfg.validate_source = false;
            cfg.ratio_guard = GuardMode::Warn;
            cfg.skip_plus_layers = skip;
            let t0 = std::time::Instant::now();
            match Stepper::new(cfg).and_then(|s| s.run()) {
                Ok(st) => println!("{:>4} {:>4} {:>12.5e} {:>12.5e} {:>8.2}", lx, lt, st.norms.linf_l2, st.norms.l2h1(), t0.elapsed().as_secs_f64()),
                Err(e) => println!("{:>4} {:>4} ERROR {e}", lx, lt),
            }
        }
    }
}
