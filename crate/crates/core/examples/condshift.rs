use cutfem_core::assembly::*;
use cutfem_core::fespace::{FEField, ScalarSpace};
use cutfem_core::isoparam::MeshDeformation;
use cutfem_core::levelset::{active_sets, verify_path_assumption, ActiveSetOpts, LevelSetSlice};
use cutfem_core::mesh::{BackgroundMesh, MeshPattern};
use cutfem_core::problems;
use std::sync::Arc;

fn study(nx: usize, radius: f64, dt: f64, c_gamma: f64, formula_gamma: bool) -> (f64, Vec<f64>) {
    let mesh = BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal).unwrap();
    let h_cell = 2.0 / nx as f64;
    let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
    let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
    let mut conds = Vec::new();
    for i in 0..20 {
        let dx = h_cell * i as f64 / 20.0;
        let problem = problems::circle_shifted(radius, dx, 0.0);
        let phi = problem.phi.clone();
        let slice = LevelSetSlice::discretize(&move |x, t| phi(x, t), 0.0, space.clone(), id.clone()).unwrap();
        let theta = MeshDeformation::build(&slice, space.clone(), Default::default()).unwrap();
        let active = active_sets(&slice, 0.0, 1, &space, ActiveSetOpts::default());
        let stats = verify_path_assumption(&active, &slice, &mesh).unwrap();
        let gamma = if formula_gamma { c_gamma } else { c_gamma * stats.k_actual as f64 };
        let params = SchemeParams {
            nu: 1.0,
            velocity: Arc::new(|_, _| [0.0, 0.0]),
            velocity_div: Arc::new(|_, _| 0.0),
            source: Arc::new(|_, _| 0.0),
            r: 1, delta: 0.0, c_gamma,
            form_variant: FormVariant::Experiment,
            quad_volume: None, quad_interface: None,
        };
        let geo = StepGeometry { slice: &slice, active: &active, theta: &theta };
        let hist = FEField::zero(space.clone(), theta.clone());
        let sys = assemble_step_system(&geo, &space, &[&hist], &params, dt, gamma).unwrap();
        conds.push(cutfem_core::solver::condition_number_dense(&sys.system.matrix));
    }
    let max = conds.iter().cloned().fold(0.0f64, f64::max);
    let min = conds.iter().cloned().fold(f64::INFINITY, f64::min);
    (max / min, conds)
}

fn main() {
    for radius in [1.0/3.0, 0.3] {
        for dt in [0.1, 0.01] {
            for (cg, formula) in [(0.1, false), (0.5, false), (1.0, false), (0.5, true), (1.0, true)] {
                let (var, _) = study(16, radius, dt, cg, formula);
                println!("radius={radius:.3} dt={dt} c_gamma={cg} formula={formula}: variation {var:.2}x");
            }
        }
    }
}
