//! Benchmarks of the per-step kernels on a moderate kite configuration.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use cutfem_core::assembly::{
    assemble_bilinear, assemble_ghost_penalty, assemble_mass, assemble_step_system, FormVariant,
    SchemeParams, StepGeometry,
};
use cutfem_core::fespace::{FEField, ScalarSpace};
use cutfem_core::isoparam::MeshDeformation;
use cutfem_core::levelset::{active_sets, ActiveSetOpts, LevelSetSlice};
use cutfem_core::mesh::{BackgroundMesh, MeshPattern};
use cutfem_core::solver::{solve, SolveMethod};
use cutfem_core::transfer::project;
use cutfem_core::problems;

struct World {
    space: Arc<ScalarSpace>,
    slice: LevelSetSlice,
    theta: Arc<MeshDeformation>,
    theta_prev: Arc<MeshDeformation>,
    active: cutfem_core::ActiveSlice,
    active_prev: cutfem_core::ActiveSlice,
    params: SchemeParams,
}

fn setup(nx: usize) -> World {
    let problem = problems::kite();
    let mesh =
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal)
            .unwrap();
    let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
    let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
    let phi = problem.phi.clone();
    let phi2 = problem.phi.clone();
    let dt = 1.0 / 16.0;
    let slice_prev =
        LevelSetSlice::discretize(&move |x, t| phi2(x, t), 0.5 - dt, space.clone(), id.clone())
            .unwrap();
    let slice =
        LevelSetSlice::discretize(&move |x, t| phi(x, t), 0.5, space.clone(), id).unwrap();
    let theta_prev =
        MeshDeformation::build(&slice_prev, space.clone(), Default::default()).unwrap();
    let theta = MeshDeformation::build(&slice, space.clone(), Default::default()).unwrap();
    let delta = 0.03;
    let active_prev = active_sets(&slice_prev, delta, 2, &space, ActiveSetOpts::default());
    let active = active_sets(&slice, delta, 2, &space, ActiveSetOpts::default());
    let params = SchemeParams {
        nu: 1.0,
        velocity: problem.velocity.clone(),
        velocity_div: problem.velocity_div.clone(),
        source: problem.source(1.0).unwrap(),
        r: 2,
        delta,
        c_gamma: 0.1,
        form_variant: FormVariant::Experiment,
        quad_volume: None,
        quad_interface: None,
    };
    World { space, slice, theta, theta_prev, active, active_prev, params }
}

fn bench_pipeline(c: &mut Criterion) {
    let w = setup(32);
    let geo = StepGeometry { slice: &w.slice, active: &w.active, theta: &w.theta };

    c.bench_function("deformation_build_32", |b| {
        b.iter(|| {
            MeshDeformation::build(black_box(&w.slice), w.space.clone(), Default::default())
                .unwrap()
        })
    });

    c.bench_function("active_sets_32", |b| {
        b.iter(|| active_sets(&w.slice, 0.03, 2, &w.space, ActiveSetOpts::default()))
    });

    let u_prev = FEField::interpolate(w.space.clone(), w.theta_prev.clone(), &|x| {
        (x[0] + 0.3 * x[1]).sin()
    })
    .unwrap();
    c.bench_function("project_32", |b| {
        b.iter(|| {
            project(&u_prev, &w.theta, &w.active, Some(&w.active_prev), Default::default())
                .unwrap()
        })
    });

    c.bench_function("assemble_mass_32", |b| {
        b.iter(|| assemble_mass(&geo, &w.space, 6).unwrap())
    });
    c.bench_function("assemble_bilinear_32", |b| {
        b.iter(|| assemble_bilinear(&geo, &w.space, &w.params).unwrap())
    });
    c.bench_function("assemble_ghost_penalty_32", |b| {
        b.iter(|| assemble_ghost_penalty(&geo, &w.space, &w.params).unwrap())
    });

    let hist0 = FEField::zero(w.space.clone(), w.theta.clone());
    let hist1 = FEField::zero(w.space.clone(), w.theta.clone());
    let sys = assemble_step_system(&geo, &w.space, &[&hist0, &hist1], &w.params, 1.0 / 16.0, 0.5)
        .unwrap();
    c.bench_function("solve_direct_32", |b| {
        b.iter(|| solve(black_box(&sys.system), SolveMethod::Direct).unwrap())
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
