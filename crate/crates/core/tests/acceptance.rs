//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion summary lines.

use std::sync::Arc;

use cutfem_core::assembly::{assemble_mass, FormVariant, StepGeometry};
use cutfem_core::fespace::{FEField, ScalarSpace};
use cutfem_core::harness::{self, Norm, RunConfig};
use cutfem_core::isoparam::MeshDeformation;
use cutfem_core::levelset::{active_sets, expand_by_vertex_neighbors, ActiveSetOpts, LevelSetSlice};
use cutfem_core::mesh::{BackgroundMesh, MeshPattern};
use cutfem_core::problems;
use cutfem_core::stepper::{GuardMode, StartupPolicy, Stepper, StepperConfig};
use cutfem_core::transfer::project;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

/// Diffusion coefficient of the kite study (a free parameter of the
/// benchmark definition; 1.0 keeps the mesh/time-step ratio guard satisfied
/// on the whole grid).
const KITE_NU: f64 = 1.0;

/// The full kite study grid, run once and shared by both criterion-1 tests.
fn kite_tables() -> &'static harness::ConvergenceTables {
    use std::sync::OnceLock;
    static TABLES: OnceLock<harness::ConvergenceTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut cfg = RunConfig::default();
        cfg.problem = "kite".into();
        cfg.nu = KITE_NU;
        cfg.k = 2;
        cfg.q = 2;
        cfg.r = 2;
        cfg.c_gamma = 0.1;
        cfg.lx = (0, 3);
        cfg.lt = (0, 5);
        cfg.form = FormVariant::Experiment;
        cfg.ratio_guard = GuardMode::Warn;
        cfg.validate_source = false;
        cfg.write_csv = false;
        let tables = harness::run_convergence(&cfg).expect("convergence study");
        for (lx, lt, e) in &tables.failures {
            println!("  cell lx={lx} lt={lt} failed: {e}");
        }
        tables
    })
}

/// Criterion 1 (spatial part): kite study with k = q = 2, r = 2,
/// c_gamma = 0.1, experiment form, Lx = 0..3, Lt = 0..5. Least-squares EOC
/// down the finest Lt column over the last two Lx increments:
/// 2.0 +- 0.4 in L2(H1) and 3.0 +- 0.5 in Linf(L2).
#[test]
fn criterion_1_kite_convergence_spatial() {
    let tables = kite_tables();
    let sx_h1 = tables.spatial_eoc(Norm::L2H1, 2).expect("spatial EOC L2H1");
    let sx_l2 = tables.spatial_eoc(Norm::LinfL2, 2).expect("spatial EOC LinfL2");
    let detail =
        format!("spatial EOC: L2H1 {sx_h1:.2} (2.0+-0.4), LinfL2 {sx_l2:.2} (3.0+-0.5)");
    let pass =
        (sx_h1 - 2.0).abs() <= 0.4 && (sx_l2 - 3.0).abs() <= 0.5 && tables.failures.is_empty();
    check("criterion 1 (kite convergence, spatial)", pass, &detail);
}

/// Criterion 1 (temporal part): least-squares EOC along the finest Lx row
/// over the last two Lt increments, 2.0 +- 0.4 in both norms.
///
/// Known saturation: on the finest row the dt-independent spatial error
/// floor (the superconvergent h^3 / h^2 component) exceeds the BDF2 error at
/// Lt = 4..5 for this manufactured solution at any stable diffusion
/// coefficient, so the measured values sit near zero. The assertion keeps
/// the stated tolerance and fails honestly; the unsaturated low-Lt increments
/// of the same row do show the second-order decay.
#[test]
fn criterion_1_kite_convergence_temporal() {
    let tables = kite_tables();
    let st_h1 = tables.temporal_eoc(Norm::L2H1, 2).expect("temporal EOC L2H1");
    let st_l2 = tables.temporal_eoc(Norm::LinfL2, 2).expect("temporal EOC LinfL2");
    // early-increment reference on the same row, for the failure report
    let row_l2 = tables.linf_l2.last().unwrap();
    let early: Vec<f64> = row_l2[1..4].to_vec();
    let early_rate = harness::least_squares_rate(&early);
    let detail = format!(
        "temporal EOC (last two increments): L2H1 {st_h1:.2}, LinfL2 {st_l2:.2} (2.0+-0.4); \
         unsaturated early increments of the same row give {early_rate:.2}"
    );
    let pass = (st_h1 - 2.0).abs() <= 0.4 && (st_l2 - 2.0).abs() <= 0.4;
    check("criterion 1 (kite convergence, temporal)", pass, &detail);
}

/// Criterion 2: interface level-set residual decays with rate >= q + 0.5
/// over 3 refinements of the static circle, q in {2, 3}.
#[test]
fn criterion_2_geometry_accuracy() {
    let mut all = true;
    let mut details = Vec::new();
    for q in [2usize, 3] {
        let rep = harness::geomcheck(q, 8, 3).expect("geomcheck");
        let ok = rep.rate >= q as f64 + 0.5;
        all &= ok;
        details.push(format!("q={q}: rate {:.2} (>= {:.1})", rep.rate, q as f64 + 0.5));
    }
    check("criterion 2 (geometry accuracy)", all, &details.join("; "));
}

struct KitePair {
    mesh: Arc<BackgroundMesh>,
    space: Arc<ScalarSpace>,
    theta_m: Arc<MeshDeformation>,
    theta_n: Arc<MeshDeformation>,
    source_active: cutfem_core::ActiveSlice,
    target_active: cutfem_core::ActiveSlice,
}

/// Deformation pair at two nearby times of the kite, `gap` apart.
fn kite_pair(lx: usize, k: usize, t0: f64, gap: f64) -> KitePair {
    let problem = problems::kite();
    let nx = 8 << lx;
    let mesh =
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal)
            .unwrap();
    let space = ScalarSpace::build(mesh.clone(), k).unwrap();
    let id = MeshDeformation::identity(mesh.clone(), k).unwrap();
    let phi_m = problem.phi.clone();
    let phi_n = problem.phi.clone();
    let s_m =
        LevelSetSlice::discretize(&move |x, t| phi_m(x, t), t0, space.clone(), id.clone()).unwrap();
    let s_n = LevelSetSlice::discretize(&move |x, t| phi_n(x, t), t0 + gap, space.clone(), id)
        .unwrap();
    let theta_m = MeshDeformation::build(&s_m, space.clone(), Default::default()).unwrap();
    let theta_n = MeshDeformation::build(&s_n, space.clone(), Default::default()).unwrap();
    let delta = 2.0 * mesh.h_max;
    let source_active = active_sets(&s_m, delta + mesh.h_max, 1, &space, ActiveSetOpts::default());
    let target_active = active_sets(&s_n, delta, 1, &space, ActiveSetOpts::default());
    KitePair { mesh, space, theta_m, theta_n, source_active, target_active }
}

/// Criterion 3: projection suite.
#[test]
fn criterion_3_projection_suite() {
    // (a) identity when the deformations coincide
    let p = kite_pair(1, 2, 0.4, 0.0);
    let u = FEField::interpolate(p.space.clone(), p.theta_n.clone(), &|x| {
        (1.7 * x[0] - 0.6 * x[1]).sin()
    })
    .unwrap();
    let (proj, _) = project(&u, &p.theta_n, &p.target_active, None, Default::default()).unwrap();
    let mut max_dev: f64 = 0.0;
    for &g in &p.target_active.active_dofs {
        max_dev = max_dev.max((proj.coeffs[g] - u.coeffs[g]).abs());
    }
    let a_ok = max_dev < 1e-13;

    // (b) constants reproduced
    let c = FEField::interpolate(p.space.clone(), p.theta_m.clone(), &|_| 1.75).unwrap();
    let (pc, _) = project(&c, &p.theta_n, &p.target_active, None, Default::default()).unwrap();
    let mut max_cdev: f64 = 0.0;
    for &g in &p.target_active.active_dofs {
        max_cdev = max_cdev.max((pc.coeffs[g] - 1.75).abs());
    }
    let b_ok = max_cdev < 1e-13;

    // (c) measured stability constants of the L2 and gradient bounds stay
    // <= 4 across Lx = 0..3 on the kite pair
    let mut c_l2_max: f64 = 0.0;
    let mut c_h1_max: f64 = 0.0;
    for lx in 0..=3 {
        let pair = kite_pair(lx, 2, 0.4, pair_gap(lx));
        let mut rng = ChaCha8Rng::seed_from_u64(100 + lx as u64);
        // source region: target elements expanded by one vertex layer
        let mut mask = vec![false; pair.mesh.n_elems()];
        for &t in &pair.target_active.active_elems {
            mask[t] = true;
        }
        let expanded = expand_by_vertex_neighbors(&pair.mesh, &mask);
        let src_elems: Vec<usize> =
            (0..pair.mesh.n_elems()).filter(|&t| expanded[t]).collect();
        let n_fields = if lx < 3 { 60 } else { 20 };
        for _ in 0..n_fields {
            let mut v = FEField::zero(pair.space.clone(), pair.theta_m.clone());
            for &g in &pair.source_active.active_dofs {
                v.coeffs[g] = rng.gen_range(-1.0..1.0);
            }
            let (pv, _) =
                project(&v, &pair.theta_n, &pair.target_active, None, Default::default()).unwrap();
            let num_l2 =
                cutfem_core::assembly::field_l2_on_elems(&pv, &pair.target_active.active_elems)
                    .unwrap();
            let den_l2 = cutfem_core::assembly::field_l2_on_elems(&v, &src_elems).unwrap();
            let num_h1 =
                cutfem_core::assembly::field_h1_on_elems(&pv, &pair.target_active.active_elems)
                    .unwrap();
            let den_h1 = cutfem_core::assembly::field_h1_on_elems(&v, &src_elems).unwrap();
            c_l2_max = c_l2_max.max(num_l2 / den_l2);
            c_h1_max = c_h1_max.max(num_h1 / den_h1);
        }
    }
    let c_ok = c_l2_max <= 4.0 && c_h1_max <= 4.0;

    // (d) interpolant transfer superconvergence: rate >= k + 2.5 with the
    // deformation gap scaled like h^2
    let f = |x: [f64; 2]| (1.3 * x[0] + 0.4 * x[1]).cos() + x[0] * x[1];
    let mut errs = Vec::new();
    for lx in 0..=3 {
        let pair = kite_pair(lx, 2, 0.4, pair_gap(lx));
        let u_m = FEField::interpolate(pair.space.clone(), pair.theta_m.clone(), &f).unwrap();
        let direct = FEField::interpolate(pair.space.clone(), pair.theta_n.clone(), &f).unwrap();
        let (mut diff, _) =
            project(&u_m, &pair.theta_n, &pair.target_active, None, Default::default()).unwrap();
        for g in 0..pair.space.n_dofs {
            diff.coeffs[g] -= direct.coeffs[g];
        }
        let mut worst: f64 = 0.0;
        for &t in &pair.target_active.active_elems {
            worst = worst
                .max(cutfem_core::assembly::field_l2_on_elems(&diff, &[t]).unwrap());
        }
        errs.push(worst);
    }
    let rate = harness::least_squares_rate(&errs);
    let d_ok = rate >= 2.0 + 2.5;

    let detail = format!(
        "identity dev {max_dev:.2e}, constant dev {max_cdev:.2e}, \
         stability C_L2 {c_l2_max:.2} C_H1 {c_h1_max:.2} (<= 4), transfer rate {rate:.2} (>= 4.5)"
    );
    check("criterion 3 (projection suite)", a_ok && b_ok && c_ok && d_ok, &detail);
}

/// Deformation-pair time gap proportional to h^2.
fn pair_gap(lx: usize) -> f64 {
    let h = 2.0 * std::f64::consts::SQRT_2 / (8 << lx) as f64;
    h * h
}

/// Criterion 4: exact BDF2 tuple-norm identity with assembled mass matrices.
#[test]
fn criterion_4_bdf2_tuple_norm() {
    let problem = problems::circle_static();
    let mesh =
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 8, 8, MeshPattern::Diagonal)
            .unwrap();
    let space = ScalarSpace::build(mesh.clone(), 2).unwrap();
    let id = MeshDeformation::identity(mesh.clone(), 2).unwrap();
    let phi = problem.phi.clone();
    let slice = LevelSetSlice::discretize(&move |x, t| phi(x, t), 0.0, space.clone(), id).unwrap();
    let theta = MeshDeformation::build(&slice, space.clone(), Default::default()).unwrap();
    let active = active_sets(&slice, 0.1, 2, &space, ActiveSetOpts::default());
    let geo = StepGeometry { slice: &slice, active: &active, theta: &theta };
    let m = assemble_mass(&geo, &space, 6).unwrap();

    let dt = 0.31;
    let n = m.n;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let stencil: Vec<f64> =
            (0..n).map(|i| (3.0 * w[i] - 4.0 * v[i] + u[i]) / (2.0 * dt)).collect();
        let lhs = 4.0 * dt * m.quadratic_form(&stencil, &w);
        let tuple = |a: &[f64], b: &[f64]| -> f64 {
            let d: Vec<f64> = (0..n).map(|i| 2.0 * a[i] - b[i]).collect();
            m.quadratic_form(a, a) + m.quadratic_form(&d, &d)
        };
        let extra: Vec<f64> = (0..n).map(|i| w[i] - 2.0 * v[i] + u[i]).collect();
        let rhs = tuple(&w, &v) - tuple(&v, &u) + m.quadratic_form(&extra, &extra);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
    }
    check(
        "criterion 4 (BDF2 tuple-norm identity)",
        worst <= 1e-12,
        &format!("max relative deviation {worst:.2e} over 100 random triples"),
    );
}

/// Criterion 5: ghost-penalty robustness. Stabilized condition number varies
/// by at most 10x over 20 sub-cell shifts; the ghost matrix is PSD on a
/// small instance.
#[test]
fn criterion_5_ghost_penalty_robustness() {
    let rep = harness::condition_study(16, 2, 20, 0.5).expect("condition study");
    let cond_ok = rep.stabilized_variation <= 10.0;
    let (min_eig, max_eig, n) = harness::ghost_penalty_spectrum(8, 2).expect("spectrum");
    assert!(n <= 300, "PSD oracle instance has {n} dofs");
    let psd_ok = min_eig >= -1e-10 * max_eig.abs();
    let detail = format!(
        "stabilized cond variation {:.2}x (unstabilized {:.1}x), \
         ghost min eig {min_eig:.2e} vs -1e-10*|S| = {:.2e} on {n} dofs",
        rep.stabilized_variation,
        rep.unstabilized_variation,
        -1e-10 * max_eig.abs()
    );
    check("criterion 5 (ghost-penalty robustness)", cond_ok && psd_ok, &detail);
}

/// Criterion 6: discrete stability. Source-free kite run over 200 steps:
/// the monitored energy never grows by more than 1 + 10 dt per step after
/// the first r steps.
#[test]
fn criterion_6_stability_monitor() {
    let mesh =
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, 16, 16, MeshPattern::Diagonal)
            .unwrap();
    let mut cfg = StepperConfig::new(problems::kite(), mesh);
    cfg.nu = KITE_NU;
    cfg.k = 2;
    cfg.q = 2;
    cfg.r = 2;
    cfg.n_steps = 200;
    cfg.c_gamma = 0.1;
    cfg.startup = StartupPolicy::Bootstrap;
    cfg.source_override = Some(Arc::new(|_, _| 0.0));
    cfg.monitor_energy = false; // assert here instead of erroring inside
    cfg.validate_source = false;
    let stepper = Stepper::new(cfg).unwrap();
    let state = stepper.run().unwrap();
    let dt = 1.0 / 200.0;
    let mut worst: f64 = 0.0;
    // skip the first r steps (energy log starts at step r for BDF-r)
    for w in state.energy_log.windows(2).skip(2) {
        worst = worst.max(w[1] / w[0]);
    }
    let bound = 1.0 + 10.0 * dt;
    check(
        "criterion 6 (stability monitor)",
        worst <= bound,
        &format!("max step growth {worst:.6} vs bound {bound:.6} over 200 steps"),
    );
}

/// Criterion 7: cut quadrature exactness against the symbolic sub-triangle
/// oracle, and strictly positive weights over 1000 random cut patterns.
#[test]
fn criterion_7_quadrature_exactness() {
    use cutfem_core::cutquad::{decompose, volume_rule, Region, Sign};
    use std::collections::HashMap;

    fn poly_mul(
        a: &HashMap<(usize, usize), f64>,
        b: &HashMap<(usize, usize), f64>,
    ) -> HashMap<(usize, usize), f64> {
        let mut out = HashMap::new();
        for (&(i1, j1), &c1) in a {
            for (&(i2, j2), &c2) in b {
                *out.entry((i1 + i2, j1 + j2)).or_insert(0.0) += c1 * c2;
            }
        }
        out
    }
    fn tri_area(t: &[[f64; 2]; 3]) -> f64 {
        0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1])
            - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]))
            .abs()
    }
    fn exact_tri_monomial(tri: &[[f64; 2]; 3], a: usize, b: usize) -> f64 {
        let xl = HashMap::from([
            ((0, 0), tri[0][0]),
            ((1, 0), tri[1][0] - tri[0][0]),
            ((0, 1), tri[2][0] - tri[0][0]),
        ]);
        let yl = HashMap::from([
            ((0, 0), tri[0][1]),
            ((1, 0), tri[1][1] - tri[0][1]),
            ((0, 1), tri[2][1] - tri[0][1]),
        ]);
        let mut poly = HashMap::from([((0usize, 0usize), 1.0f64)]);
        for _ in 0..a {
            poly = poly_mul(&poly, &xl);
        }
        for _ in 0..b {
            poly = poly_mul(&poly, &yl);
        }
        let jac = 2.0 * tri_area(tri);
        poly.iter()
            .map(|(&(i, j), &c)| {
                c * cutfem_core::quadrature::monomial_integral_simplex(i, j) * jac
            })
            .sum()
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut all_positive = true;
    for trial in 0..1000 {
        let vals: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let d = decompose(vals);
        let degree = [2usize, 4, 6][trial % 3];
        let rule = volume_rule(&d, Region::Neg, degree).unwrap();
        all_positive &= rule.weights.iter().all(|&w| w > 0.0);
        let pos_rule = volume_rule(&d, Region::Pos, degree).unwrap();
        all_positive &= pos_rule.weights.iter().all(|&w| w > 0.0);
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                let quad: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact: f64 = d
                    .sub_triangles
                    .iter()
                    .filter(|(_, s)| *s == Sign::Neg)
                    .map(|(t, _)| exact_tri_monomial(t, a, b))
                    .sum();
                worst = worst.max((quad - exact).abs());
            }
        }
    }
    check(
        "criterion 7 (quadrature exactness)",
        worst <= 1e-13 && all_positive,
        &format!("max monomial deviation {worst:.2e}; all weights positive: {all_positive}"),
    );
}
