//! Run configuration, the convergence-study driver, geometry diagnostics and
//! the cut-position conditioning study.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{
    assemble_step_system, FormVariant, SchemeParams, StepGeometry,
};
use crate::cutquad::{decompose, interface_rule};
use crate::error::{Error, Result};
use crate::fespace::{FEField, ScalarSpace};
use crate::isoparam::MeshDeformation;
use crate::levelset::{active_sets, verify_path_assumption, ActiveSetOpts, ElemClass, LevelSetSlice};
use crate::mesh::{BackgroundMesh, MeshPattern};
use crate::problems::{self, Problem};
use crate::solver::{condition_number_dense, symmetric_eigenvalues_dense, SolveMethod};
use crate::stepper::{
    GammaRule, GuardMode, StartupPolicy, StepDiagnostics, Stepper, StepperConfig,
};

/// Flat key = value run configuration (sections are organizational only).
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: String,
    pub nu: f64,
    pub k: usize,
    pub q: usize,
    pub r: usize,
    pub h0: f64,
    /// Base time step; 0 means "use t_end" (one step at Lt = 0).
    pub dt0: f64,
    /// 0 means "use the problem's horizon".
    pub t_end: f64,
    pub lx: (usize, usize),
    pub lt: (usize, usize),
    pub c_gamma: f64,
    pub delta_safety: f64,
    pub form: FormVariant,
    pub skip_plus_layers: bool,
    pub oswald_inset_only: bool,
    pub startup: StartupPolicy,
    pub gamma_rule: GammaRule,
    pub ratio_guard: GuardMode,
    pub solver: SolveMethod,
    pub quad_volume: Option<usize>,
    pub quad_interface: Option<usize>,
    pub workers: usize,
    pub validate_source: bool,
    pub monitor_energy: bool,
    pub pattern: MeshPattern,
    pub out_dir: PathBuf,
    pub write_csv: bool,
    pub write_vtk: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "kite".into(),
            nu: 1.0,
            k: 2,
            q: 2,
            r: 2,
            h0: 0.25,
            dt0: 0.0,
            t_end: 0.0,
            lx: (0, 3),
            lt: (0, 5),
            c_gamma: 0.1,
            delta_safety: 1.0,
            form: FormVariant::Experiment,
            skip_plus_layers: false,
            oswald_inset_only: true,
            startup: StartupPolicy::Interpolate,
            gamma_rule: GammaRule::MeasuredPaths,
            ratio_guard: GuardMode::Refuse,
            solver: SolveMethod::Direct,
            quad_volume: None,
            quad_interface: None,
            workers: 0,
            validate_source: true,
            monitor_energy: false,
            pattern: MeshPattern::Diagonal,
            out_dir: PathBuf::from("out"),
            write_csv: true,
            write_vtk: false,
        }
    }
}

impl RunConfig {
    /// Parses the flat key = value format with [section] headers and '#'
    /// comments. Unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for key '{key}'")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("bad flag '{value}' for key '{key}'"))),
            }
        }
        fn range(key: &str, value: &str) -> Result<(usize, usize)> {
            if let Some((a, b)) = value.split_once("..") {
                Ok((num(key, a.trim())?, num(key, b.trim())?))
            } else {
                let v: usize = num(key, value)?;
                Ok((v, v))
            }
        }
        match key {
            "problem" => self.problem = value.to_string(),
            "nu" => self.nu = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "h0" => self.h0 = num(key, value)?,
            "dt0" => self.dt0 = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "lx" => self.lx = range(key, value)?,
            "lt" => self.lt = range(key, value)?,
            "c_gamma" => self.c_gamma = num(key, value)?,
            "delta_safety" => self.delta_safety = num(key, value)?,
            "form" => {
                self.form = match value {
                    "experiment" => FormVariant::Experiment,
                    "analysis" => FormVariant::Analysis,
                    _ => return Err(Error::Config(format!("unknown form '{value}'"))),
                }
            }
            "skip_plus_layers" => self.skip_plus_layers = flag(key, value)?,
            "oswald_inset_only" => self.oswald_inset_only = flag(key, value)?,
            "startup" => {
                self.startup = match value {
                    "interpolate" => StartupPolicy::Interpolate,
                    "bootstrap" => StartupPolicy::Bootstrap,
                    _ => return Err(Error::Config(format!("unknown startup '{value}'"))),
                }
            }
            "gamma_rule" => {
                self.gamma_rule = match value {
                    "measured" => GammaRule::MeasuredPaths,
                    "formula" => GammaRule::Formula,
                    _ => return Err(Error::Config(format!("unknown gamma_rule '{value}'"))),
                }
            }
            "ratio_guard" => {
                self.ratio_guard = match value {
                    "refuse" => GuardMode::Refuse,
                    "warn" => GuardMode::Warn,
                    _ => return Err(Error::Config(format!("unknown ratio_guard '{value}'"))),
                }
            }
            "solver" => {
                self.solver = match value {
                    "direct" => SolveMethod::Direct,
                    "iterative" => SolveMethod::Iterative { tol: 1e-10 },
                    _ => return Err(Error::Config(format!("unknown solver '{value}'"))),
                }
            }
            "quad_volume" => {
                self.quad_volume =
                    if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "quad_interface" => {
                self.quad_interface =
                    if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "workers" => self.workers = num(key, value)?,
            "validate_source" => self.validate_source = flag(key, value)?,
            "monitor_energy" => self.monitor_energy = flag(key, value)?,
            "pattern" => {
                self.pattern = match value {
                    "diagonal" => MeshPattern::Diagonal,
                    "crisscross" => MeshPattern::CrissCross,
                    _ => return Err(Error::Config(format!("unknown pattern '{value}'"))),
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "write_csv" => self.write_csv = flag(key, value)?,
            "write_vtk" => self.write_vtk = flag(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// The documented default configuration file.
    pub fn print_defaults() -> String {
        let d = Self::default();
        format!(
            "\
[problem]
problem = {problem}        # {reg}
nu = {nu}                # diffusion coefficient
t_end = 0              # 0: use the problem horizon

[discretization]
k = {k}                  # solution order (1..4)
q = {q}                  # geometry order (1..4)
r = {r}                  # BDF order (1..3)
h0 = {h0}              # base cell size; h = h0 * 2^-Lx
dt0 = 0                # base time step; 0: t_end (so dt = t_end * 2^-Lt)
lx = {lx0}..{lx1}              # spatial refinement levels
lt = {lt0}..{lt1}              # temporal refinement levels
c_gamma = {c_gamma}          # ghost-penalty weight factor, gamma = c_gamma * K
delta_safety = {ds}      # delta = delta_safety * dt * (1.1 * max |w|)
form = experiment      # experiment | analysis
quad_volume = auto     # volume quadrature degree, auto: 2k+2
quad_interface = auto  # interface quadrature degree, auto: 2k+2

[flags]
skip_plus_layers = false   # skip the r vertex-neighbor expansion layers
oswald_inset_only = true   # averaging patches restricted to the target set
startup = interpolate      # interpolate | bootstrap
gamma_rule = measured      # measured | formula (1 + ceil(delta/h))
ratio_guard = refuse       # refuse | warn when h^4/(nu dt) > 1
solver = direct            # direct | iterative
pattern = diagonal         # diagonal | crisscross
validate_source = true     # finite-difference check of the manufactured source
monitor_energy = false     # enforce the energy bound (source-free runs)
workers = 0                # parallel grid cells; 0: all cores

[output]
out_dir = out
write_csv = true
write_vtk = false
",
            problem = d.problem,
            reg = problems::registry().join(" | "),
            nu = d.nu,
            k = d.k,
            q = d.q,
            r = d.r,
            h0 = d.h0,
            lx0 = d.lx.0,
            lx1 = d.lx.1,
            lt0 = d.lt.0,
            lt1 = d.lt.1,
            c_gamma = d.c_gamma,
            ds = d.delta_safety,
        )
    }

    pub fn resolve_problem(&self) -> Result<Problem> {
        problems::by_name(&self.problem)
    }

    pub fn horizon(&self, problem: &Problem) -> f64 {
        if self.t_end > 0.0 {
            self.t_end
        } else {
            problem.t_end
        }
    }

    /// Number of time steps at level lt: dt = dt0 * 2^-lt.
    pub fn n_steps(&self, problem: &Problem, lt: usize) -> usize {
        let t_end = self.horizon(problem);
        let dt0 = if self.dt0 > 0.0 { self.dt0 } else { t_end };
        let n0 = (t_end / dt0).round().max(1.0) as usize;
        n0 << lt
    }

    pub fn build_mesh(&self, problem: &Problem, lx: usize) -> Result<Arc<BackgroundMesh>> {
        let [xmin, ymin, xmax, ymax] = problem.domain;
        let nx = (((xmax - xmin) / self.h0).round() as usize).max(1) << lx;
        let ny = (((ymax - ymin) / self.h0).round() as usize).max(1) << lx;
        BackgroundMesh::build_structured(xmin, ymin, xmax, ymax, nx, ny, self.pattern)
    }

    pub fn stepper_config(&self, lx: usize, lt: usize) -> Result<StepperConfig> {
        let problem = self.resolve_problem()?;
        let mesh = self.build_mesh(&problem, lx)?;
        let mut cfg = StepperConfig::new(problem, mesh);
        cfg.nu = self.nu;
        cfg.k = self.k;
        cfg.q = self.q;
        cfg.r = self.r;
        cfg.t_end = self.horizon(&cfg.problem);
        cfg.n_steps = self.n_steps(&cfg.problem, lt);
        cfg.c_gamma = self.c_gamma;
        cfg.delta_safety = self.delta_safety;
        cfg.form_variant = self.form;
        cfg.skip_plus_layers = self.skip_plus_layers;
        cfg.oswald_inset_only = self.oswald_inset_only;
        cfg.startup = self.startup;
        cfg.solve_method = self.solver;
        cfg.gamma_rule = self.gamma_rule;
        cfg.ratio_guard = self.ratio_guard;
        cfg.monitor_energy = self.monitor_energy;
        cfg.validate_source = self.validate_source;
        cfg.quad_volume = self.quad_volume;
        cfg.quad_interface = self.quad_interface;
        Ok(cfg)
    }
}

/// Outcome of one convergence-grid cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub lx: usize,
    pub lt: usize,
    pub linf_l2: f64,
    pub l2h1: f64,
    pub failure: Option<String>,
}

/// Error matrices of a convergence study, rows = Lx, cols = Lt.
#[derive(Clone, Debug)]
pub struct ConvergenceTables {
    pub lx: Vec<usize>,
    pub lt: Vec<usize>,
    pub linf_l2: Vec<Vec<f64>>,
    pub l2h1: Vec<Vec<f64>>,
    pub failures: Vec<(usize, usize, String)>,
}

/// Norm selector for EOC extraction.
#[derive(Clone, Copy, Debug)]
pub enum Norm {
    LinfL2,
    L2H1,
}

impl ConvergenceTables {
    fn table(&self, which: Norm) -> &Vec<Vec<f64>> {
        match which {
            Norm::LinfL2 => &self.linf_l2,
            Norm::L2H1 => &self.l2h1,
        }
    }

    /// Least-squares EOC down the finest-Lt column over the last
    /// `increments` refinements in space.
    pub fn spatial_eoc(&self, which: Norm, increments: usize) -> Option<f64> {
        let t = self.table(which);
        let col = self.lt.len() - 1;
        let rows = t.len();
        if rows < increments + 1 {
            return None;
        }
        let errs: Vec<f64> = (rows - increments - 1..rows).map(|i| t[i][col]).collect();
        if errs.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return None;
        }
        Some(least_squares_rate(&errs))
    }

    /// Least-squares EOC along the finest-Lx row over the last
    /// `increments` refinements in time.
    pub fn temporal_eoc(&self, which: Norm, increments: usize) -> Option<f64> {
        let t = self.table(which);
        let row = t.last()?;
        let cols = row.len();
        if cols < increments + 1 {
            return None;
        }
        let errs: Vec<f64> = row[cols - increments - 1..].to_vec();
        if errs.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return None;
        }
        Some(least_squares_rate(&errs))
    }

    /// Writes one error matrix with EOC blocks.
    fn write_matrix(&self, which: Norm, w: &mut dyn Write) -> Result<()> {
        let t = self.table(which);
        let header = |w: &mut dyn Write| -> Result<()> {
            write!(w, "lx\\lt")?;
            for lt in &self.lt {
                write!(w, ",{lt}")?;
            }
            writeln!(w)?;
            Ok(())
        };
        writeln!(w, "# errors")?;
        header(w)?;
        for (i, lx) in self.lx.iter().enumerate() {
            write!(w, "{lx}")?;
            for v in &t[i] {
                write!(w, ",{v:.8e}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "# EOC in space: log2(e(lx-1)/e(lx)) per column")?;
        header(w)?;
        for i in 1..self.lx.len() {
            write!(w, "{}", self.lx[i])?;
            for j in 0..self.lt.len() {
                write!(w, ",{:.4}", (t[i - 1][j] / t[i][j]).log2())?;
            }
            writeln!(w)?;
        }
        writeln!(w, "# EOC in time: log2(e(lt-1)/e(lt)) per row")?;
        header(w)?;
        for (i, lx) in self.lx.iter().enumerate() {
            write!(w, "{lx}")?;
            write!(w, ",")?;
            for j in 1..self.lt.len() {
                write!(w, ",{:.4}", (t[i][j - 1] / t[i][j]).log2())?;
            }
            writeln!(w)?;
        }
        for (lx, lt, e) in &self.failures {
            writeln!(w, "# FAILED lx={lx} lt={lt}: {e}")?;
        }
        Ok(())
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let p1 = dir.join("linf_l2.csv");
        let p2 = dir.join("l2h1.csv");
        self.write_matrix(Norm::LinfL2, &mut std::fs::File::create(&p1)?)?;
        self.write_matrix(Norm::L2H1, &mut std::fs::File::create(&p2)?)?;
        Ok((p1, p2))
    }
}

/// Least-squares slope of log2(err) against the refinement level, negated so
/// a halving error per level gives +1.
pub fn least_squares_rate(errs: &[f64]) -> f64 {
    let n = errs.len() as f64;
    let xs: Vec<f64> = (0..errs.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    -num / den
}

/// Runs the full (Lx, Lt) grid; failed cells are recorded and the remaining
/// cells still run. Cells run in parallel, bounded by `workers`.
pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceTables> {
    let lx: Vec<usize> = (cfg.lx.0..=cfg.lx.1).collect();
    let lt: Vec<usize> = (cfg.lt.0..=cfg.lt.1).collect();
    let cells: Vec<(usize, usize)> =
        lx.iter().flat_map(|&i| lt.iter().map(move |&j| (i, j))).collect();

    let run_cell = |&(i, j): &(usize, usize)| -> CellResult {
        let out = cfg
            .stepper_config(i, j)
            .and_then(Stepper::new)
            .and_then(|s| s.run());
        match out {
            Ok(state) => CellResult {
                lx: i,
                lt: j,
                linf_l2: state.norms.linf_l2,
                l2h1: state.norms.l2h1(),
                failure: None,
            },
            Err(e) => CellResult {
                lx: i,
                lt: j,
                linf_l2: f64::NAN,
                l2h1: f64::NAN,
                failure: Some(e.to_string()),
            },
        }
    };
    let results: Vec<CellResult> = if cfg.workers == 1 {
        cells.iter().map(run_cell).collect()
    } else if cfg.workers == 0 {
        cells.par_iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };

    let mut linf_l2 = vec![vec![f64::NAN; lt.len()]; lx.len()];
    let mut l2h1 = vec![vec![f64::NAN; lt.len()]; lx.len()];
    let mut failures = Vec::new();
    for r in results {
        let i = lx.iter().position(|&v| v == r.lx).unwrap();
        let j = lt.iter().position(|&v| v == r.lt).unwrap();
        linf_l2[i][j] = r.linf_l2;
        l2h1[i][j] = r.l2h1;
        if let Some(f) = r.failure {
            failures.push((r.lx, r.lt, f));
        }
    }
    Ok(ConvergenceTables { lx, lt, linf_l2, l2h1, failures })
}

/// Per-step CSV log of a single run.
pub fn write_step_csv(diags: &[StepDiagnostics], w: &mut dyn Write) -> Result<()> {
    writeln!(
        w,
        "n,t,dofs,K,gamma,theta_max_disp,l2_err,h1_err,residual,class_changes,undef_source,energy"
    )?;
    for d in diags {
        writeln!(
            w,
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{},{},{:e}",
            d.n,
            d.t,
            d.dofs,
            d.k_actual,
            d.gamma,
            d.theta_max_displacement,
            d.l2_err,
            d.h1_err,
            d.residual,
            d.class_changes,
            d.undefined_source_evals,
            d.energy
        )?;
    }
    Ok(())
}

/// Geometry accuracy diagnostics on the static circle.
#[derive(Clone, Debug)]
pub struct GeomCheckReport {
    pub q: usize,
    /// Max |phi(Theta(x))| over interface quadrature points, per refinement.
    pub residuals: Vec<f64>,
    /// Least-squares decay rate of the residuals.
    pub rate: f64,
    /// max |Theta - id| / h^2 per refinement.
    pub disp_ratios: Vec<f64>,
    /// max |D Theta - I| / h per refinement.
    pub grad_ratios: Vec<f64>,
}

/// Runs the interface-residual study for one geometry order over `levels`
/// refinements starting from an `nx0` x `nx0` mesh.
pub fn geomcheck(q: usize, nx0: usize, levels: usize) -> Result<GeomCheckReport> {
    let problem = problems::circle_static();
    let mut residuals = Vec::new();
    let mut disp_ratios = Vec::new();
    let mut grad_ratios = Vec::new();
    for l in 0..levels {
        let nx = nx0 << l;
        let mesh =
            BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal)?;
        let space = ScalarSpace::build(mesh.clone(), q)?;
        let id = MeshDeformation::identity(mesh.clone(), q)?;
        let phi = problem.phi.clone();
        let slice =
            LevelSetSlice::discretize(&move |x, t| phi(x, t), 0.0, space.clone(), id)?;
        let theta = MeshDeformation::build(&slice, space.clone(), Default::default())?;
        let h = mesh.h_max;

        let mut max_res = 0.0f64;
        for t in 0..mesh.n_elems() {
            if crate::levelset::classify_values(slice.lin_values(t), 0.0) != ElemClass::Cut {
                continue;
            }
            let d = decompose(slice.lin_values(t));
            let ir = interface_rule(&d, 2 * q + 2)?;
            for p in &ir.points {
                let (x, _) = theta.deform(t, *p);
                max_res = max_res.max((problem.phi)(x, 0.0).abs());
            }
        }
        residuals.push(max_res);
        disp_ratios.push(theta.max_displacement / (h * h));
        grad_ratios.push(theta.max_grad_deviation / h);
    }
    let rate = least_squares_rate(&residuals);
    Ok(GeomCheckReport { q, residuals, rate, disp_ratios, grad_ratios })
}

/// Conditioning of the stabilized step matrix over sub-cell shifts of a
/// circle, against the unstabilized variant.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub stabilized: Vec<f64>,
    pub unstabilized: Vec<f64>,
    pub stabilized_variation: f64,
    pub unstabilized_variation: f64,
}

/// Assembles the r=1 step matrix (mass/dt + diffusion + gamma * ghost) for
/// `n_shifts` evenly spaced sub-cell shifts of a circle of radius 0.3 on a
/// fixed nx x nx mesh, and returns dense condition numbers.
pub fn condition_study(nx: usize, k: usize, n_shifts: usize, c_gamma: f64) -> Result<ConditionReport> {
    let mesh =
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal)?;
    let h_cell = 2.0 / nx as f64;
    let dt = 0.1;
    let mut stabilized = Vec::new();
    let mut unstabilized = Vec::new();
    for i in 0..n_shifts {
        let dx = h_cell * i as f64 / n_shifts as f64;
        let (sys_s, sys_u) = shifted_circle_systems(&mesh, k, dx, dt, c_gamma)?;
        stabilized.push(condition_number_dense(&sys_s));
        unstabilized.push(condition_number_dense(&sys_u));
    }
    let variation = |v: &[f64]| {
        let max = v.iter().cloned().fold(0.0f64, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if max.is_finite() {
            max / min
        } else {
            f64::INFINITY
        }
    };
    Ok(ConditionReport {
        stabilized_variation: variation(&stabilized),
        unstabilized_variation: variation(&unstabilized),
        stabilized,
        unstabilized,
    })
}

/// Step matrices (with and without ghost penalty) for one shifted circle.
pub fn shifted_circle_systems(
    mesh: &Arc<BackgroundMesh>,
    k: usize,
    dx: f64,
    dt: f64,
    c_gamma: f64,
) -> Result<(crate::assembly::CsrMatrix, crate::assembly::CsrMatrix)> {
    let problem = problems::circle_shifted(0.3, dx, 0.0);
    let space = ScalarSpace::build(mesh.clone(), k)?;
    let id = MeshDeformation::identity(mesh.clone(), k)?;
    let phi = problem.phi.clone();
    let slice = LevelSetSlice::discretize(&move |x, t| phi(x, t), 0.0, space.clone(), id)?;
    let theta = MeshDeformation::build(&slice, space.clone(), Default::default())?;
    let active = active_sets(&slice, 0.0, 1, &space, ActiveSetOpts::default());
    let stats = verify_path_assumption(&active, &slice, mesh)?;
    let gamma = c_gamma * stats.k_actual as f64;
    let params = SchemeParams {
        nu: 1.0,
        velocity: Arc::new(|_, _| [0.0, 0.0]),
        velocity_div: Arc::new(|_, _| 0.0),
        source: Arc::new(|_, _| 0.0),
        r: 1,
        delta: 0.0,
        c_gamma,
        form_variant: FormVariant::Experiment,
        quad_volume: None,
        quad_interface: None,
    };
    let geo = StepGeometry { slice: &slice, active: &active, theta: &theta };
    let hist = FEField::zero(space.clone(), theta.clone());
    let sys = assemble_step_system(&geo, &space, &[&hist], &params, dt, gamma)?;
    let unstab = crate::assembly::CsrMatrix::linear_combination(&[
        (1.0 / dt, &sys.mass),
        (1.0, &sys.bilinear),
    ]);
    Ok((sys.system.matrix, unstab))
}

/// Smallest and largest eigenvalue of the symmetrized ghost-penalty matrix
/// on a small instance (dense oracle).
pub fn ghost_penalty_spectrum(nx: usize, k: usize) -> Result<(f64, f64, usize)> {
    let mesh =
        BackgroundMesh::build_structured(-1.0, -1.0, 1.0, 1.0, nx, nx, MeshPattern::Diagonal)?;
    let problem = problems::circle_shifted(1.0 / 3.0, 0.013, 0.007);
    let space = ScalarSpace::build(mesh.clone(), k)?;
    let id = MeshDeformation::identity(mesh.clone(), k)?;
    let phi = problem.phi.clone();
    let slice = LevelSetSlice::discretize(&move |x, t| phi(x, t), 0.0, space.clone(), id)?;
    let theta = MeshDeformation::build(&slice, space.clone(), Default::default())?;
    let active = active_sets(&slice, 0.0, 1, &space, ActiveSetOpts::default());
    let params = SchemeParams {
        nu: 1.0,
        velocity: Arc::new(|_, _| [0.0, 0.0]),
        velocity_div: Arc::new(|_, _| 0.0),
        source: Arc::new(|_, _| 0.0),
        r: 1,
        delta: 0.0,
        c_gamma: 1.0,
        form_variant: FormVariant::Experiment,
        quad_volume: None,
        quad_interface: None,
    };
    let geo = StepGeometry { slice: &slice, active: &active, theta: &theta };
    let s = crate::assembly::assemble_ghost_penalty(&geo, &space, &params)?;
    let ev = symmetric_eigenvalues_dense(&s);
    Ok((ev[0], ev[ev.len() - 1], s.n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_defaults() {
        let text = RunConfig::print_defaults();
        let parsed = RunConfig::parse(&text).unwrap();
        let d = RunConfig::default();
        assert_eq!(parsed.problem, d.problem);
        assert_eq!(parsed.k, d.k);
        assert_eq!(parsed.lx, d.lx);
        assert_eq!(parsed.lt, d.lt);
        assert_eq!(parsed.form, d.form);
    }

    #[test]
    fn config_rejects_unknown_key() {
        assert!(RunConfig::parse("nonsense = 1").is_err());
    }

    #[test]
    fn config_parses_ranges_and_flags() {
        let cfg = RunConfig::parse("lx = 1..2\nlt = 3\nskip_plus_layers = true\nnu = 0.5").unwrap();
        assert_eq!(cfg.lx, (1, 2));
        assert_eq!(cfg.lt, (3, 3));
        assert!(cfg.skip_plus_layers);
        assert_eq!(cfg.nu, 0.5);
    }

    #[test]
    fn least_squares_rate_exact() {
        let errs = [1.0, 0.25, 0.0625];
        assert!((least_squares_rate(&errs) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_grid() {
        let mut cfg = RunConfig::default();
        cfg.problem = "circle-static".into();
        cfg.lx = (0, 0);
        cfg.lt = (1, 1);
        cfg.r = 1;
        cfg.validate_source = false;
        cfg.workers = 1;
        let tables = run_convergence(&cfg).unwrap();
        assert_eq!(tables.linf_l2.len(), 1);
        assert_eq!(tables.linf_l2[0].len(), 1);
        assert!(tables.failures.is_empty(), "{:?}", tables.failures);
        assert!(tables.linf_l2[0][0].is_finite());
        // single cell: no EOC extractable
        assert!(tables.spatial_eoc(Norm::LinfL2, 2).is_none());
    }

    #[test]
    fn geomcheck_q2_rate() {
        let rep = geomcheck(2, 8, 3).unwrap();
        assert!(rep.rate >= 2.5, "rate {} residuals {:?}", rep.rate, rep.residuals);
        for &r in &rep.disp_ratios {
            assert!(r < 2.0);
        }
    }

    #[test]
    fn csv_output_deterministic() {
        let mut cfg = RunConfig::default();
        cfg.problem = "circle-static".into();
        cfg.lx = (0, 1);
        cfg.lt = (0, 1);
        cfg.r = 1;
        cfg.validate_source = false;
        cfg.workers = 1;
        let t1 = run_convergence(&cfg).unwrap();
        cfg.workers = 0;
        let t2 = run_convergence(&cfg).unwrap();
        assert_eq!(t1.linf_l2, t2.linf_l2);
        assert_eq!(t1.l2h1, t2.l2h1);
    }
}
