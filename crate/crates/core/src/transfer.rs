//! Projection of finite element fields between the deformed meshes of
//! consecutive time levels.
//!
//! For every Lagrange node of the target mesh the previous-level element
//! polynomials of the node patch are evaluated at the preimage of the new
//! node position under the previous deformation (shifted evaluation, using
//! the canonical polynomial extension), and the resulting broken values are
//! combined by Oswald averaging. Dofs outside the target active set are set
//! to zero.

use std::sync::Arc;

use crate::error::Result;
use crate::fespace::FEField;
use crate::isoparam::MeshDeformation;
use crate::levelset::ActiveSlice;

/// Options of the projection.
#[derive(Clone, Copy, Debug)]
pub struct ProjectOpts {
    /// Average only over patch elements inside the target set, so dofs on
    /// the target boundary never see zero-extended exterior values. With
    /// `false` the full node patch contributes.
    pub inset_only: bool,
}

impl Default for ProjectOpts {
    fn default() -> Self {
        Self { inset_only: true }
    }
}

/// Counters reported by a projection pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProjectDiagnostics {
    /// Shifted evaluations taken on elements entirely outside the source
    /// field's support (contributing the trivial zero extension).
    pub undefined_source_evals: usize,
}

/// Projects `u_m` (living on its stored deformation) onto the deformation
/// `theta_n`, restricted to `target`. `source_active` enables the
/// undefined-source diagnostic counter.
pub fn project(
    u_m: &FEField,
    theta_n: &Arc<MeshDeformation>,
    target: &ActiveSlice,
    source_active: Option<&ActiveSlice>,
    opts: ProjectOpts,
) -> Result<(FEField, ProjectDiagnostics)> {
    let space = u_m.space.clone();
    let theta_m = &u_m.deformation;
    let mut coeffs = vec![0.0; space.n_dofs];
    let mut diag = ProjectDiagnostics::default();

    for &g in &target.active_dofs {
        let patch = &space.dof_patch[g];
        // new physical node position, computed once from a canonical element
        let home = patch[0];
        let xhat_home = space.dof_ref_in(g, home);
        let (x_n, _) = theta_n.deform(home, xhat_home);

        let mut sum = 0.0;
        let mut count = 0usize;
        for &t in patch {
            if opts.inset_only && !target.active_mask[t] {
                continue;
            }
            if let Some(src) = source_active {
                if !src.active_mask[t] {
                    diag.undefined_source_evals += 1;
                }
            }
            let guess = space.dof_ref_in(g, t);
            let yhat = theta_m.invert_local(t, x_n, guess)?;
            sum += u_m.eval_value(t, yhat, true);
            count += 1;
        }
        if count > 0 {
            coeffs[g] = sum / count as f64;
        }
    }

    Ok((FEField { space, coeffs, deformation: theta_n.clone() }, diag))
}

/// Applies only the newest projection to every stored history field (older
/// entries were chain-projected in previous steps and are reused as stored).
pub fn project_chain(
    history: &[FEField],
    theta_n: &Arc<MeshDeformation>,
    target: &ActiveSlice,
    source_active: Option<&ActiveSlice>,
    opts: ProjectOpts,
) -> Result<(Vec<FEField>, ProjectDiagnostics)> {
    let mut out = Vec::with_capacity(history.len());
    let mut diag = ProjectDiagnostics::default();
    for u in history {
        let (p, d) = project(u, theta_n, target, source_active, opts)?;
        diag.undefined_source_evals += d.undefined_source_evals;
        out.push(p);
    }
    Ok((out, diag))
}
