//! Discrete Carleman commutator parts and their integral identities.
//!
//! For a weight Φ = sφ/Γ(t) and η = ½∂ₜΦ + ¼A∇Φ·∇Φ, the twisted evolution
//! splits into
//!
//! ```text
//!   𝒜f = −A∇Φ·∇f − ½div(A∇Φ)f      (antisymmetric part)
//!   𝒮f = −div(A∇f) − ηf             (symmetric part)
//!   𝒮′f = −∂ₜη f                    (time derivative of 𝒮)
//! ```
//!
//! All spatial derivatives are the mesh operators; fields carry no boundary
//! condition here, so the divergence uses the one-sided boundary closure.
//! η and ∂ₜη come from their closed forms, never from time differencing.
//!
//! Three identities tie the parts to boundary and volume integrals:
//!
//! * (i)   ∫𝒜f·f = −½∮(A∇Φ·n)f²
//! * (ii)  ∫𝒮f·f = ∫A∇f·∇f − ∫ηf² − ∮(A∇f·n)f
//! * (iii) ∫𝒮′f·f + 2∫𝒮f·𝒜f = four boundary terms + four coefficient/
//!         Hessian volume terms − (2/Γ)∫(η + ¼A∇Φ·∇Φ + contraction terms)f²
//!
//! The identity residuals, normalized by the H¹-type norm of f, decay at
//! second order under refinement; the index contractions in (iii) are
//! implemented literally as loops over i,j,k,l.

use crate::mesh::{
    boundary_integral, div_a_grad_free, grad, inner, inner_vec, norm, norm_vec, CoefficientSet,
    ScalarField, VectorField,
};
use crate::weights::{CarlemanWeight, WeightFamily};
use crate::Result;
use std::sync::Arc;

/// The commutator parts of one field under one Carleman weight, together
/// with the derivative fields and boundary flux traces the identity checks
/// consume.
#[derive(Debug, Clone)]
pub struct CommutatorParts {
    /// 𝒜f
    pub antisymmetric: ScalarField,
    /// 𝒮f
    pub symmetric: ScalarField,
    /// 𝒮′f
    pub symmetric_rate: ScalarField,
    pub eta: ScalarField,
    pub eta_t: ScalarField,
    pub phi_big: ScalarField,
    pub grad_f: VectorField,
    pub a_grad_f: VectorField,
    pub grad_phi_big: VectorField,
    pub a_grad_phi: VectorField,
    pub div_a_grad_phi: ScalarField,
    /// A∇f·n per boundary node, aligned with `grid.boundary()`.
    pub boundary_flux_f: Vec<f64>,
    /// A∇Φ·n per boundary node.
    pub boundary_flux_phi: Vec<f64>,
}

/// Assemble 𝒜f, 𝒮f, 𝒮′f for field `f` at time `t`.
pub fn apply_commutator_parts(
    f: &ScalarField,
    cw: &CarlemanWeight,
    coef: &CoefficientSet,
    t: f64,
) -> Result<CommutatorParts> {
    let grid = f.grid().clone();
    let phi_big = cw.phi_big(t)?;
    let grad_phi_big = grad(&phi_big);
    let a_grad_phi = coef.apply_principal(&grad_phi_big)?;
    let div_a_grad_phi = div_a_grad_free(&phi_big, coef)?;
    let pe = cw.eval_phi_eta(coef, t)?;

    let grad_f = grad(f);
    let a_grad_f = coef.apply_principal(&grad_f)?;
    let advect = a_grad_phi.dot(&grad_f)?; // A∇Φ·∇f

    let mut antisymmetric = ScalarField::zeros(grid.clone());
    for idx in 0..grid.len() {
        antisymmetric.values_mut()[idx] =
            -advect.values()[idx] - 0.5 * div_a_grad_phi.values()[idx] * f.values()[idx];
    }

    let mut symmetric = div_a_grad_free(f, coef)?;
    symmetric.scale(-1.0);
    for idx in 0..grid.len() {
        symmetric.values_mut()[idx] -= pe.eta.values()[idx] * f.values()[idx];
    }

    let symmetric_rate = pe.eta_t.zip(f, |e, v| -e * v)?;

    let conormal = |field: &VectorField, node: usize, normal: [f64; 2]| {
        (0..grid.dim()).map(|c| field.component(c)[node] * normal[c]).sum::<f64>()
    };
    let boundary_flux_f: Vec<f64> =
        grid.boundary().iter().map(|b| conormal(&a_grad_f, b.node, b.normal)).collect();
    let boundary_flux_phi: Vec<f64> =
        grid.boundary().iter().map(|b| conormal(&a_grad_phi, b.node, b.normal)).collect();

    Ok(CommutatorParts {
        antisymmetric,
        symmetric,
        symmetric_rate,
        eta: pe.eta,
        eta_t: pe.eta_t,
        phi_big,
        grad_f,
        a_grad_f,
        grad_phi_big,
        a_grad_phi,
        div_a_grad_phi,
        boundary_flux_f,
        boundary_flux_phi,
    })
}

/// Residuals of identities (i) and (ii), normalized by ‖f‖² + ‖∇f‖².
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IdentityResiduals {
    pub residual_i: f64,
    pub residual_ii: f64,
}

/// H¹-type normalization used by every identity residual.
fn h1_scale(f: &ScalarField, grad_f: &VectorField) -> f64 {
    let n2 = norm(f).powi(2) + norm_vec(grad_f).powi(2);
    n2.max(f64::MIN_POSITIVE)
}

/// Check identities (i) and (ii) on assembled parts.
pub fn check_identity_i_ii(f: &ScalarField, parts: &CommutatorParts) -> Result<IdentityResiduals> {
    let grid = f.grid();
    let den = h1_scale(f, &parts.grad_f);

    // (i): ∫𝒜f·f vs −½∮(A∇Φ·n)f²
    let lhs_i = inner(&parts.antisymmetric, f)?;
    let mut k = 0;
    let rhs_i = -0.5
        * boundary_integral(grid, |b| {
            let v = parts.boundary_flux_phi[k] * f.values()[b.node] * f.values()[b.node];
            k += 1;
            v
        });
    let residual_i = (lhs_i - rhs_i).abs() / den;

    // (ii): ∫𝒮f·f vs ∫A∇f·∇f − ∫ηf² − ∮(A∇f·n)f
    let lhs_ii = inner(&parts.symmetric, f)?;
    let eta_f = parts.eta.zip(f, |e, v| e * v)?;
    let mut k = 0;
    let boundary_ii = boundary_integral(grid, |b| {
        let v = parts.boundary_flux_f[k] * f.values()[b.node];
        k += 1;
        v
    });
    let rhs_ii = inner_vec(&parts.a_grad_f, &parts.grad_f)? - inner(&eta_f, f)? - boundary_ii;
    let residual_ii = (lhs_ii - rhs_ii).abs() / den;

    Ok(IdentityResiduals { residual_i, residual_ii })
}

/// Nodal Hessian of a scalar field: `rows[b].at(idx)[a] = ∂ₐ∂_b f`,
/// symmetrized in 2D.
fn hessian(f: &ScalarField) -> Vec<VectorField> {
    let g = grad(f);
    let grid = f.grid();
    let dim = grid.dim();
    let mut rows: Vec<VectorField> = (0..dim)
        .map(|b| {
            let comp = ScalarField::new(grid.clone(), g.component(b).to_vec()).expect("shape");
            grad(&comp)
        })
        .collect();
    if dim == 2 {
        for idx in 0..grid.len() {
            let avg = 0.5 * (rows[0].at(idx)[1] + rows[1].at(idx)[0]);
            rows[0].component_mut(1)[idx] = avg;
            rows[1].component_mut(0)[idx] = avg;
        }
    }
    rows
}

/// Quadratic form of a Hessian on a vector field, nodewise: Σ_ab w_a H_ab w_b.
fn hessian_quadratic(rows: &[VectorField], w: &VectorField) -> ScalarField {
    let grid = w.grid();
    let dim = grid.dim();
    let values = (0..grid.len())
        .map(|idx| {
            let wv = w.at(idx);
            let mut s = 0.0;
            for (b, row) in rows.iter().enumerate() {
                let hrow = row.at(idx);
                for a in 0..dim {
                    s += wv[a] * hrow[a] * wv[b];
                }
            }
            s
        })
        .collect();
    ScalarField::new(grid.clone(), values).expect("shape")
}

/// Residual of identity (iii), normalized by ‖f‖² + ‖∇f‖².
pub fn check_identity_iii(
    f: &ScalarField,
    cw: &CarlemanWeight,
    coef: &CoefficientSet,
    t: f64,
) -> Result<f64> {
    let grid = f.grid().clone();
    let dim = grid.dim();
    let parts = apply_commutator_parts(f, cw, coef, t)?;
    let gamma = cw.gamma(t);
    let s = cw.s();

    let lhs =
        inner(&parts.symmetric_rate, f)? + 2.0 * inner(&parts.symmetric, &parts.antisymmetric)?;

    // boundary terms
    let a_grad_phi_dot_grad_f = parts.a_grad_phi.dot(&parts.grad_f)?;
    let a_grad_f_dot_grad_f = parts.a_grad_f.dot(&parts.grad_f)?;
    let mut k = 0;
    let b1 = 2.0
        * boundary_integral(&grid, |b| {
            let v = parts.boundary_flux_f[k] * a_grad_phi_dot_grad_f.values()[b.node];
            k += 1;
            v
        });
    let mut k = 0;
    let b2 = -boundary_integral(&grid, |b| {
        let v = parts.boundary_flux_phi[k] * a_grad_f_dot_grad_f.values()[b.node];
        k += 1;
        v
    });
    let mut k = 0;
    let b3 = boundary_integral(&grid, |b| {
        let v =
            parts.boundary_flux_f[k] * parts.div_a_grad_phi.values()[b.node] * f.values()[b.node];
        k += 1;
        v
    });
    let mut k = 0;
    let b4 = boundary_integral(&grid, |b| {
        let v = parts.boundary_flux_phi[k]
            * parts.eta.values()[b.node]
            * f.values()[b.node]
            * f.values()[b.node];
        k += 1;
        v
    });

    // volume terms with literal index contractions
    let grad_a = coef.principal_gradients()?;
    let one = ScalarField::constant(grid.clone(), 1.0);

    // −2 ∫ A_ij ∂_j f · ∂_i A_kl · ∂_l f · ∂_k Φ  and
    // + ∫ ∂_l A_ij · ∂_j f · A_kl · ∂_i f · ∂_k Φ
    let mut v1_field = ScalarField::zeros(grid.clone());
    let mut v2_field = ScalarField::zeros(grid.clone());
    for idx in 0..grid.len() {
        let gf = parts.grad_f.at(idx);
        let gphi = parts.grad_phi_big.at(idx);
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                for kk in 0..dim {
                    for l in 0..dim {
                        v1 +=
                            coef.a(idx, i, j) * gf[j] * grad_a[kk][l].at(idx)[i] * gf[l] * gphi[kk];
                        v2 +=
                            grad_a[i][j].at(idx)[l] * gf[j] * coef.a(idx, kk, l) * gf[i] * gphi[kk];
                    }
                }
            }
        }
        v1_field.values_mut()[idx] = v1;
        v2_field.values_mut()[idx] = v2;
    }
    let v1 = -2.0 * inner(&v1_field, &one)?;
    let v2 = inner(&v2_field, &one)?;

    // −2 ∫ ∇²Φ(A∇f)·(A∇f)
    let hess_phi = hessian(&parts.phi_big);
    let v3 = -2.0 * inner(&hessian_quadratic(&hess_phi, &parts.a_grad_f), &one)?;

    // − ∫ A∇f·∇[div(A∇Φ)] f
    let grad_div = grad(&parts.div_a_grad_phi);
    let a_grad_f_dot_grad_div = parts.a_grad_f.dot(&grad_div)?;
    let v4 = -inner(&a_grad_f_dot_grad_div, f)?;

    // −(2/Γ) ∫ (η + ¼A∇Φ·∇Φ + (s/8)·A_ij∂_jφ ∂_iA_kl ∂_lΦ ∂_kΦ
    //           + (s/4)·∇²φ(A∇Φ)·(A∇Φ)) f²
    let quad_phi = parts.a_grad_phi.dot(&parts.grad_phi_big)?; // A∇Φ·∇Φ
    let phi_small = cw.phi();
    let grad_phi_small = grad(&phi_small);
    let hess_phi_small = hessian(&phi_small);
    let hess_quad_small = hessian_quadratic(&hess_phi_small, &parts.a_grad_phi);
    let mut contraction = ScalarField::zeros(grid.clone());
    for idx in 0..grid.len() {
        let gphi_small = grad_phi_small.at(idx);
        let gphi = parts.grad_phi_big.at(idx);
        let mut c = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                for kk in 0..dim {
                    for l in 0..dim {
                        c += coef.a(idx, i, j)
                            * gphi_small[j]
                            * grad_a[kk][l].at(idx)[i]
                            * gphi[l]
                            * gphi[kk];
                    }
                }
            }
        }
        contraction.values_mut()[idx] = c;
    }
    let mut v5_field = ScalarField::zeros(grid.clone());
    for idx in 0..grid.len() {
        let integrand = parts.eta.values()[idx]
            + 0.25 * quad_phi.values()[idx]
            + s / 8.0 * contraction.values()[idx]
            + s / 4.0 * hess_quad_small.values()[idx];
        v5_field.values_mut()[idx] = integrand * f.values()[idx] * f.values()[idx];
    }
    let v5 = -2.0 / gamma * inner(&v5_field, &one)?;

    let rhs = b1 + b2 + b3 + b4 + v1 + v2 + v3 + v4 + v5;
    Ok((lhs - rhs).abs() / h1_scale(f, &parts.grad_f))
}

/// Paired boundary-term sum Σᵢ ∮ (A∇Φᵢ·n) fᵢ² with fᵢ = u·exp(Φᵢ/2); the
/// paired weight family makes it vanish. `pairing[j]` selects the weight
/// index used for the j-th field (identity pairing is the intended use;
/// any other assignment exposes the cancellation failure).
#[allow(clippy::too_many_arguments)]
pub fn check_pairing_cancellation(
    u: &ScalarField,
    family: &Arc<WeightFamily>,
    pairing: &[usize],
    s: f64,
    h: f64,
    horizon: f64,
    s_star: f64,
    t: f64,
    coef: &CoefficientSet,
) -> Result<f64> {
    if pairing.len() != family.weight_count() {
        return Err(crate::CoreError::InvalidParameter(format!(
            "pairing length {} does not match weight count {}",
            pairing.len(),
            family.weight_count()
        )));
    }
    let grid = u.grid().clone();
    let mut total = 0.0;
    for &w_idx in pairing {
        let cw = CarlemanWeight::new(family.clone(), w_idx, s, h, horizon, s_star)?;
        let phi_big = cw.phi_big(t)?;
        let f = u.zip(&phi_big, |uv, p| uv * (0.5 * p).exp())?;
        let a_grad_phi = coef.apply_principal(&grad(&phi_big))?;
        total += boundary_integral(&grid, |b| {
            let flux: f64 =
                (0..grid.dim()).map(|c| a_grad_phi.component(c)[b.node] * b.normal[c]).sum();
            flux * f.values()[b.node] * f.values()[b.node]
        });
    }
    Ok(total)
}
