//! The stacked weighted vector 𝐟 = (uᵢ·e^{Φᵢ/2})ᵢ, its frequency function,
//! and the staged structure of the log-convexity argument.
//!
//! Per time stamp the trace records
//!
//! ```text
//!   y(t)  = ‖𝐟‖²,
//!   N(t)  = ⟨𝒮𝐟,𝐟⟩ / y,   with ⟨𝒮𝐟,𝐟⟩ = Σᵢ ∫ A∇fᵢ·∇fᵢ − Σᵢ ∫ ηᵢfᵢ²
//! ```
//!
//! (the boundary-free volume form; the cancellation of the boundary terms is
//! tested separately through the pairing check), together with the operator
//! pairings ⟨𝒜𝐟,𝐟⟩, ⟨𝒮′𝐟,𝐟⟩, ⟨𝒮𝐟,𝒜𝐟⟩, the forcing norm
//! ‖𝐅‖ = ‖(−afᵢ + ½fᵢB·∇Φᵢ − B·∇fᵢ)ᵢ‖, and ‖∇𝐟‖.
//!
//! Stage checks:
//!
//! * stage 1 — ⟨𝒜𝐟,𝐟⟩ vanishes for the paired family (recorded per stamp);
//! * stage 2 — the two differential inequalities bounding ½y′ + Ny and N′,
//!   with an additive slack proportional to h² + dt²;
//! * stage 3 — sign conditions η ≤ 0, ⟨𝒮𝐟,𝐟⟩ ≥ 0 and the two-parameter fit
//!   of (Ĉ₀, Ĉ) in 2⟨𝒮𝐟,𝒜𝐟⟩+⟨𝒮′𝐟,𝐟⟩ ≤ ((1+Ĉ₀)/Γ)⟨𝒮𝐟,𝐟⟩ + (Ĉ/h²)y;
//! * stage 4 — the three-point log-convexity inequality
//!   y(T−lh)^{1+M} ≤ y(T)·y(T−2lh)^M·K̂ with the threshold M_l from the
//!   Γ-weighted quadrature ratio.

use std::sync::Arc;

use crate::commutator::apply_commutator_parts;
use crate::mesh::{inner, inner_vec, norm_vec, CoefficientSet, ScalarField};
use crate::quadrature::{adaptive_simpson, interp_linear};
use crate::solver::Trajectory;
use crate::weights::{CarlemanWeight, WeightFamily};
use crate::{CoreError, Result};

/// Slack coefficient of the stage-2 inequality checks: additive slack is
/// `SLACK_COEFF · (h_x² + dt²) · scale(t)`.
pub const SLACK_COEFF: f64 = 10.0;

/// Trace truncates when the stacked norm drops below this floor.
pub const Y_FLOOR: f64 = 1e-300;

/// The stacked vector of weighted fields at one time.
#[derive(Debug, Clone)]
pub struct FVec {
    pub fields: Vec<ScalarField>,
    pub time: f64,
}

/// fᵢ = u·exp(Φᵢ/2) for all 2d weights at time `t`.
pub fn assemble_fvec(
    u: &ScalarField,
    family: &Arc<WeightFamily>,
    s: f64,
    h: f64,
    horizon: f64,
    s_star: f64,
    t: f64,
) -> Result<FVec> {
    let mut fields = Vec::with_capacity(family.weight_count());
    for k in 0..family.weight_count() {
        let cw = CarlemanWeight::new(family.clone(), k, s, h, horizon, s_star)?;
        let phi_big = cw.phi_big(t)?;
        fields.push(u.zip(&phi_big, |uv, p| uv * (0.5 * p).exp())?);
    }
    Ok(FVec { fields, time: t })
}

/// Per-stamp ledger of the frequency-function quantities.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FrequencyStamp {
    pub t: f64,
    /// y = ‖𝐟‖²
    pub y: f64,
    /// N = ⟨𝒮𝐟,𝐟⟩/y
    pub freq: f64,
    pub s_ff: f64,
    pub a_ff: f64,
    pub sp_ff: f64,
    pub sa: f64,
    pub f_norm: f64,
    pub grad_norm: f64,
    /// max over weights and nodes of |∇Φᵢ| at this time
    pub max_grad_phi: f64,
    pub gamma: f64,
    /// max over weights and nodes of ηᵢ
    pub max_eta: f64,
    /// y + ‖∇𝐟‖², the H¹-type normalization
    pub h1_scale: f64,
}

/// Frequency trace of one run for fixed Carleman parameters (s, h).
#[derive(Debug, Clone)]
pub struct FrequencyTrace {
    pub stamps: Vec<FrequencyStamp>,
    pub s: f64,
    pub h: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Notice when the trace stopped early (vanishing y).
    pub truncated: Option<String>,
    /// Largest grid spacing of the run, for slack models.
    pub hx: f64,
}

impl FrequencyTrace {
    pub fn is_vacuous(&self) -> bool {
        self.stamps.is_empty()
    }

    /// CSV export with one row per stamp.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y,N,S_ff,A_ff,Sp_ff,SA,Fnorm,gradnorm\n");
        for r in &self.stamps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.t, r.y, r.freq, r.s_ff, r.a_ff, r.sp_ff, r.sa, r.f_norm, r.grad_norm
            ));
        }
        out
    }
}

/// Evaluate the full ledger along a trajectory. `s` must not exceed the
/// admissible `s_star` for the trajectory's ellipticity constant.
pub fn compute_trace(
    traj: &Trajectory,
    family: &Arc<WeightFamily>,
    s: f64,
    h: f64,
    s_star: f64,
) -> Result<FrequencyTrace> {
    if s > s_star {
        return Err(CoreError::InvalidParameter(format!("s = {s} exceeds s* = {s_star}")));
    }
    let coef = traj.coefficients();
    let horizon = traj.horizon();
    let grid = traj.grid().clone();
    let dim = grid.dim();

    let weights: Vec<CarlemanWeight> = (0..family.weight_count())
        .map(|k| CarlemanWeight::new(family.clone(), k, s, h, horizon, s_star))
        .collect::<Result<_>>()?;

    let mut stamps = Vec::with_capacity(traj.times().len());
    let mut truncated = None;

    for (&t, u) in traj.times().iter().zip(traj.snapshots()) {
        let gamma = horizon - t + h;
        let mut y = 0.0;
        let mut s_ff = 0.0;
        let mut a_ff = 0.0;
        let mut sp_ff = 0.0;
        let mut sa = 0.0;
        let mut f_norm_sq = 0.0;
        let mut grad_norm_sq = 0.0;
        let mut max_grad_phi: f64 = 0.0;
        let mut max_eta = f64::NEG_INFINITY;

        for cw in &weights {
            let phi_big = cw.phi_big(t)?;
            let f = u.zip(&phi_big, |uv, p| uv * (0.5 * p).exp())?;
            let parts = apply_commutator_parts(&f, cw, coef, t)?;

            y += inner(&f, &f)?;
            let eta_f = parts.eta.zip(&f, |e, v| e * v)?;
            s_ff += inner_vec(&parts.a_grad_f, &parts.grad_f)? - inner(&eta_f, &f)?;
            a_ff += inner(&parts.antisymmetric, &f)?;
            sp_ff += inner(&parts.symmetric_rate, &f)?;
            sa += inner(&parts.symmetric, &parts.antisymmetric)?;
            grad_norm_sq += norm_vec(&parts.grad_f).powi(2);

            // F = −a f + ½ f B·∇Φ − B·∇f
            let mut forcing = ScalarField::zeros(grid.clone());
            for idx in 0..grid.len() {
                let b = coef.drift_at(idx);
                let mut b_dot_gphi = 0.0;
                let mut b_dot_gf = 0.0;
                for c in 0..dim {
                    b_dot_gphi += b[c] * parts.grad_phi_big.at(idx)[c];
                    b_dot_gf += b[c] * parts.grad_f.at(idx)[c];
                }
                forcing.values_mut()[idx] = -coef.potential_values()[idx] * f.values()[idx]
                    + 0.5 * f.values()[idx] * b_dot_gphi
                    - b_dot_gf;
            }
            f_norm_sq += inner(&forcing, &forcing)?;

            max_eta = max_eta.max(parts.eta.values().iter().cloned().fold(f64::MIN, f64::max));
            let scale = s / gamma;
            let gp = family.grad_phi(cw.index());
            max_grad_phi = max_grad_phi.max(scale * gp.max_abs());
        }

        if y < Y_FLOOR {
            truncated = Some(format!("trace truncated at t = {t}: ‖f‖² = {y} below floor"));
            break;
        }
        stamps.push(FrequencyStamp {
            t,
            y,
            freq: s_ff / y,
            s_ff,
            a_ff,
            sp_ff,
            sa,
            f_norm: f_norm_sq.sqrt(),
            grad_norm: grad_norm_sq.sqrt(),
            max_grad_phi,
            gamma,
            max_eta,
            h1_scale: y + grad_norm_sq,
        })
    }

    Ok(FrequencyTrace {
        stamps,
        s,
        h,
        horizon,
        dt: traj.dt(),
        truncated,
        hx: grid.max_spacing(),
    })
}

/// One interior stamp of the stage-2 check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Stage2Record {
    pub t: f64,
    /// |½y′ + Ny|
    pub lhs1: f64,
    /// (‖a‖ + max‖∇Φ‖·‖B‖)·y + ‖B‖·‖∇𝐟‖·‖𝐟‖
    pub rhs1: f64,
    pub slack1: f64,
    pub pass1: bool,
    /// N′
    pub lhs2: f64,
    /// (2⟨𝒮𝐟,𝒜𝐟⟩ + ⟨𝒮′𝐟,𝐟⟩)/y + 2(‖a‖+max‖∇Φ‖‖B‖)² + 2‖B‖²‖∇𝐟‖²/y
    pub rhs2: f64,
    pub slack2: f64,
    pub pass2: bool,
    /// N′y² vs (2⟨𝒮𝐟,𝒜𝐟⟩+⟨𝒮′𝐟,𝐟⟩)y + ‖𝐅‖²y, before the forcing expansion
    pub pass2_raw: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Stage2Report {
    pub records: Vec<Stage2Record>,
    pub vacuous: bool,
}

impl Stage2Report {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass1 && r.pass2 && r.pass2_raw)
    }
}

/// Differential inequalities for y and N at interior stamps, centered
/// differences with the matched slack model.
pub fn check_stage2(trace: &FrequencyTrace, coef: &CoefficientSet) -> Stage2Report {
    if trace.stamps.len() < 3 {
        return Stage2Report { records: Vec::new(), vacuous: true };
    }
    let a_sup = coef.potential_sup();
    let b_sup = coef.drift_sup();
    let disc = trace.hx * trace.hx + trace.dt * trace.dt;

    let mut records = Vec::new();
    for k in 1..trace.stamps.len() - 1 {
        let (prev, cur, next) = (&trace.stamps[k - 1], &trace.stamps[k], &trace.stamps[k + 1]);
        let two_dt = next.t - prev.t;
        let y_prime = (next.y - prev.y) / two_dt;
        let n_prime = (next.freq - prev.freq) / two_dt;
        let coef1 = a_sup + cur.max_grad_phi * b_sup;

        let lhs1 = (0.5 * y_prime + cur.s_ff).abs();
        let rhs1 = coef1 * cur.y + b_sup * cur.grad_norm * cur.y.sqrt();
        let scale1 = (1.0 + cur.freq.abs()).powi(3) * cur.y;
        let slack1 = SLACK_COEFF * disc * scale1;

        let lhs2 = n_prime;
        let rhs2 = (2.0 * cur.sa + cur.sp_ff) / cur.y
            + 2.0 * coef1 * coef1
            + 2.0 * b_sup * b_sup * cur.grad_norm * cur.grad_norm / cur.y;
        let scale2 =
            (1.0 + cur.freq.abs()).powi(3) * (1.0 + 1.0 / (cur.gamma * cur.gamma * cur.gamma));
        let slack2 = SLACK_COEFF * disc * scale2;

        let raw_lhs = n_prime * cur.y * cur.y;
        let raw_rhs = (2.0 * cur.sa + cur.sp_ff) * cur.y + cur.f_norm * cur.f_norm * cur.y;

        records.push(Stage2Record {
            t: cur.t,
            lhs1,
            rhs1,
            slack1,
            pass1: lhs1 <= rhs1 + slack1,
            lhs2,
            rhs2,
            slack2,
            pass2: lhs2 <= rhs2 + slack2,
            pass2_raw: raw_lhs <= raw_rhs + slack2 * cur.y * cur.y,
        });
    }
    Stage2Report { records, vacuous: false }
}

/// Stage-3 outcome: sign conditions plus the fitted pair (Ĉ₀, Ĉ).
#[derive(Debug, Clone, serde::Serialize)]
pub struct Stage3Report {
    pub max_eta: f64,
    /// min over stamps of ⟨𝒮𝐟,𝐟⟩/y
    pub min_sff_ratio: f64,
    pub c0_hat: f64,
    pub c_hat: f64,
    pub fit_exists: bool,
    pub vacuous: bool,
}

/// Sign conditions and the (Ĉ₀, Ĉ) fit. Sign violations are hard errors:
/// they indicate s > s* or a corrupted weight family.
pub fn check_stage3(trace: &FrequencyTrace) -> Result<Stage3Report> {
    if trace.is_vacuous() {
        return Ok(Stage3Report {
            max_eta: f64::NEG_INFINITY,
            min_sff_ratio: f64::INFINITY,
            c0_hat: 0.0,
            c_hat: 0.0,
            fit_exists: true,
            vacuous: true,
        });
    }
    let max_eta = trace.stamps.iter().map(|r| r.max_eta).fold(f64::NEG_INFINITY, f64::max);
    if max_eta > 1e-12 {
        return Err(CoreError::SignViolation(format!("max η = {max_eta:.3e} > 1e-12")));
    }
    let min_sff_ratio =
        trace.stamps.iter().map(|r| r.s_ff / r.y).fold(f64::INFINITY, f64::min);
    if min_sff_ratio < -1e-10 {
        return Err(CoreError::SignViolation(format!(
            "⟨Sf,f⟩ = {min_sff_ratio:.3e}·y < −1e-10·y"
        )));
    }

    // smallest Ĉ₀ on a coarse grid, then the smallest Ĉ for it; any Ĉ₀
    // admits a finite Ĉ over finitely many stamps, so the reported content
    // is the size and refinement stability of Ĉ
    let h2 = trace.h * trace.h;
    let mut c0_hat = f64::NAN;
    let mut c_hat = f64::NAN;
    for step in 1..20 {
        let c0 = 0.05 * step as f64;
        if c0 >= 1.0 {
            break;
        }
        let required = trace
            .stamps
            .iter()
            .map(|r| {
                let lhs = 2.0 * r.sa + r.sp_ff;
                h2 * (lhs - (1.0 + c0) / r.gamma * r.s_ff) / r.y
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if required.is_finite() {
            c0_hat = c0;
            c_hat = required.max(1e-12);
            break;
        }
    }
    let fit_exists = c0_hat.is_finite() && c0_hat < 1.0 && c_hat > 0.0;
    Ok(Stage3Report { max_eta, min_sff_ratio, c0_hat, c_hat, fit_exists, vacuous: false })
}

/// Stage-4 outcome for one trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Stage4Report {
    pub l: f64,
    pub m_threshold: f64,
    pub m_used: f64,
    /// (1+M)·ln y(T−lh) − ln y(T) − M·ln y(T−2lh) at M = m_used
    pub log_residual: f64,
    /// exp(log_residual): the smallest constant closing the inequality
    pub k_hat: f64,
    /// inequality at 2M with the fitted K̂
    pub pass_at_double_m: bool,
    /// exactness of the affinity of M ↦ (1+M)ln y(t₂) − M ln y(t₁)
    pub affine_defect: f64,
    pub vacuous: bool,
}

/// Three-point log-convexity check at times T − 2lh < T − lh < T.
///
/// `m` defaults to the threshold M_l computed by quadrature of the
/// Γ-weighted ratio with the fitted Ĉ₀; an explicit `m` below M_l is
/// refused.
pub fn check_stage4(
    trace: &FrequencyTrace,
    l: f64,
    m: Option<f64>,
    c0_hat: f64,
    coef: &CoefficientSet,
) -> Result<Stage4Report> {
    if trace.is_vacuous() {
        return Ok(Stage4Report {
            l,
            m_threshold: 0.0,
            m_used: 0.0,
            log_residual: 0.0,
            k_hat: 1.0,
            pass_at_double_m: true,
            affine_defect: 0.0,
            vacuous: true,
        });
    }
    let t_final = trace.horizon;
    let h = trace.h;
    if !(l > 1.0) {
        return Err(CoreError::InvalidParameter(format!("l = {l} must exceed 1")));
    }
    if h > (t_final / (4.0 * l)).min(1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "h = {h} outside (0, min(T/(4l), 1)] = (0, {}]",
            (t_final / (4.0 * l)).min(1.0)
        )));
    }

    let m_threshold = stage4_m_threshold(t_final, h, l, c0_hat, coef);
    let m_used = match m {
        None => m_threshold,
        Some(mv) if mv >= m_threshold => mv,
        Some(mv) => {
            return Err(CoreError::InvalidParameter(format!(
                "M = {mv} below the threshold M_l = {m_threshold}"
            )))
        }
    };

    let times: Vec<f64> = trace.stamps.iter().map(|r| r.t).collect();
    let log_y: Vec<f64> = trace.stamps.iter().map(|r| r.y.ln()).collect();
    let ln_y = |t: f64| interp_linear(&times, &log_y, t);
    let (t1, t2, t3) = (t_final - 2.0 * l * h, t_final - l * h, t_final);

    let residual_at = |mv: f64| (1.0 + mv) * ln_y(t2) - ln_y(t3) - mv * ln_y(t1);
    let log_residual = residual_at(m_used);
    let k_hat = log_residual.exp();
    let pass_at_double_m = residual_at(2.0 * m_used) <= log_residual + 1e-12 * log_residual.abs();

    // affinity in M is exact: midpoint value equals the mean of endpoints
    let affine_defect = (residual_at(m_used) + residual_at(3.0 * m_used)
        - 2.0 * residual_at(2.0 * m_used))
        .abs();

    Ok(Stage4Report {
        l,
        m_threshold,
        m_used,
        log_residual,
        k_hat,
        pass_at_double_m,
        affine_defect,
        vacuous: false,
    })
}

/// M_l = 3·∫_{T−lh}^{T} w / ∫_{T−2lh}^{T−lh} w with
/// w(t) = e^{2λ‖B‖²t} (T−t+h)^{−1−Ĉ₀}.
pub fn stage4_m_threshold(t_final: f64, h: f64, l: f64, c0_hat: f64, coef: &CoefficientSet) -> f64 {
    let s1 = 2.0 * coef.ellipticity() * coef.drift_sup().powi(2);
    let w = |t: f64| (s1 * t).exp() / (t_final - t + h).powf(1.0 + c0_hat);
    let upper = adaptive_simpson(w, t_final - l * h, t_final, 1e-10);
    let lower = adaptive_simpson(w, t_final - 2.0 * l * h, t_final - l * h, 1e-10);
    3.0 * upper / lower
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use crate::solver::solve;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn family_on(grid: &Arc<Grid>) -> Arc<WeightFamily> {
        let mask: Vec<bool> = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i)[0];
                x > 0.4 && x < 0.6
            })
            .collect();
        Arc::new(WeightFamily::build(grid.clone(), &mask, 1).unwrap())
    }

    struct Setup {
        grid: Arc<Grid>,
        family: Arc<WeightFamily>,
        coef: CoefficientSet,
        s_star: f64,
        traj: Trajectory,
    }

    fn heat_setup(n: usize, dt: f64, t_final: f64) -> Setup {
        let grid = Grid::interval(0.0, 1.0, n).unwrap();
        let family = family_on(&grid);
        let coef = CoefficientSet::isotropic(grid.clone(), 1.0, [0.0, 0.0], 0.0, 1.0).unwrap();
        let s_star = family.max_admissible_s(1.0).unwrap();
        let u0 = ScalarField::from_fn(grid.clone(), |x| (PI * x[0]).cos());
        let traj = solve(&u0, &coef, t_final, dt).unwrap();
        Setup { grid, family, coef, s_star, traj }
    }

    #[test]
    fn fvec_basics_and_domination() {
        let s = heat_setup(129, 1e-3, 0.05);
        let u = &s.traj.snapshots()[0];
        let fv = assemble_fvec(u, &s.family, s.s_star / 2.0, 0.5, 1.0, s.s_star, 0.3).unwrap();
        assert_eq!(fv.fields.len(), 2);
        // at the critical point φ₁ = 0, so f₁(p) = u(p)
        let p = s.family.critical_node(0);
        assert_relative_eq!(fv.fields[0].values()[p], u.values()[p], epsilon = 1e-14);
        // |f_{d+i}| ≤ |f_i| nodewise
        for idx in 0..s.grid.len() {
            assert!(fv.fields[1].values()[idx].abs() <= fv.fields[0].values()[idx].abs() + 1e-15);
        }
        // zero field maps to zero
        let zero = ScalarField::zeros(s.grid.clone());
        let fz = assemble_fvec(&zero, &s.family, s.s_star / 2.0, 0.5, 1.0, s.s_star, 0.3).unwrap();
        assert_eq!(fz.fields[0].max_abs(), 0.0);
        // s > s* rejected
        assert!(assemble_fvec(u, &s.family, 2.0 * s.s_star, 0.5, 1.0, s.s_star, 0.3).is_err());
    }

    #[test]
    fn stage1_cancellation_along_heat_run() {
        let s = heat_setup(257, 1e-3, 0.1);
        let trace =
            compute_trace(&s.traj, &s.family, s.s_star / 2.0, 0.25, s.s_star).unwrap();
        for r in &trace.stamps {
            assert!(
                r.a_ff.abs() <= 1e-5 * r.h1_scale,
                "⟨Af,f⟩ = {:.3e} vs scale {:.3e} at t = {}",
                r.a_ff,
                r.h1_scale,
                r.t
            );
        }
    }

    #[test]
    fn rayleigh_quotient_limit_for_small_s() {
        let s = heat_setup(257, 1e-3, 0.05);
        let s_small = 1e-6;
        let trace = compute_trace(&s.traj, &s.family, s_small, 0.5, s.s_star).unwrap();
        for r in &trace.stamps {
            assert_relative_eq!(r.freq, PI * PI, max_relative = 0.02);
        }
    }

    #[test]
    fn constant_run_has_nonnegative_sff() {
        // u ≡ 1: ⟨Sf,f⟩ = Σ∫A∇fᵢ·∇fᵢ − Σ∫ηᵢfᵢ² ≥ 0 since η ≤ 0
        let grid = Grid::interval(0.0, 1.0, 129).unwrap();
        let family = family_on(&grid);
        let coef = CoefficientSet::isotropic(grid.clone(), 1.0, [0.0, 0.0], 0.0, 1.0).unwrap();
        let s_star = family.max_admissible_s(1.0).unwrap();
        let u0 = ScalarField::constant(grid, 1.0);
        let traj = solve(&u0, &coef, 0.05, 1e-3).unwrap();
        let trace = compute_trace(&traj, &family, s_star / 4.0, 0.5, s_star).unwrap();
        for r in &trace.stamps {
            assert!(r.s_ff >= 0.0, "⟨Sf,f⟩ = {} at t = {}", r.s_ff, r.t);
        }
    }

    #[test]
    fn stage2_equality_case_and_drift_case() {
        // a = B = 0 forces 𝐅 = 0 and ½y′ + Ny = 0 up to discretization
        let s = heat_setup(257, 5e-4, 0.1);
        let trace = compute_trace(&s.traj, &s.family, s.s_star / 2.0, 0.25, s.s_star).unwrap();
        let report = check_stage2(&trace, &s.coef);
        assert!(!report.vacuous);
        for r in &report.records {
            assert!(r.pass1, "stage2 first inequality failed at t = {}: lhs {} slack {}", r.t, r.lhs1, r.slack1);
            assert!(r.pass2 && r.pass2_raw, "stage2 second inequality failed at t = {}", r.t);
            // rhs1 = 0 exactly in this case: the check is |½y′+Ny| ≤ slack
            assert_eq!(r.rhs1, 0.0);
        }

        // potential + drift case
        let grid = s.grid.clone();
        let coef =
            CoefficientSet::isotropic(grid.clone(), 1.0, [0.5, 0.0], -1.0, 1.0).unwrap();
        let u0 = ScalarField::from_fn(grid, |x| (PI * x[0]).cos() + 0.2);
        let traj = solve(&u0, &coef, 0.1, 5e-4).unwrap();
        let trace = compute_trace(&traj, &s.family, s.s_star / 2.0, 0.25, s.s_star).unwrap();
        let report = check_stage2(&trace, &coef);
        assert!(report.all_pass(), "stage-2 failed with drift/potential");
    }

    #[test]
    fn stage3_signs_and_fit() {
        let s = heat_setup(257, 1e-3, 0.1);
        let trace = compute_trace(&s.traj, &s.family, s.s_star / 2.0, 0.25, s.s_star).unwrap();
        let report = check_stage3(&trace).unwrap();
        assert!(report.max_eta <= 1e-12);
        assert!(report.min_sff_ratio >= -1e-10);
        assert!(report.fit_exists);
        assert!(report.c0_hat > 0.0 && report.c0_hat < 1.0);
        assert!(report.c_hat > 0.0);
    }

    #[test]
    fn stage3_fit_stable_under_refinement() {
        let run = |n: usize| {
            let s = heat_setup(n, 1e-3, 0.1);
            let trace =
                compute_trace(&s.traj, &s.family, s.s_star / 2.0, 0.25, s.s_star).unwrap();
            check_stage3(&trace).unwrap().c_hat
        };
        let (c257, c513) = (run(257), run(513));
        let rel = (c257 - c513).abs() / c513.abs().max(1e-30);
        assert!(rel <= 0.2, "Ĉ drifted {rel:.3} between n=257 and n=513: {c257:.4e} vs {c513:.4e}");
    }

    #[test]
    fn oversized_s_triggers_hard_failure() {
        let s = heat_setup(129, 1e-3, 0.05);
        // bypass the guard by lying about s*: the sign check must catch it
        let bad = compute_trace(&s.traj, &s.family, 1.5 * s.s_star, 0.5, 2.0 * s.s_star).unwrap();
        let err = check_stage3(&bad).unwrap_err();
        assert!(matches!(err, CoreError::SignViolation(_)), "got {err}");
    }

    #[test]
    fn stage4_threshold_and_log_convexity() {
        let s = heat_setup(129, 1e-3, 1.0);
        let trace = compute_trace(&s.traj, &s.family, s.s_star / 2.0, 0.1, s.s_star).unwrap();
        let c0 = check_stage3(&trace).unwrap().c0_hat;

        // closed form for the B = 0 threshold: ∫(T−t+h)^{−1−c} = [(T−t+h)^{−c}/c]
        let l = 2.0;
        let m_l = stage4_m_threshold(1.0, 0.1, l, c0, &s.coef);
        let pow = |x: f64| x.powf(-c0);
        let expected = 3.0 * (pow(0.1) - pow(0.3)) / (pow(0.3) - pow(0.5));
        assert_relative_eq!(m_l, expected, max_relative = 1e-8);

        let report = check_stage4(&trace, l, None, c0, &s.coef).unwrap();
        assert!(report.k_hat.is_finite() && report.k_hat > 0.0);
        assert!(report.pass_at_double_m);
        assert!(report.affine_defect <= 1e-9, "affinity defect {}", report.affine_defect);

        // M below the threshold is refused
        assert!(check_stage4(&trace, l, Some(report.m_threshold / 2.0), c0, &s.coef).is_err());
        // h outside the admissible range is refused
        let wide = compute_trace(&s.traj, &s.family, s.s_star / 2.0, 0.5, s.s_star).unwrap();
        assert!(check_stage4(&wide, l, None, c0, &s.coef).is_err());
    }

    #[test]
    fn zero_run_is_vacuous() {
        let grid = Grid::interval(0.0, 1.0, 65).unwrap();
        let family = family_on(&grid);
        let coef = CoefficientSet::isotropic(grid.clone(), 1.0, [0.0, 0.0], 0.0, 1.0).unwrap();
        let s_star = family.max_admissible_s(1.0).unwrap();
        let u0 = ScalarField::zeros(grid);
        let traj = solve(&u0, &coef, 0.02, 1e-3).unwrap();
        let trace = compute_trace(&traj, &family, s_star / 2.0, 0.5, s_star).unwrap();
        assert!(trace.is_vacuous());
        assert!(trace.truncated.is_some());
        assert!(check_stage3(&trace).unwrap().vacuous);
        assert!(check_stage2(&trace, &coef).vacuous);
        assert!(check_stage4(&trace, 2.0, None, 0.5, &coef).unwrap().vacuous);
    }

    #[test]
    fn sff_derivative_matches_operator_form() {
        // d/dt⟨S𝐟,𝐟⟩ = 2⟨S𝐟,𝐟ₜ⟩ + ⟨S′𝐟,𝐟⟩ with 𝐟ₜ by centered differences of
        // the assembled fields; the residual decays under joint refinement
        let run = |n: usize, dt: f64| -> f64 {
            let s = heat_setup(n, dt, 0.04);
            let (sh, horizon) = (0.25, s.traj.horizon());
            let sv = s.s_star / 2.0;
            let k = s.traj.times().len() / 2;
            let t = s.traj.times()[k];
            let fv = |j: usize| {
                assemble_fvec(
                    &s.traj.snapshots()[j],
                    &s.family,
                    sv,
                    sh,
                    horizon,
                    s.s_star,
                    s.traj.times()[j],
                )
                .unwrap()
            };
            let (prev, cur, next) = (fv(k - 1), fv(k), fv(k + 1));

            let sff_at = |j: usize, f: &FVec| -> f64 {
                let mut total = 0.0;
                for (w_idx, field) in f.fields.iter().enumerate() {
                    let cw = CarlemanWeight::new(
                        s.family.clone(),
                        w_idx,
                        sv,
                        sh,
                        horizon,
                        s.s_star,
                    )
                    .unwrap();
                    let parts =
                        apply_commutator_parts(field, &cw, &s.coef, s.traj.times()[j]).unwrap();
                    total += inner(&parts.symmetric, field).unwrap();
                }
                total
            };
            let lhs = (sff_at(k + 1, &next) - sff_at(k - 1, &prev)) / (2.0 * dt);

            let mut rhs = 0.0;
            let mut scale = 0.0;
            for (w_idx, field) in cur.fields.iter().enumerate() {
                let cw = CarlemanWeight::new(s.family.clone(), w_idx, sv, sh, horizon, s.s_star)
                    .unwrap();
                let parts = apply_commutator_parts(field, &cw, &s.coef, t).unwrap();
                let f_t = next.fields[w_idx]
                    .zip(&prev.fields[w_idx], |a, b| (a - b) / (2.0 * dt))
                    .unwrap();
                rhs += 2.0 * inner(&parts.symmetric, &f_t).unwrap()
                    + inner(&parts.symmetric_rate, field).unwrap();
                scale += inner(field, field).unwrap() + norm_vec(&parts.grad_f).powi(2);
            }
            (lhs - rhs).abs() / scale
        };
        let (r1, r2) = (run(129, 2e-3), run(257, 1e-3));
        assert!(r2 < r1, "residual should shrink: {r1:.3e} -> {r2:.3e}");
        let order = (r1 / r2).log2();
        assert!((1.0..=3.0).contains(&order), "order {order}: {r1:.3e} -> {r2:.3e}");
    }
}
