//! Standalone two-ODE interpolation lemma on sampled data.
//!
//! Given positive sampled functions y, N on [0, T] and continuous forcings
//! F₁, F₂ satisfying
//!
//! ```text
//!   |½y′ + Ny| ≤ (½N + S₀/(T−t+h) + S₁)y + F₁y,
//!   N′        ≤ ((1+S₀)/(T−t+h) + S₁)N + F₂,
//! ```
//!
//! the lemma interpolates y at any 0 ≤ t₁ < t₂ < t₃ ≤ T:
//!
//! ```text
//!   y(t₂)^{1+M} ≤ y(t₃)·y(t₁)^M·e^D·((T−t₁+h)/(T−t₃+h))^{3S₀(1+M)}
//! ```
//!
//! for every M ≥ M₀, where M₀ is the ratio of Γ-weighted integrals over
//! [t₂,t₃] and [t₁,t₂] and D collects the forcing contributions. Below M₀
//! the lemma asserts nothing and the check refuses to run.
//!
//! A constructive sampler integrates the two ODEs with inequality-respecting
//! drifts and provides randomized inputs whose hypotheses hold exactly; the
//! intermediate bounds of the proof chain are exposed as diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quadrature::{adaptive_simpson, interp_linear};
use crate::{CoreError, Result};

/// Relative tolerance of the M₀ and D quadratures.
const QUAD_TOL: f64 = 1e-10;

/// Sampled input to the interpolation lemma.
#[derive(Debug, Clone)]
pub struct OdeLemmaInput {
    pub horizon: f64,
    pub h: f64,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub freq: Vec<f64>,
    pub forcing1: Vec<f64>,
    pub forcing2: Vec<f64>,
    pub s0: f64,
    pub s1: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl OdeLemmaInput {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: f64,
        h: f64,
        times: Vec<f64>,
        y: Vec<f64>,
        freq: Vec<f64>,
        forcing1: Vec<f64>,
        forcing2: Vec<f64>,
        s0: f64,
        s1: f64,
        triple: (f64, f64, f64),
    ) -> Result<Self> {
        if horizon <= 0.0 || h <= 0.0 {
            return Err(CoreError::InvalidParameter("T and h must be positive".into()));
        }
        if s0 < 0.0 || s1 < 0.0 {
            return Err(CoreError::InvalidParameter("S₀, S₁ must be nonnegative".into()));
        }
        let n = times.len();
        if n < 3
            || y.len() != n
            || freq.len() != n
            || forcing1.len() != n
            || forcing2.len() != n
        {
            return Err(CoreError::InvalidParameter("need ≥ 3 aligned samples".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidParameter("sample times must increase strictly".into()));
        }
        if y.iter().any(|&v| v <= 0.0) || freq.iter().any(|&v| v <= 0.0) {
            return Err(CoreError::InvalidParameter("y and N must be strictly positive".into()));
        }
        let (t1, t2, t3) = triple;
        if !(0.0 <= t1 && t1 < t2 && t2 < t3 && t3 <= horizon) {
            return Err(CoreError::InvalidParameter(format!(
                "need 0 ≤ t₁ < t₂ < t₃ ≤ T, got ({t1}, {t2}, {t3})"
            )));
        }
        Ok(Self { horizon, h, times, y, freq, forcing1, forcing2, s0, s1, t1, t2, t3 })
    }

    fn gamma_weight(&self, t: f64) -> f64 {
        (t * self.s1).exp() / (self.horizon - t + self.h).powf(1.0 + self.s0)
    }

    /// Threshold M₀ = 3·∫_{t₂}^{t₃} e^{tS₁}Γ^{−1−S₀} / ∫_{t₁}^{t₂} (same).
    pub fn compute_m0(&self) -> f64 {
        let upper = adaptive_simpson(|t| self.gamma_weight(t), self.t2, self.t3, QUAD_TOL);
        let lower = adaptive_simpson(|t| self.gamma_weight(t), self.t1, self.t2, QUAD_TOL);
        3.0 * upper / lower
    }

    /// Trapezoid integral of |v| over [a, b] ∩ sample range, with linear
    /// interpolation at the endpoints.
    fn abs_integral(&self, values: &[f64], a: f64, b: f64) -> f64 {
        let mut pts = vec![a];
        for &t in &self.times {
            if t > a && t < b {
                pts.push(t);
            }
        }
        pts.push(b);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let va = interp_linear(&self.times, values, w[0]).abs();
            let vb = interp_linear(&self.times, values, w[1]).abs();
            total += 0.5 * (w[1] - w[0]) * (va + vb);
        }
        total
    }

    /// D = 3(M+1)·[(∫_{t₁}^{t₃}|F₂| + S₁)(t₃−t₁) + ∫_{t₁}^{t₃}|F₁|].
    pub fn compute_d(&self, m: f64) -> Result<f64> {
        if m < 0.0 {
            return Err(CoreError::InvalidParameter(format!("M = {m} must be nonnegative")));
        }
        let f2 = self.abs_integral(&self.forcing2, self.t1, self.t3);
        let f1 = self.abs_integral(&self.forcing1, self.t1, self.t3);
        Ok(3.0 * (m + 1.0) * ((f2 + self.s1) * (self.t3 - self.t1) + f1))
    }

    /// Residuals of the two hypothesis inequalities at interior samples,
    /// derivatives by centered differences, pass/fail against the
    /// caller-supplied additive slack.
    pub fn check_hypotheses(&self, slack: f64) -> HypothesisReport {
        let mut records = Vec::new();
        for k in 1..self.times.len() - 1 {
            let dt2 = self.times[k + 1] - self.times[k - 1];
            let y_prime = (self.y[k + 1] - self.y[k - 1]) / dt2;
            let n_prime = (self.freq[k + 1] - self.freq[k - 1]) / dt2;
            let t = self.times[k];
            let gamma = self.horizon - t + self.h;
            let (y, n) = (self.y[k], self.freq[k]);

            let bound1 =
                (0.5 * n + self.s0 / gamma + self.s1) * y + self.forcing1[k] * y;
            let residual1 = (0.5 * y_prime + n * y).abs() - bound1;

            let bound2 = ((1.0 + self.s0) / gamma + self.s1) * n + self.forcing2[k];
            let residual2 = n_prime - bound2;

            records.push(HypothesisRecord {
                t,
                residual1,
                residual2,
                pass: residual1 <= slack && residual2 <= slack,
            });
        }
        HypothesisReport { records, slack }
    }

    /// ln y interpolated at `t` (samples are positive by construction).
    fn ln_y(&self, t: f64) -> f64 {
        let log_y: Vec<f64> = self.y.iter().map(|v| v.ln()).collect();
        interp_linear(&self.times, &log_y, t)
    }

    /// The interpolation inequality at a given M ≥ M₀, in log form; refuses
    /// M below the threshold since the lemma asserts nothing there.
    pub fn check_conclusion(&self, m: f64) -> Result<ConclusionReport> {
        let m0 = self.compute_m0();
        if m < m0 {
            return Err(CoreError::InvalidParameter(format!(
                "M = {m} below M₀ = {m0}: the lemma is silent there"
            )));
        }
        let d = self.compute_d(m)?;
        let ratio = (self.horizon - self.t1 + self.h) / (self.horizon - self.t3 + self.h);
        let log_lhs = (1.0 + m) * self.ln_y(self.t2);
        let log_rhs =
            self.ln_y(self.t3) + m * self.ln_y(self.t1) + d + 3.0 * self.s0 * (1.0 + m) * ratio.ln();
        Ok(ConclusionReport {
            m,
            m0,
            d,
            log_lhs,
            log_rhs,
            pass: log_lhs <= log_rhs + 1e-12 * log_rhs.abs(),
        })
    }

    /// Intermediate bounds of the proof chain, evaluated as diagnostics;
    /// each record states the observed margin (≥ −tol means the bound holds).
    pub fn proof_chain_diagnostics(&self, m: f64) -> Result<Vec<ChainDiagnostic>> {
        let m0 = self.compute_m0();
        if m < m0 {
            return Err(CoreError::InvalidParameter(format!("M = {m} below M₀ = {m0}")));
        }
        let (t1, t2, t3) = (self.t1, self.t2, self.t3);
        let gamma = |t: f64| self.horizon - t + self.h;
        let n_at = |t: f64| interp_linear(&self.times, &self.freq, t);
        let n2 = n_at(t2);
        let f2_12 = self.abs_integral(&self.forcing2, t1, t2);
        let f2_23 = self.abs_integral(&self.forcing2, t2, t3);
        let f1_12 = self.abs_integral(&self.forcing1, t1, t2);
        let f1_23 = self.abs_integral(&self.forcing1, t2, t3);
        let mut out = Vec::new();

        // backward bound for N on (t1, t2)
        let mut margin = f64::INFINITY;
        for &t in self.times.iter().filter(|&&t| t > t1 && t < t2) {
            let lower = (gamma(t2) / gamma(t)).powf(1.0 + self.s0)
                * (-self.s1 * (t2 - t)).exp()
                * n2
                - f2_12;
            margin = margin.min(n_at(t) - lower);
        }
        out.push(ChainDiagnostic { name: "freq_lower_bound_left".into(), margin });

        // forward bound for N on (t2, t3)
        let mut margin = f64::INFINITY;
        for &t in self.times.iter().filter(|&&t| t > t2 && t < t3) {
            let upper = (self.s1 * (t - t2)).exp()
                * (gamma(t2) / gamma(t)).powf(1.0 + self.s0)
                * (n2 + f2_23);
            margin = margin.min(upper - n_at(t));
        }
        out.push(ChainDiagnostic { name: "freq_upper_bound_right".into(), margin });

        // left log-convexity bound
        let kernel_left = adaptive_simpson(
            |t| (gamma(t2) / gamma(t)).powf(1.0 + self.s0) * (-self.s1 * (t2 - t)).exp(),
            t1,
            t2,
            QUAD_TOL,
        );
        let left_rhs = (self.ln_y(t1) - self.ln_y(t2))
            + 2.0 * self.s0 * (gamma(t1) / gamma(t2)).ln()
            + 2.0 * (t2 - t1) * (self.s1 + f2_12)
            + 2.0 * f1_12;
        out.push(ChainDiagnostic {
            name: "left_interval_bound".into(),
            margin: left_rhs - n2 * kernel_left,
        });

        // right log-convexity bound
        let kernel_right = adaptive_simpson(
            |t| (gamma(t2) / gamma(t)).powf(1.0 + self.s0) * (self.s1 * (t - t2)).exp(),
            t2,
            t3,
            QUAD_TOL,
        );
        let right_rhs = 3.0 * (n2 + f2_23) * kernel_right
            + self.ln_y(t3) - self.ln_y(t2)
            + 3.0 * self.s0 * (gamma(t2) / gamma(t3)).ln()
            + 3.0 * self.s1 * (t3 - t2)
            + 3.0 * f1_23;
        out.push(ChainDiagnostic { name: "right_interval_bound".into(), margin: right_rhs });

        // combined pre-conclusion inequality at M
        let x_log = (self.ln_y(t1) - self.ln_y(t2))
            + 2.0 * self.s0 * (gamma(t1) / gamma(t2)).ln()
            + 2.0 * (t2 - t1) * (self.s1 + f2_12)
            + 2.0 * f1_12;
        let combined_rhs = self.ln_y(t3)
            + m * x_log
            + m * (t2 - t1) * f2_23
            + 3.0 * self.s0 * (gamma(t2) / gamma(t3)).ln()
            + 3.0 * self.s1 * (t3 - t2)
            + 3.0 * f1_23;
        out.push(ChainDiagnostic {
            name: "combined_pre_conclusion".into(),
            margin: combined_rhs - self.ln_y(t2),
        });

        Ok(out)
    }
}

/// One interior-sample hypothesis record: residual ≤ 0 means the inequality
/// holds without slack.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisRecord {
    pub t: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisReport {
    pub records: Vec<HypothesisRecord>,
    pub slack: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConclusionReport {
    pub m: f64,
    pub m0: f64,
    pub d: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub pass: bool,
}

/// Named margin of one intermediate proof bound; nonnegative means the bound
/// holds as stated.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChainDiagnostic {
    pub name: String,
    pub margin: f64,
}

/// Integrate the two ODEs with inequality-respecting drifts and sample the
/// result: hypotheses hold exactly in the continuum, so the conclusion must
/// hold at every M ≥ M₀. Randomized per seed; deterministic for a fixed one.
pub fn constructive_sample(seed: u64) -> OdeLemmaInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon: f64 = rng.gen_range(0.8..1.5);
    let h: f64 = rng.gen_range(0.5..1.0);
    let s0: f64 = rng.gen_range(0.0..0.7);
    let s1: f64 = rng.gen_range(0.0..0.8);
    let f1_const: f64 = rng.gen_range(0.0..1.0);
    let f2_const: f64 = rng.gen_range(0.0..0.5);
    let n0: f64 = rng.gen_range(0.3..2.0);
    let z0: f64 = rng.gen_range(-1.0..1.0);
    let (a1, b1): (f64, f64) = (rng.gen_range(1.0..4.0), rng.gen_range(0.0..6.28));
    let (a2, b2): (f64, f64) = (rng.gen_range(1.0..4.0), rng.gen_range(0.0..6.28));

    // drifts: ρ ∈ [−0.9, 0.9] saturates the first inequality, θ ∈ [0, 0.5]
    // keeps N growth below its admissible ceiling
    let rho = |t: f64| 0.9 * (a1 * t + b1).sin();
    let theta = |t: f64| 0.25 * (1.0 + (a2 * t + b2).sin());

    let n_samples = 201;
    let fine = 8usize; // RK4 substeps per sample interval
    let dt = horizon / ((n_samples - 1) * fine) as f64;

    let n_rate = |t: f64, n: f64| theta(t) * (((1.0 + s0) / (horizon - t + h) + s1) * n + f2_const);
    let z_rate = |t: f64, n: f64| {
        -2.0 * n + 2.0 * rho(t) * (0.5 * n + s0 / (horizon - t + h) + s1 + f1_const)
    };

    let mut times = Vec::with_capacity(n_samples);
    let mut ys = Vec::with_capacity(n_samples);
    let mut ns = Vec::with_capacity(n_samples);
    let mut t = 0.0;
    let mut n = n0;
    let mut z = z0;
    times.push(t);
    ys.push(z.exp());
    ns.push(n);
    for k in 1..n_samples {
        for _ in 0..fine {
            // RK4 on the coupled (N, z) system
            let (kn1, kz1) = (n_rate(t, n), z_rate(t, n));
            let (kn2, kz2) =
                (n_rate(t + dt / 2.0, n + dt / 2.0 * kn1), z_rate(t + dt / 2.0, n + dt / 2.0 * kn1));
            let (kn3, kz3) =
                (n_rate(t + dt / 2.0, n + dt / 2.0 * kn2), z_rate(t + dt / 2.0, n + dt / 2.0 * kn2));
            let (kn4, kz4) = (n_rate(t + dt, n + dt * kn3), z_rate(t + dt, n + dt * kn3));
            n += dt / 6.0 * (kn1 + 2.0 * kn2 + 2.0 * kn3 + kn4);
            z += dt / 6.0 * (kz1 + 2.0 * kz2 + 2.0 * kz3 + kz4);
            t += dt;
        }
        times.push(k as f64 * horizon / (n_samples - 1) as f64);
        ys.push(z.exp());
        ns.push(n);
    }

    let t1 = rng.gen_range(0.0..0.15) * horizon;
    let t2 = t1 + rng.gen_range(0.3..0.5) * (horizon - t1);
    let t3 = t2 + rng.gen_range(0.5..0.95) * (horizon - t2);

    OdeLemmaInput::new(
        horizon,
        h,
        times,
        ys,
        ns,
        vec![f1_const; n_samples],
        vec![f2_const; n_samples],
        s0,
        s1,
        (t1, t2, t3),
    )
    .expect("constructive sample is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp_decay_input() -> OdeLemmaInput {
        // y = e^{−t}, N ≡ 1, F₁ = F₂ = 0, S₀ = S₁ = 0, T = 2, h = 1
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let n = vec![1.0; times.len()];
        let zeros = vec![0.0; times.len()];
        OdeLemmaInput::new(
            2.0,
            1.0,
            times,
            y,
            n,
            zeros.clone(),
            zeros,
            0.0,
            0.0,
            (0.0, 1.0, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn m0_closed_form() {
        let input = exp_decay_input();
        // 3·ln 2 / ln 1.5
        let expected = 3.0 * (2.0f64).ln() / (1.5f64).ln();
        assert_relative_eq!(input.compute_m0(), expected, epsilon = 1e-8);
        assert!((input.compute_m0() - 5.1286).abs() <= 1e-3);
    }

    #[test]
    fn m0_constant_integrand_limit() {
        let mut input = exp_decay_input();
        input.h = 1e6;
        assert_relative_eq!(input.compute_m0(), 3.0, epsilon = 1e-4);
    }

    #[test]
    fn m0_exponential_weight_favors_late_interval() {
        let mut input = exp_decay_input();
        input.s1 = 3.0;
        assert!(input.compute_m0() > 3.0);
    }

    #[test]
    fn m0_translation_invariance() {
        let input = exp_decay_input();
        let shift = 0.7;
        let shifted = OdeLemmaInput::new(
            input.horizon + shift,
            input.h,
            input.times.iter().map(|t| t + shift).collect(),
            input.y.clone(),
            input.freq.clone(),
            input.forcing1.clone(),
            input.forcing2.clone(),
            input.s0,
            input.s1,
            (input.t1 + shift, input.t2 + shift, input.t3 + shift),
        )
        .unwrap();
        // e^{tS₁} scales both integrals equally, so the ratio is invariant
        assert_relative_eq!(input.compute_m0(), shifted.compute_m0(), max_relative = 1e-9);

        let mut weighted = input.clone();
        weighted.s1 = 0.9;
        let mut weighted_shift = shifted;
        weighted_shift.s1 = 0.9;
        assert_relative_eq!(
            weighted.compute_m0(),
            weighted_shift.compute_m0(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn d_values_and_linearity() {
        let input = exp_decay_input();
        assert_eq!(input.compute_d(1.0).unwrap(), 0.0);

        let mut forced = input.clone();
        forced.forcing1 = vec![1.0; forced.times.len()];
        forced.t1 = 0.0;
        forced.t3 = 2.0;
        // D = 3·(M+1)·[(0 + 0)·2 + 2] = 6(M+1); at M = 1: 12
        assert_relative_eq!(forced.compute_d(1.0).unwrap(), 12.0, epsilon = 1e-12);

        // linear in (M+1)
        let d2 = forced.compute_d(2.0).unwrap();
        let d5 = forced.compute_d(5.0).unwrap();
        assert_relative_eq!(d2 / 3.0, d5 / 6.0, epsilon = 1e-12);
        assert!(forced.compute_d(-0.5).is_err());
    }

    #[test]
    fn hypotheses_hold_for_exponential_decay() {
        let input = exp_decay_input();
        let report = input.check_hypotheses(1e-4);
        assert!(report.all_pass());
        // first inequality is an equality here: residuals hover at zero
        for r in &report.records {
            assert!(r.residual1.abs() <= 1e-4, "residual1 {} at t={}", r.residual1, r.t);
            assert!(r.residual2 < 0.0);
        }
    }

    #[test]
    fn growing_y_violates_first_hypothesis() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
        let y: Vec<f64> = times.iter().map(|t| t.exp()).collect();
        let n = vec![1.0; times.len()];
        let zeros = vec![0.0; times.len()];
        let input = OdeLemmaInput::new(
            2.0,
            1.0,
            times,
            y,
            n,
            zeros.clone(),
            zeros,
            0.0,
            0.0,
            (0.0, 1.0, 2.0),
        )
        .unwrap();
        let report = input.check_hypotheses(1e-6);
        assert!(!report.all_pass());

        // large enough F₁ restores the first inequality
        let mut dominated = input;
        dominated.forcing1 = vec![2.0; dominated.times.len()];
        assert!(dominated.check_hypotheses(1e-6).all_pass());
    }

    #[test]
    fn conclusion_exp_decay_and_refusal() {
        let input = exp_decay_input();
        let report = input.check_conclusion(6.0).unwrap();
        // (1+6)·(−1) ≤ −2 + 6·0 + 0
        assert_relative_eq!(report.log_lhs, -7.0, epsilon = 1e-9);
        assert_relative_eq!(report.log_rhs, -2.0, epsilon = 1e-9);
        assert!(report.pass);
        // refusal below M₀
        assert!(input.check_conclusion(5.0).is_err());
    }

    #[test]
    fn conclusion_constant_y_trivial() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
        let y = vec![0.7; times.len()];
        let n = vec![1.0; times.len()];
        let zeros = vec![0.0; times.len()];
        let input = OdeLemmaInput::new(
            2.0,
            1.0,
            times,
            y,
            n,
            zeros.clone(),
            zeros,
            0.0,
            0.0,
            (0.1, 0.9, 1.9),
        )
        .unwrap();
        let m0 = input.compute_m0();
        let report = input.check_conclusion(m0 + 1.0).unwrap();
        assert!(report.pass);
        // all y-factors cancel: residual is exactly D + S₀-term = 0 here
        assert_relative_eq!(report.log_lhs - report.log_rhs, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn constructive_sampler_satisfies_lemma() {
        for seed in 0..25 {
            let input = constructive_sample(seed);
            assert!(
                input.check_hypotheses(1e-3).all_pass(),
                "hypotheses violated for seed {seed}"
            );
            let m0 = input.compute_m0();
            for m in [m0, 2.0 * m0] {
                let report = input.check_conclusion(m).unwrap();
                assert!(
                    report.pass,
                    "conclusion failed at seed {seed}, M = {m}: lhs {} rhs {}",
                    report.log_lhs, report.log_rhs
                );
            }
        }
    }

    #[test]
    fn monotonicity_in_m_when_y_decreasing() {
        let input = exp_decay_input();
        // y(t₁) ≥ y(t₂): if the conclusion holds at M it holds at M′ > M
        let m0 = input.compute_m0();
        let base = input.check_conclusion(m0).unwrap();
        assert!(base.pass);
        for factor in [1.5, 3.0, 10.0] {
            let r = input.check_conclusion(m0 * factor).unwrap();
            assert!(r.pass);
            assert!(
                r.log_rhs - r.log_lhs >= base.log_rhs - base.log_lhs - 1e-9,
                "margin should not shrink"
            );
        }
    }

    #[test]
    fn proof_chain_diagnostics_hold_on_sampler() {
        for seed in [3u64, 17, 40] {
            let input = constructive_sample(seed);
            let m0 = input.compute_m0();
            let diags = input.proof_chain_diagnostics(m0).unwrap();
            assert_eq!(diags.len(), 5);
            for d in &diags {
                assert!(
                    d.margin >= -1e-6,
                    "chain step {} violated at seed {seed}: margin {}",
                    d.name,
                    d.margin
                );
            }
        }
    }

    #[test]
    fn input_validation() {
        let times = vec![0.0, 0.5, 1.0];
        let ok = vec![1.0, 1.0, 1.0];
        let bad_y = vec![1.0, -1.0, 1.0];
        assert!(OdeLemmaInput::new(
            1.0,
            0.5,
            times.clone(),
            bad_y,
            ok.clone(),
            ok.clone(),
            ok.clone(),
            0.0,
            0.0,
            (0.0, 0.5, 1.0)
        )
        .is_err());
        assert!(OdeLemmaInput::new(
            1.0,
            0.5,
            times,
            ok.clone(),
            ok.clone(),
            ok.clone(),
            ok,
            0.0,
            0.0,
            (0.5, 0.5, 1.0)
        )
        .is_err());
    }
}
