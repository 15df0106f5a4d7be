//! Explicit Morse weight families and the Carleman weights built from them.
//!
//! A family of `d` bumps consists of functions ψᵢ > 0 in Ω, ψᵢ = 0 on ∂Ω,
//! with a single nondegenerate interior maximum pᵢ inside the observation
//! region ω̃ and a common maximum value. The derived weights are
//!
//! ```text
//!   φ_{i,1} = ψᵢ − max ψᵢ,     φ_{i,2} = −ψᵢ − max ψᵢ,
//!   Φᵢ(x,t) = s φᵢ(x) / Γ(t),  Γ(t) = T − t + h,
//!   ηᵢ      = ½∂ₜΦᵢ + ¼A∇Φᵢ·∇Φᵢ = (s/4Γ²)(−2|φᵢ| + sA∇φᵢ·∇φᵢ).
//! ```
//!
//! The 1D construction is the rational-reparametrized sine bump
//! `ψ(x) = sin(π·T_p(x̂))` with `T_p(x̂) = x̂/(x̂ + c(1−x̂))`, `c = p̂/(1−p̂)`,
//! which places the unique maximum at the centroid of ω̃ and has closed-form
//! first and second derivatives. 2D rectangles use the tensor product of two
//! such bumps. Only d = 1 is supported (the swap sets 𝓒ᵢ are then empty and
//! the corresponding geometric bound is vacuous).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::mesh::{grad, CoefficientSet, Grid, ScalarField, VectorField};
use crate::{CoreError, Result};

/// Cap on the collar constant c₅: the boundary collar ϑᵢ is grown as far as
/// the bound |φᵢ,₂| ≤ c₅|∇φᵢ,₂|² holds with c₅ at most this value.
pub const COLLAR_C5_CAP: f64 = 100.0;

/// Below this admissible-s threshold the weights are too steep to be useful
/// and callers should be warned.
pub const S_STAR_FLOOR: f64 = 1e-4;

/// Empirical constants of the weight-family geometry, estimated on the grid.
///
/// `c1·|∇φ₁|² ≤ |φ₁| ≤ c2·|∇φ₁|²` off the critical points, `c4·|∇φ₂|² ≤ |φ₂|`
/// globally, `|φ₂| ≤ c5·|∇φ₂|²` on the boundary collar, and
/// `φ₂ − φ₁ ≤ −c6` off the collar. `c3` is the inter-bump separation bound,
/// vacuous (None) for a single bump.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct GeometryConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
}

/// One named property check with its observed margin.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Report of the five Morse-family properties.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MorseReport {
    pub checks: Vec<PropertyCheck>,
}

impl MorseReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Morse weight family on a grid: bump fields, their analytic (or, for raw
/// families, discrete) gradients, critical-point data, the observation mask,
/// and the derived region decomposition.
#[derive(Debug, Clone)]
pub struct WeightFamily {
    grid: Arc<Grid>,
    bumps: usize,
    psi: Vec<ScalarField>,
    grad_psi: Vec<VectorField>,
    psi_sup: f64,
    critical_points: Vec<[f64; 2]>,
    critical_nodes: Vec<usize>,
    /// Row-major dim×dim Hessian of ψᵢ at pᵢ.
    critical_hessians: Vec<[f64; 4]>,
    obs_mask: Vec<bool>,
    ball: Vec<Vec<bool>>,
    collar: Vec<Vec<bool>>,
    /// μ > 0 with φ₁ ≤ −μ outside the radius-r ball around p.
    margin: f64,
    /// Ball radius r (half-width of ω̃).
    radius: f64,
}

/// Rational reparametrization `T_p` pinned to a unit interval.
struct BumpAxis {
    lo: f64,
    len: f64,
    c: f64,
}

impl BumpAxis {
    fn new(lo: f64, hi: f64, p: f64) -> Self {
        let p_hat = (p - lo) / (hi - lo);
        Self { lo, len: hi - lo, c: p_hat / (1.0 - p_hat) }
    }

    fn t(&self, x: f64) -> f64 {
        let xh = (x - self.lo) / self.len;
        xh / (xh + self.c * (1.0 - xh))
    }

    /// dT/dx (chain rule through the normalization).
    fn t_prime(&self, x: f64) -> f64 {
        let xh = (x - self.lo) / self.len;
        let den = self.c + xh * (1.0 - self.c);
        self.c / (den * den) / self.len
    }

    /// d²T/dx².
    fn t_second(&self, x: f64) -> f64 {
        let xh = (x - self.lo) / self.len;
        let den = self.c + xh * (1.0 - self.c);
        -2.0 * self.c * (1.0 - self.c) / (den * den * den) / (self.len * self.len)
    }

    /// sin(π T), and its first and second x-derivatives.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = self.t(x);
        let tp = self.t_prime(x);
        let ts = self.t_second(x);
        let s = (PI * t).sin();
        let c = (PI * t).cos();
        (s, PI * tp * c, PI * ts * c - PI * PI * tp * tp * s)
    }
}

impl WeightFamily {
    /// Construct the canonical family: one sine bump with its maximum at the
    /// quadrature-weighted centroid of the observation mask.
    pub fn build(grid: Arc<Grid>, obs_mask: &[bool], bumps: usize) -> Result<Self> {
        if bumps != 1 {
            return Err(CoreError::Unsupported(format!(
                "unsupported multiplicity d = {bumps}; only d = 1 is implemented"
            )));
        }
        if obs_mask.len() != grid.len() {
            return Err(CoreError::GridMismatch("observation mask length".into()));
        }
        if !obs_mask.iter().any(|&m| m) {
            return Err(CoreError::InvalidWeightFamily("observation region is empty".into()));
        }
        for idx in 0..grid.len() {
            if obs_mask[idx] && grid.is_boundary(idx) {
                return Err(CoreError::InvalidWeightFamily(
                    "observation region touches the boundary".into(),
                ));
            }
        }

        let dim = grid.dim();
        // weighted centroid of the mask
        let mut p = [0.0; 2];
        let mut total = 0.0;
        for idx in 0..grid.len() {
            if obs_mask[idx] {
                let w = grid.weights()[idx];
                let x = grid.coords(idx);
                for c in 0..dim {
                    p[c] += w * x[c];
                }
                total += w;
            }
        }
        for c in 0..dim {
            p[c] /= total;
        }
        for axis in 0..dim {
            let (lo, hi) = grid.extents()[axis];
            let h = grid.spacing()[axis];
            if p[axis] - lo < 2.0 * h || hi - p[axis] < 2.0 * h {
                return Err(CoreError::InvalidWeightFamily(format!(
                    "critical point {:?} is within 2h of the boundary",
                    &p[..dim]
                )));
            }
        }

        let axes: Vec<BumpAxis> = (0..dim)
            .map(|a| {
                let (lo, hi) = grid.extents()[a];
                BumpAxis::new(lo, hi, p[a])
            })
            .collect();

        let n = grid.len();
        let mut psi_vals = vec![0.0; n];
        let mut grad_comps = vec![vec![0.0; n]; dim];
        for idx in 0..n {
            let x = grid.coords(idx);
            let evals: Vec<(f64, f64, f64)> = (0..dim).map(|a| axes[a].eval(x[a])).collect();
            let value: f64 = evals.iter().map(|e| e.0).product();
            psi_vals[idx] = value;
            for a in 0..dim {
                let mut g = evals[a].1;
                for (b, e) in evals.iter().enumerate() {
                    if b != a {
                        g *= e.0;
                    }
                }
                grad_comps[a][idx] = g;
            }
        }
        let psi = ScalarField::new(grid.clone(), psi_vals)?;
        let grad_psi = VectorField::from_components(grid.clone(), grad_comps)?;

        // Hessian at p: the tensor structure makes it diagonal there.
        let mut hess = [0.0; 4];
        for a in 0..dim {
            let (_, _, second) = axes[a].eval(p[a]);
            let mut v = second;
            for (b, ax) in axes.iter().enumerate() {
                if b != a {
                    v *= ax.eval(p[b]).0;
                }
            }
            hess[a * dim + a] = v;
        }

        let critical_node = (0..n)
            .min_by(|&i, &j| {
                let di = dist2(grid.coords(i), p, dim);
                let dj = dist2(grid.coords(j), p, dim);
                di.partial_cmp(&dj).unwrap()
            })
            .unwrap();

        let mut family = Self {
            grid: grid.clone(),
            bumps,
            psi: vec![psi],
            grad_psi: vec![grad_psi],
            psi_sup: 1.0,
            critical_points: vec![p],
            critical_nodes: vec![critical_node],
            critical_hessians: vec![hess],
            obs_mask: obs_mask.to_vec(),
            ball: Vec::new(),
            collar: Vec::new(),
            margin: 0.0,
            radius: 0.0,
        };
        family.finish_regions()?;
        Ok(family)
    }

    /// Diagnostic constructor from raw ψ fields; gradients and critical
    /// Hessians are taken from discrete differences, nothing is validated.
    /// Intended for counterexamples and perturbation studies.
    pub fn from_psi_fields(
        grid: Arc<Grid>,
        psi: Vec<ScalarField>,
        critical_points: Vec<[f64; 2]>,
        obs_mask: Vec<bool>,
    ) -> Result<Self> {
        if psi.is_empty() || psi.len() != critical_points.len() {
            return Err(CoreError::InvalidWeightFamily(
                "need one critical point per bump field".into(),
            ));
        }
        let dim = grid.dim();
        let grad_psi: Vec<VectorField> = psi.iter().map(grad).collect();
        let psi_sup = psi
            .iter()
            .map(|f| f.values().iter().cloned().fold(f64::MIN, f64::max))
            .fold(f64::MIN, f64::max);
        let n = grid.len();
        let mut critical_nodes = Vec::new();
        let mut critical_hessians = Vec::new();
        for (b, p) in critical_points.iter().enumerate() {
            let node = (0..n)
                .min_by(|&i, &j| {
                    dist2(grid.coords(i), *p, dim)
                        .partial_cmp(&dist2(grid.coords(j), *p, dim))
                        .unwrap()
                })
                .unwrap();
            critical_nodes.push(node);
            critical_hessians.push(discrete_hessian(&psi[b], node));
        }
        let mut family = Self {
            grid,
            bumps: psi.len(),
            psi,
            grad_psi,
            psi_sup,
            critical_points,
            critical_nodes,
            critical_hessians,
            obs_mask,
            ball: Vec::new(),
            collar: Vec::new(),
            margin: 0.0,
            radius: 0.0,
        };
        family.finish_regions()?;
        Ok(family)
    }

    /// Ball radii, collar masks, and the Stage-5 margin μ.
    fn finish_regions(&mut self) -> Result<()> {
        let grid = self.grid.clone();
        let dim = grid.dim();
        let n = grid.len();

        // r = half-width of ω̃ (smallest axis extent of the mask)
        let mut radius = f64::INFINITY;
        for axis in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for idx in 0..n {
                if self.obs_mask[idx] {
                    lo = lo.min(grid.coords(idx)[axis]);
                    hi = hi.max(grid.coords(idx)[axis]);
                }
            }
            if hi > lo {
                radius = radius.min(0.5 * (hi - lo));
            }
        }
        if !radius.is_finite() || radius <= 0.0 {
            radius = 2.0 * grid.max_spacing();
        }
        self.radius = radius;

        self.ball = (0..self.bumps)
            .map(|b| {
                (0..n)
                    .map(|idx| {
                        dist2(grid.coords(idx), self.critical_points[b], dim) < radius * radius
                    })
                    .collect()
            })
            .collect();

        // μ = −max φ₁ outside the ball = min over Ω∖B of (max ψ − ψ)
        let mut margin = f64::INFINITY;
        for b in 0..self.bumps {
            for idx in 0..n {
                if !self.ball[b][idx] {
                    margin = margin.min(self.psi_sup - self.psi[b].values()[idx]);
                }
            }
        }
        self.margin = margin;

        // collar ϑ: maximal boundary layers on which |φ₂| ≤ c₅·|∇φ₂|² with the cap
        self.collar = (0..self.bumps).map(|b| self.grow_collar(b)).collect();
        Ok(())
    }

    fn grow_collar(&self, b: usize) -> Vec<bool> {
        let grid = &self.grid;
        let n = grid.len();
        let [nx, ny] = grid.shape();
        let layer_of = |idx: usize| -> usize {
            let [i, j] = grid.multi_index(idx);
            let mut l = i.min(nx - 1 - i);
            if grid.dim() == 2 {
                l = l.min(j.min(ny - 1 - j));
            }
            l
        };
        let ratio_ok = |idx: usize| -> bool {
            // |φ₂| ≤ cap · |∇φ₂|², with ∇φ₂ = −∇ψ
            let phi2 = -self.psi[b].values()[idx] - self.psi_sup;
            let g = self.grad_psi[b].at(idx);
            let g2: f64 = g[..grid.dim()].iter().map(|v| v * v).sum();
            phi2.abs() <= COLLAR_C5_CAP * g2
        };

        let max_layer = (0..n).map(layer_of).max().unwrap();
        let mut keep_layers = 0usize;
        'outer: for l in 0..=max_layer {
            for idx in 0..n {
                if layer_of(idx) == l && (idx == self.critical_nodes[b] || !ratio_ok(idx)) {
                    break 'outer;
                }
            }
            keep_layers = l + 1;
        }
        (0..n).map(|idx| layer_of(idx) < keep_layers).collect()
    }

    /// Replace the boundary collar (diagnostic use: pinned-collar studies).
    pub fn override_collar(&mut self, collar: Vec<Vec<bool>>) -> Result<()> {
        if collar.len() != self.bumps || collar.iter().any(|c| c.len() != self.grid.len()) {
            return Err(CoreError::GridMismatch("collar mask shape".into()));
        }
        self.collar = collar;
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of bumps d; the weight list φ₁..φ_{2d} has twice this length.
    pub fn bumps(&self) -> usize {
        self.bumps
    }

    /// Number of Carleman weights, 2d.
    pub fn weight_count(&self) -> usize {
        2 * self.bumps
    }

    pub fn psi(&self, b: usize) -> &ScalarField {
        &self.psi[b]
    }

    pub fn grad_psi(&self, b: usize) -> &VectorField {
        &self.grad_psi[b]
    }

    pub fn psi_sup(&self) -> f64 {
        self.psi_sup
    }

    pub fn critical_point(&self, b: usize) -> [f64; 2] {
        self.critical_points[b]
    }

    pub fn critical_node(&self, b: usize) -> usize {
        self.critical_nodes[b]
    }

    pub fn obs_mask(&self) -> &[bool] {
        &self.obs_mask
    }

    pub fn ball_mask(&self, b: usize) -> &[bool] {
        &self.ball[b]
    }

    pub fn collar_mask(&self, b: usize) -> &[bool] {
        &self.collar[b]
    }

    /// Stage-5 margin μ: φ₁ ≤ −μ outside the radius-r ball.
    pub fn stage5_margin(&self) -> f64 {
        self.margin
    }

    /// Stage-5 ball radius r.
    pub fn stage5_radius(&self) -> f64 {
        self.radius
    }

    /// Weight φ_k, k ∈ 0..2d: φ_{b,1} = ψ_b − max ψ for k = b < d,
    /// φ_{b,2} = −ψ_b − max ψ for k = d + b.
    pub fn phi(&self, k: usize) -> ScalarField {
        let (b, second) = self.split_index(k);
        let sup = self.psi_sup;
        if second {
            self.psi[b].map(|v| -v - sup)
        } else {
            self.psi[b].map(|v| v - sup)
        }
    }

    /// Gradient of φ_k: ±∇ψ_b.
    pub fn grad_phi(&self, k: usize) -> VectorField {
        let (b, second) = self.split_index(k);
        let mut g = self.grad_psi[b].clone();
        if second {
            g.scale(-1.0);
        }
        g
    }

    fn split_index(&self, k: usize) -> (usize, bool) {
        assert!(k < 2 * self.bumps, "weight index {k} out of range");
        if k < self.bumps {
            (k, false)
        } else {
            (k - self.bumps, true)
        }
    }

    /// The five Morse-family properties, checked on the grid.
    pub fn verify_morse_properties(&self) -> MorseReport {
        let grid = &self.grid;
        let n = grid.len();
        let dim = grid.dim();
        let h = grid.max_spacing();
        let mut checks = Vec::new();

        // (i) positivity inside, zero on the boundary
        let mut min_interior = f64::INFINITY;
        let mut max_boundary: f64 = 0.0;
        for b in 0..self.bumps {
            for idx in 0..n {
                let v = self.psi[b].values()[idx];
                if grid.is_boundary(idx) {
                    max_boundary = max_boundary.max(v.abs());
                } else {
                    min_interior = min_interior.min(v);
                }
            }
        }
        checks.push(PropertyCheck {
            name: "positive_inside_zero_on_boundary".into(),
            pass: min_interior > 0.0 && max_boundary <= 1e-12 * self.psi_sup.max(1.0),
            detail: format!("min interior {min_interior:.3e}, max |boundary| {max_boundary:.3e}"),
        });

        // (ii) gradient vanishes only near the critical points
        let mut grad_floor = f64::INFINITY;
        let mut grad_sup: f64 = 0.0;
        for b in 0..self.bumps {
            for idx in 0..n {
                if grid.is_boundary(idx) {
                    continue;
                }
                let g = self.grad_psi[b].at(idx);
                let mag = g[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
                grad_sup = grad_sup.max(mag);
                let near_critical = self
                    .critical_points
                    .iter()
                    .any(|p| dist2(grid.coords(idx), *p, dim).sqrt() <= 2.0 * h);
                if !near_critical {
                    grad_floor = grad_floor.min(mag);
                }
            }
        }
        let threshold = 1e-8 * grad_sup;
        checks.push(PropertyCheck {
            name: "gradient_vanishes_only_at_critical_points".into(),
            pass: grad_floor > threshold,
            detail: format!(
                "min |∇ψ| off critical balls {grad_floor:.3e}, threshold {threshold:.3e}"
            ),
        });

        // (iii) unique global maximum at p
        let mut unique = true;
        let mut detail_iii = String::new();
        for b in 0..self.bumps {
            let vals = self.psi[b].values();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let ties = vals.iter().filter(|&&v| v >= max - 1e-14 * max.abs().max(1.0)).count();
            let argmax = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if ties != 1 || argmax != self.critical_nodes[b] {
                unique = false;
            }
            detail_iii = format!("bump {b}: argmax node {argmax}, ties {ties}");
        }
        checks.push(PropertyCheck {
            name: "unique_global_maximum".into(),
            pass: unique,
            detail: detail_iii,
        });

        // (iv) nondegenerate maximum: discrete second difference negative definite
        let mut nondegenerate = true;
        let mut min_curvature = f64::INFINITY;
        for b in 0..self.bumps {
            let hmat = discrete_hessian(&self.psi[b], self.critical_nodes[b]);
            let negdef = if dim == 1 {
                hmat[0] < 0.0
            } else {
                hmat[0] < 0.0 && hmat[0] * hmat[3] - hmat[1] * hmat[2] > 0.0
            };
            if !negdef {
                nondegenerate = false;
            }
            min_curvature = min_curvature.min(-hmat[0]);
        }
        checks.push(PropertyCheck {
            name: "nondegenerate_maximum".into(),
            pass: nondegenerate,
            detail: format!("−∂²ψ at p ≥ {min_curvature:.3e}"),
        });

        // (v) equal maxima across bumps (vacuously true for d = 1)
        let maxima: Vec<f64> = self
            .psi
            .iter()
            .map(|f| f.values().iter().cloned().fold(f64::MIN, f64::max))
            .collect();
        let spread = maxima.iter().cloned().fold(f64::MIN, f64::max)
            - maxima.iter().cloned().fold(f64::MAX, f64::min);
        checks.push(PropertyCheck {
            name: "equal_maxima".into(),
            pass: spread <= 1e-12,
            detail: if self.bumps == 1 {
                "vacuous (single bump)".into()
            } else {
                format!("max spread {spread:.3e}")
            },
        });

        MorseReport { checks }
    }

    /// Estimate the geometric constants c₁..c₆ on the grid; the 0/0 ratio at
    /// a critical node is replaced by its Morse-limit value.
    pub fn estimate_geometry_constants(&self) -> Result<GeometryConstants> {
        let grid = &self.grid;
        let n = grid.len();
        let dim = grid.dim();

        let mut c1 = f64::INFINITY;
        let mut c2: f64 = 0.0;
        let mut c4 = f64::INFINITY;
        let mut c5: f64 = 0.0;
        let mut c6 = f64::INFINITY;

        for b in 0..self.bumps {
            let morse_ratio = {
                // |φ₁|/|∇φ₁|² → 1/(2 μ_max) at p, μ_max = largest curvature
                let mu = max_curvature(self.critical_hessians[b], dim);
                if mu <= 0.0 {
                    return Err(CoreError::InvalidWeightFamily(
                        "degenerate critical point: nonnegative curvature".into(),
                    ));
                }
                1.0 / (2.0 * mu)
            };
            c1 = c1.min(morse_ratio);
            c2 = c2.max(morse_ratio);

            for idx in 0..n {
                let psi_v = self.psi[b].values()[idx];
                let g = self.grad_psi[b].at(idx);
                let g2: f64 = g[..dim].iter().map(|v| v * v).sum();
                let phi1_abs = (self.psi_sup - psi_v).abs();
                let phi2_abs = psi_v + self.psi_sup;

                // two-sided bound for φ₁ on Ω minus the critical node
                if idx != self.critical_nodes[b] {
                    if g2 < 1e-300 {
                        if phi1_abs > 1e-12 * self.psi_sup {
                            return Err(CoreError::InvalidWeightFamily(format!(
                                "∇φ vanishes at node {idx} away from the critical point"
                            )));
                        }
                    } else {
                        let ratio = phi1_abs / g2;
                        c1 = c1.min(ratio);
                        c2 = c2.max(ratio);
                    }
                }

                // c₄|∇φ₂|² ≤ |φ₂| wherever ∇φ₂ ≠ 0
                if g2 >= 1e-300 {
                    c4 = c4.min(phi2_abs / g2);
                }

                // |φ₂| ≤ c₅|∇φ₂|² on the collar; separation c₆ off the collar
                if self.collar[b][idx] {
                    if g2 < 1e-300 {
                        return Err(CoreError::InvalidWeightFamily(
                            "collar contains a critical node".into(),
                        ));
                    }
                    c5 = c5.max(phi2_abs / g2);
                } else {
                    c6 = c6.min(2.0 * psi_v);
                }
            }
        }

        let constants = GeometryConstants { c1, c2, c3: None, c4, c5, c6 };
        for (name, v) in [("c1", c1), ("c2", c2), ("c4", c4), ("c5", c5), ("c6", c6)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CoreError::InvalidWeightFamily(format!(
                    "estimated constant {name} = {v} is not positive and finite"
                )));
            }
        }
        Ok(constants)
    }

    /// Largest s ∈ (0,1] with ηᵢ ≤ 0 for every weight, every t and h:
    /// the grid minimum of 2|φ|/(λ|∇φ|²) with the Morse-limit ratio
    /// substituted at the critical node.
    pub fn max_admissible_s(&self, ellipticity: f64) -> Result<f64> {
        if ellipticity < 1.0 {
            return Err(CoreError::InvalidParameter("ellipticity must be ≥ 1".into()));
        }
        let grid = &self.grid;
        let dim = grid.dim();
        let mut s_star = 1.0f64;
        for k in 0..self.weight_count() {
            let (b, second) = self.split_index(k);
            let phi = self.phi(k);
            let gphi = self.grad_phi(k);
            for idx in 0..grid.len() {
                if idx == self.critical_nodes[b] {
                    continue;
                }
                let g = gphi.at(idx);
                let g2: f64 = g[..dim].iter().map(|v| v * v).sum();
                if g2 < 1e-300 {
                    continue;
                }
                s_star = s_star.min(2.0 * phi.values()[idx].abs() / (ellipticity * g2));
            }
            if !second {
                // limiting ratio approaching the critical point
                let mu = max_curvature(self.critical_hessians[b], dim);
                if mu <= 0.0 {
                    return Err(CoreError::InvalidWeightFamily(
                        "degenerate critical point in admissible-s computation".into(),
                    ));
                }
                s_star = s_star.min(1.0 / (ellipticity * mu));
            }
        }
        Ok(s_star)
    }

    /// CSV export of the family profile: node, x, y, ψ, φ₁, φ₂, masks.
    pub fn to_csv(&self) -> String {
        let grid = self.grid();
        let mut out = String::from("node,x,y,psi,phi1,phi2,obs,ball,collar\n");
        let psi = self.psi(0);
        let phi1 = self.phi(0);
        let phi2 = self.phi(self.bumps());
        for idx in 0..grid.len() {
            let [x, y] = grid.coords(idx);
            out.push_str(&format!(
                "{idx},{x},{y},{},{},{},{},{},{}\n",
                psi.values()[idx],
                phi1.values()[idx],
                phi2.values()[idx],
                self.obs_mask()[idx] as u8,
                self.ball_mask(0)[idx] as u8,
                self.collar_mask(0)[idx] as u8,
            ));
        }
        out
    }
}

/// Carleman weight Φ = s·φ/Γ(t) with Γ(t) = T − t + h for one index of a
/// weight family.
#[derive(Debug, Clone)]
pub struct CarlemanWeight {
    family: Arc<WeightFamily>,
    index: usize,
    s: f64,
    h: f64,
    horizon: f64,
}

/// Closed-form evaluation of Φ, ∂ₜΦ, η, ∂ₜη at one time.
#[derive(Debug, Clone)]
pub struct PhiEta {
    pub phi: ScalarField,
    pub phi_t: ScalarField,
    pub eta: ScalarField,
    pub eta_t: ScalarField,
}

impl CarlemanWeight {
    /// `s_star` is the admissible bound from [`WeightFamily::max_admissible_s`]
    /// for the ellipticity constant in play.
    pub fn new(
        family: Arc<WeightFamily>,
        index: usize,
        s: f64,
        h: f64,
        horizon: f64,
        s_star: f64,
    ) -> Result<Self> {
        if index >= family.weight_count() {
            return Err(CoreError::InvalidParameter(format!(
                "weight index {index} out of range 0..{}",
                family.weight_count()
            )));
        }
        if !(s > 0.0 && s <= 1.0 && s <= s_star) {
            return Err(CoreError::InvalidParameter(format!(
                "s = {s} outside (0, min(1, s*)] with s* = {s_star}"
            )));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(CoreError::InvalidParameter(format!("h = {h} outside (0, 1]")));
        }
        if horizon <= 0.0 {
            return Err(CoreError::InvalidParameter("T must be positive".into()));
        }
        Ok(Self { family, index, s, h, horizon })
    }

    pub fn family(&self) -> &Arc<WeightFamily> {
        &self.family
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma(&self, t: f64) -> f64 {
        self.horizon - t + self.h
    }

    /// Spatial weight φ for this index.
    pub fn phi(&self) -> ScalarField {
        self.family.phi(self.index)
    }

    pub fn grad_phi(&self) -> VectorField {
        self.family.grad_phi(self.index)
    }

    /// The weight field Φ(·,t) alone.
    pub fn phi_big(&self, t: f64) -> Result<ScalarField> {
        self.check_time(t)?;
        let scale = self.s / self.gamma(t);
        Ok(self.phi().map(|v| scale * v))
    }

    /// Closed-form Φ, ∂ₜΦ = Φ/Γ, η, and ∂ₜη = 2η/Γ; no time differencing.
    pub fn eval_phi_eta(&self, coef: &CoefficientSet, t: f64) -> Result<PhiEta> {
        self.check_time(t)?;
        let gamma = self.gamma(t);
        let phi_small = self.phi();
        let gphi = self.grad_phi();
        let a_gphi = coef.apply_principal(&gphi)?;
        let quad = a_gphi.dot(&gphi)?; // A∇φ·∇φ

        let s = self.s;
        let phi = phi_small.map(|v| s * v / gamma);
        let phi_t = phi_small.map(|v| s * v / (gamma * gamma));
        // φ ≤ 0, so 2φ = −2|φ| and η = (s/4Γ²)(−2|φ| + sA∇φ·∇φ)
        let eta = phi_small.zip(&quad, |p, q| s / (4.0 * gamma * gamma) * (2.0 * p + s * q))?;
        let eta_t = eta.map(|v| 2.0 * v / gamma);
        Ok(PhiEta { phi, phi_t, eta, eta_t })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.horizon {
            return Err(CoreError::InvalidParameter(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }
}

fn dist2(a: [f64; 2], b: [f64; 2], dim: usize) -> f64 {
    (0..dim).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

/// Row-major dim×dim second-difference Hessian at a node (zero entries if
/// the node touches the boundary, which does not happen for valid critical
/// points).
fn discrete_hessian(f: &ScalarField, node: usize) -> [f64; 4] {
    let grid = f.grid();
    let dim = grid.dim();
    let [nx, ny] = grid.shape();
    let [hx, hy] = grid.spacing();
    let [i, j] = grid.multi_index(node);
    let v = |ii: usize, jj: usize| f.values()[jj * nx + ii];
    let mut h = [0.0; 4];

    if i > 0 && i + 1 < nx {
        h[0] = (v(i + 1, j) - 2.0 * v(i, j) + v(i - 1, j)) / (hx * hx);
    }
    if dim == 2 {
        if j > 0 && j + 1 < ny {
            h[3] = (v(i, j + 1) - 2.0 * v(i, j) + v(i, j - 1)) / (hy * hy);
        }
        if i > 0 && i + 1 < nx && j > 0 && j + 1 < ny {
            let cross = (v(i + 1, j + 1) - v(i + 1, j - 1) - v(i - 1, j + 1) + v(i - 1, j - 1))
                / (4.0 * hx * hy);
            h[1] = cross;
            h[2] = cross;
        }
    }
    h
}

/// Largest curvature (absolute eigenvalue of −H) of a negative-definite
/// Hessian; returns a nonpositive value if H is not negative definite.
fn max_curvature(h: [f64; 4], dim: usize) -> f64 {
    if dim == 1 {
        -h[0]
    } else {
        let tr = h[0] + h[3];
        let det = h[0] * h[3] - h[1] * h[2];
        if h[0] >= 0.0 || det <= 0.0 {
            return -1.0;
        }
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let lambda_min = 0.5 * (tr - disc); // most negative eigenvalue
        -lambda_min
    }
}
