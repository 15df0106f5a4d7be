//! Uniform tensor grids, nodal fields, trapezoid quadrature, and the discrete
//! differential operators used throughout the crate.
//!
//! Two divergence-form operators are provided:
//!
//! * [`div_a_grad_neumann`] builds the conservative flux-form stencil with the
//!   homogeneous Neumann condition imposed by zeroing the conormal flux at
//!   boundary faces. Constants are in its kernel and the discrete divergence
//!   theorem ∫ div(A∇f) = 0 holds exactly.
//! * [`div_a_grad_free`] uses the same interior stencil but closes boundary
//!   cells with the one-sided flux A∇f·n taken from the nodal gradient; it is
//!   the right operator for fields that carry no boundary condition (Carleman
//!   weights, twisted solutions). Its discrete divergence theorem pairs
//!   exactly with [`boundary_integral`] of the conormal flux in 1D.
//!
//! Gradients are centered second order in the interior and one-sided second
//! order at boundary nodes. All quadrature is the tensor trapezoid rule, so
//! quadrature weights coincide with finite-volume cell sizes.

use std::sync::Arc;

use crate::{CoreError, Result};

/// Spatial dimension limit; the lab runs on intervals and rectangles.
pub const MAX_DIM: usize = 2;

/// One boundary node: flat node index, unit outward normal, and the surface
/// quadrature weight (1 per endpoint in 1D, edge trapezoid weight in 2D).
///
/// At 2D corners the normal is the normalized sum of the two edge normals and
/// the weight is the sum of the half-weights of both edges; corner quantities
/// are a reported approximation.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryNode {
    pub node: usize,
    pub normal: [f64; 2],
    pub weight: f64,
}

/// Uniform tensor-product grid over an interval or an axis-aligned rectangle,
/// with trapezoid quadrature weights and an explicit boundary description.
#[derive(Debug)]
pub struct Grid {
    dim: usize,
    extents: [(f64, f64); 2],
    n: [usize; 2],
    spacing: [f64; 2],
    weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
    boundary_mask: Vec<bool>,
}

impl Grid {
    /// Uniform grid on `[a, b]` with `n ≥ 8` nodes.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Arc<Self>> {
        Self::build(1, [(a, b), (0.0, 0.0)], [n, 1])
    }

    /// Uniform tensor grid on `[ax, bx] × [ay, by]` with `nx × ny` nodes.
    pub fn rectangle(x: (f64, f64), y: (f64, f64), n: (usize, usize)) -> Result<Arc<Self>> {
        Self::build(2, [x, y], [n.0, n.1])
    }

    fn build(dim: usize, extents: [(f64, f64); 2], n: [usize; 2]) -> Result<Arc<Self>> {
        for axis in 0..dim {
            let (a, b) = extents[axis];
            if !(b - a).is_finite() || b <= a {
                return Err(CoreError::InvalidGrid(format!(
                    "degenerate extent [{a}, {b}] on axis {axis}"
                )));
            }
            if n[axis] < 8 {
                return Err(CoreError::InvalidGrid(format!(
                    "n = {} on axis {axis}: at least 8 nodes required for the stencils",
                    n[axis]
                )));
            }
        }

        let mut spacing = [0.0; 2];
        for axis in 0..dim {
            spacing[axis] = (extents[axis].1 - extents[axis].0) / (n[axis] - 1) as f64;
        }

        let total = n[0] * n[1];
        let axis_w = |axis: usize, i: usize| -> f64 {
            if dim <= axis {
                return 1.0;
            }
            if i == 0 || i == n[axis] - 1 {
                spacing[axis] / 2.0
            } else {
                spacing[axis]
            }
        };

        let mut weights = vec![0.0; total];
        let mut boundary_mask = vec![false; total];
        let mut boundary = Vec::new();

        if dim == 1 {
            for i in 0..n[0] {
                weights[i] = axis_w(0, i);
            }
            boundary_mask[0] = true;
            boundary_mask[n[0] - 1] = true;
            boundary.push(BoundaryNode { node: 0, normal: [-1.0, 0.0], weight: 1.0 });
            boundary.push(BoundaryNode { node: n[0] - 1, normal: [1.0, 0.0], weight: 1.0 });
        } else {
            let (nx, ny) = (n[0], n[1]);
            for j in 0..ny {
                for i in 0..nx {
                    weights[j * nx + i] = axis_w(0, i) * axis_w(1, j);
                }
            }
            for j in 0..ny {
                for i in 0..nx {
                    let on_x = i == 0 || i == nx - 1;
                    let on_y = j == 0 || j == ny - 1;
                    if !(on_x || on_y) {
                        continue;
                    }
                    let idx = j * nx + i;
                    boundary_mask[idx] = true;
                    let mut normal = [0.0f64; 2];
                    let mut weight = 0.0;
                    if on_x {
                        normal[0] = if i == 0 { -1.0 } else { 1.0 };
                        weight += axis_w(1, j);
                    }
                    if on_y {
                        normal[1] = if j == 0 { -1.0 } else { 1.0 };
                        weight += axis_w(0, i);
                    }
                    if on_x && on_y {
                        // Corner: diagonal unit normal, summed half-weights.
                        let norm = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
                        normal[0] /= norm;
                        normal[1] /= norm;
                        weight = axis_w(0, i) + axis_w(1, j);
                    }
                    boundary.push(BoundaryNode { node: idx, normal, weight });
                }
            }
        }

        let grid = Self { dim, extents, n, spacing, weights, boundary, boundary_mask };
        grid.validate()?;
        Ok(Arc::new(grid))
    }

    fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        let measure = self.measure();
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(CoreError::InvalidGrid("nonpositive quadrature weight".into()));
        }
        if (sum - measure).abs() > 1e-12 * measure.abs() {
            return Err(CoreError::InvalidGrid(format!(
                "quadrature weights sum to {sum}, domain measure is {measure}"
            )));
        }
        for b in &self.boundary {
            let len = (b.normal[0] * b.normal[0] + b.normal[1] * b.normal[1]).sqrt();
            if (len - 1.0).abs() > 1e-14 {
                return Err(CoreError::InvalidGrid("non-unit boundary normal".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nodes per axis (`n[1] = 1` in 1D).
    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Largest axis spacing, the `h_x` entering slack models.
    pub fn max_spacing(&self) -> f64 {
        self.spacing[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn extents(&self) -> [(f64, f64); 2] {
        self.extents
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.extents[a].1 - self.extents[a].0).product()
    }

    /// Coordinates of a flat node index (`y = 0` in 1D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let (i, j) = (idx % self.n[0], idx / self.n[0]);
        [
            self.extents[0].0 + i as f64 * self.spacing[0],
            if self.dim > 1 { self.extents[1].0 + j as f64 * self.spacing[1] } else { 0.0 },
        ]
    }

    /// Per-axis integer coordinates of a flat index.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx % self.n[0], idx / self.n[0]]
    }

    /// Flat index from per-axis integer coordinates.
    pub fn flat_index(&self, ij: [usize; 2]) -> usize {
        ij[1] * self.n[0] + ij[0]
    }

    /// Trapezoid quadrature weight per node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_mask[idx]
    }
}

/// Scalar nodal field on a shared grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Self { grid, values: vec![c; n] }
    }

    /// Sample a closure of the node coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nodewise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Nodewise combination of two fields on the same grid.
    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// `self += c * other`, exact linearity.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        for (v, &o) in self.values.iter_mut().zip(&other.values) {
            *v += c * o;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Vector nodal field; `components[c]` holds the c-th Cartesian component.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let dim = grid.dim();
        let n = grid.len();
        Self { grid, components: vec![vec![0.0; n]; dim] }
    }

    pub fn from_components(grid: Arc<Grid>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(CoreError::GridMismatch("vector component shape mismatch".into()));
        }
        Ok(Self { grid, components })
    }

    /// Sample closures per component.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let dim = grid.dim();
        let mut components = vec![vec![0.0; grid.len()]; dim];
        for idx in 0..grid.len() {
            let v = f(grid.coords(idx));
            for (c, comp) in components.iter_mut().enumerate() {
                comp[idx] = v[c];
            }
        }
        Self { grid, components }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.components[c]
    }

    /// Vector value at a node (`[v, 0]` in 1D).
    pub fn at(&self, idx: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, comp) in self.components.iter().enumerate() {
            out[c] = comp[idx];
        }
        out
    }

    /// Nodewise Euclidean norm as a scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| {
                self.components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()
            })
            .collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    /// Nodewise dot product with another vector field.
    pub fn dot(&self, other: &Self) -> Result<ScalarField> {
        same_grid(&self.grid, &other.grid)?;
        let values = (0..self.grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .zip(&other.components)
                    .map(|(a, b)| a[i] * b[i])
                    .sum::<f64>()
            })
            .collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    pub fn axpy(&mut self, c: f64, other: &Self) {
        for (mine, theirs) in self.components.iter_mut().zip(&other.components) {
            for (v, &o) in mine.iter_mut().zip(theirs) {
                *v += c * o;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for comp in &mut self.components {
            for v in comp {
                *v *= c;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mag = self.magnitude();
        mag.values.iter().fold(0.0, |m, v| m.max(*v))
    }
}

/// Coefficients of the divergence-form operator: principal matrix `A`
/// (symmetric, uniformly elliptic with constant `ellipticity ≥ 1`), drift
/// vector `B`, and scalar potential `a`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    grid: Arc<Grid>,
    /// Row-major dim×dim principal matrix per node.
    principal: Vec<[f64; 4]>,
    drift: Vec<[f64; 2]>,
    potential: Vec<f64>,
    ellipticity: f64,
}

impl CoefficientSet {
    /// Constant isotropic coefficients `A = a_diag·I`, `B = drift`, `a = potential`.
    pub fn isotropic(
        grid: Arc<Grid>,
        a_diag: f64,
        drift: [f64; 2],
        potential: f64,
        ellipticity: f64,
    ) -> Result<Self> {
        let n = grid.len();
        let dim = grid.dim();
        let mut mat = [0.0; 4];
        for c in 0..dim {
            mat[c * dim + c] = a_diag;
        }
        Self::new(grid, vec![mat; n], vec![drift; n], vec![potential; n], ellipticity)
    }

    /// Coefficients sampled from closures of the node coordinates.
    pub fn from_fns(
        grid: Arc<Grid>,
        principal: impl Fn([f64; 2]) -> [f64; 4],
        drift: impl Fn([f64; 2]) -> [f64; 2],
        potential: impl Fn([f64; 2]) -> f64,
        ellipticity: f64,
    ) -> Result<Self> {
        let coords: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.coords(i)).collect();
        let a = coords.iter().map(|&x| principal(x)).collect();
        let b = coords.iter().map(|&x| drift(x)).collect();
        let pot = coords.iter().map(|&x| potential(x)).collect();
        Self::new(grid, a, b, pot, ellipticity)
    }

    pub fn new(
        grid: Arc<Grid>,
        principal: Vec<[f64; 4]>,
        drift: Vec<[f64; 2]>,
        potential: Vec<f64>,
        ellipticity: f64,
    ) -> Result<Self> {
        let n = grid.len();
        if principal.len() != n || drift.len() != n || potential.len() != n {
            return Err(CoreError::GridMismatch("coefficient arrays do not match grid".into()));
        }
        if ellipticity < 1.0 {
            return Err(CoreError::InvalidCoefficients(format!(
                "ellipticity constant {ellipticity} must be ≥ 1"
            )));
        }
        let set = Self { grid, principal, drift, potential, ellipticity };
        set.check_symmetry()?;
        set.check_ellipticity()?;
        Ok(set)
    }

    fn check_symmetry(&self) -> Result<()> {
        let dim = self.grid.dim();
        if dim == 2 {
            for (idx, m) in self.principal.iter().enumerate() {
                if (m[1] - m[2]).abs() > 1e-14 * (1.0 + m[0].abs() + m[3].abs()) {
                    return Err(CoreError::InvalidCoefficients(format!(
                        "principal matrix not symmetric at node {idx}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sampled ellipticity check: λ⁻¹|ξ|² ≤ Aξ·ξ ≤ λ|ξ|² for the canonical
    /// basis directions and their pairwise sums, at every node.
    fn check_ellipticity(&self) -> Result<()> {
        let dim = self.grid.dim();
        let lam = self.ellipticity;
        let mut probes: Vec<[f64; 2]> = Vec::new();
        for c in 0..dim {
            let mut e = [0.0; 2];
            e[c] = 1.0;
            probes.push(e);
        }
        if dim == 2 {
            probes.push([1.0, 1.0]);
            probes.push([1.0, -1.0]);
        }
        for (idx, m) in self.principal.iter().enumerate() {
            for xi in &probes {
                let norm2: f64 = xi[..dim].iter().map(|v| v * v).sum();
                let mut quad = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        quad += m[i * dim + j] * xi[i] * xi[j];
                    }
                }
                if quad < norm2 / lam - 1e-12 || quad > norm2 * lam + 1e-12 {
                    return Err(CoreError::InvalidCoefficients(format!(
                        "ellipticity violated at node {idx}: Aξ·ξ = {quad}, |ξ|² = {norm2}, λ = {lam}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    /// Principal matrix entry `A_ij` at a node.
    pub fn a(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.principal[idx][i * self.grid.dim() + j]
    }

    pub fn drift_at(&self, idx: usize) -> [f64; 2] {
        self.drift[idx]
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.potential
    }

    /// Max over nodes of |a|, the discrete ‖a‖_∞.
    pub fn potential_sup(&self) -> f64 {
        self.potential.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max over nodes of |B|, the discrete ‖B‖_∞.
    pub fn drift_sup(&self) -> f64 {
        let dim = self.grid.dim();
        self.drift
            .iter()
            .map(|b| b[..dim].iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Apply the principal matrix nodewise to a vector field: `(A v)(x)`.
    pub fn apply_principal(&self, v: &VectorField) -> Result<VectorField> {
        same_grid(&self.grid, v.grid())?;
        let dim = self.grid.dim();
        let mut out = VectorField::zeros(self.grid.clone());
        for idx in 0..self.grid.len() {
            for i in 0..dim {
                let mut s = 0.0;
                for j in 0..dim {
                    s += self.a(idx, i, j) * v.component(j)[idx];
                }
                out.component_mut(i)[idx] = s;
            }
        }
        Ok(out)
    }

    /// Nodal gradient of each principal entry: `grad_a(i, j) = ∇A_ij`.
    pub fn principal_gradients(&self) -> Result<Vec<Vec<VectorField>>> {
        let dim = self.grid.dim();
        let mut out = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut row = Vec::with_capacity(dim);
            for j in 0..dim {
                let entry = ScalarField::new(
                    self.grid.clone(),
                    (0..self.grid.len()).map(|idx| self.a(idx, i, j)).collect(),
                )?;
                row.push(grad(&entry));
            }
            out.push(row);
        }
        Ok(out)
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || (a.shape() == b.shape() && a.extents() == b.extents()) {
        Ok(())
    } else {
        Err(CoreError::GridMismatch("operands live on different grids".into()))
    }
}

/// One-dimensional second-order derivative along a line of `n` samples with
/// spacing `h`: centered in the interior, one-sided at both ends.
fn diff_line(vals: &[f64], h: f64, out: &mut [f64]) {
    let n = vals.len();
    out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (vals[i + 1] - vals[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * vals[n - 1] - 4.0 * vals[n - 2] + vals[n - 3]) / (2.0 * h);
}

/// Nodal gradient, second order everywhere.
pub fn grad(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let [nx, ny] = grid.shape();
    let [hx, hy] = grid.spacing();
    let mut out = VectorField::zeros(grid.clone());

    // x-derivative along each row
    let mut line = vec![0.0; nx];
    let mut dl = vec![0.0; nx];
    for j in 0..ny {
        for i in 0..nx {
            line[i] = f.values()[j * nx + i];
        }
        diff_line(&line, hx, &mut dl);
        for i in 0..nx {
            out.component_mut(0)[j * nx + i] = dl[i];
        }
    }

    if grid.dim() == 2 {
        let mut col = vec![0.0; ny];
        let mut dc = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = f.values()[j * nx + i];
            }
            diff_line(&col, hy, &mut dc);
            for j in 0..ny {
                out.component_mut(1)[j * nx + i] = dc[j];
            }
        }
    }
    out
}

/// Conormal flux `A∇f · axis` at the face between two neighboring nodes,
/// with arithmetic half-node averaging of `A` and, in 2D, of the transverse
/// nodal derivative entering the off-diagonal coupling.
fn face_flux(
    f: &ScalarField,
    coef: &CoefficientSet,
    tangential: Option<&VectorField>,
    lo: usize,
    hi: usize,
    axis: usize,
    h: f64,
) -> f64 {
    let dim = f.grid().dim();
    let a_face = |i: usize, j: usize| 0.5 * (coef.a(lo, i, j) + coef.a(hi, i, j));
    let mut flux = a_face(axis, axis) * (f.values()[hi] - f.values()[lo]) / h;
    if dim == 2 {
        let other = 1 - axis;
        let grad_other = tangential.expect("2D face flux needs nodal gradient");
        let g = 0.5 * (grad_other.component(other)[lo] + grad_other.component(other)[hi]);
        flux += a_face(axis, other) * g;
    }
    flux
}

enum BoundaryClosure {
    /// Zero conormal flux at boundary faces (homogeneous Neumann).
    ZeroFlux,
    /// One-sided conormal flux from the nodal gradient (no boundary condition).
    OneSided,
}

fn div_a_grad_impl(f: &ScalarField, coef: &CoefficientSet, closure: BoundaryClosure) -> Result<ScalarField> {
    same_grid(f.grid(), coef.grid())?;
    let grid = f.grid().clone();
    let dim = grid.dim();
    let [nx, ny] = grid.shape();
    let [hx, hy] = grid.spacing();

    // Nodal gradient is needed for 2D cross fluxes and for one-sided closures.
    let nodal_grad = if dim == 2 || matches!(closure, BoundaryClosure::OneSided) {
        Some(grad(f))
    } else {
        None
    };
    let a_grad = match (&nodal_grad, &closure) {
        (Some(g), BoundaryClosure::OneSided) => Some(coef.apply_principal(g)?),
        _ => None,
    };

    let mut out = ScalarField::zeros(grid.clone());

    let mut accumulate_axis = |axis: usize| {
        let (n_axis, h, stride) = match axis {
            0 => (nx, hx, 1usize),
            _ => (ny, hy, nx),
        };
        let n_other = if axis == 0 { ny } else { nx };
        let other_stride = if axis == 0 { nx } else { 1 };
        for line in 0..n_other {
            let base = line * other_stride;
            for i in 0..n_axis {
                let idx = base + i * stride;
                let cell = if i == 0 || i == n_axis - 1 { h / 2.0 } else { h };
                let up = if i + 1 < n_axis {
                    face_flux(f, coef, nodal_grad.as_ref(), idx, idx + stride, axis, h)
                } else {
                    match closure {
                        BoundaryClosure::ZeroFlux => 0.0,
                        BoundaryClosure::OneSided => a_grad.as_ref().unwrap().component(axis)[idx],
                    }
                };
                let down = if i > 0 {
                    face_flux(f, coef, nodal_grad.as_ref(), idx - stride, idx, axis, h)
                } else {
                    match closure {
                        BoundaryClosure::ZeroFlux => 0.0,
                        BoundaryClosure::OneSided => a_grad.as_ref().unwrap().component(axis)[idx],
                    }
                };
                out.values_mut()[idx] += (up - down) / cell;
            }
        }
    };

    accumulate_axis(0);
    if dim == 2 {
        accumulate_axis(1);
    }
    Ok(out)
}

/// Discrete `div(A∇f)` with the homogeneous Neumann flux built in: the
/// conormal flux at boundary faces is zero. Constants map to zero exactly and
/// `∫ div(A∇f) dx = 0` to machine precision.
pub fn div_a_grad_neumann(f: &ScalarField, coef: &CoefficientSet) -> Result<ScalarField> {
    div_a_grad_impl(f, coef, BoundaryClosure::ZeroFlux)
}

/// Discrete `div(A∇f)` for fields without a boundary condition: interior
/// flux-form stencil, boundary cells closed with the one-sided conormal flux
/// from [`grad`]. In 1D, `∫ div(A∇f) dx` equals the boundary integral of
/// `A∇f·n` exactly.
pub fn div_a_grad_free(f: &ScalarField, coef: &CoefficientSet) -> Result<ScalarField> {
    div_a_grad_impl(f, coef, BoundaryClosure::OneSided)
}

/// Quadrature-weighted inner product of two scalar fields.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    same_grid(f.grid(), g.grid())?;
    Ok(f.grid()
        .weights()
        .iter()
        .zip(f.values().iter().zip(g.values()))
        .map(|(&w, (&a, &b))| w * a * b)
        .sum())
}

/// Quadrature-weighted inner product of two vector fields.
pub fn inner_vec(f: &VectorField, g: &VectorField) -> Result<f64> {
    same_grid(f.grid(), g.grid())?;
    let w = f.grid().weights();
    let mut s = 0.0;
    for (fc, gc) in f.components.iter().zip(&g.components) {
        for i in 0..w.len() {
            s += w[i] * fc[i] * gc[i];
        }
    }
    Ok(s)
}

/// L² norm of a scalar field.
pub fn norm(f: &ScalarField) -> f64 {
    inner(f, f).expect("same grid").max(0.0).sqrt()
}

/// L² norm of a vector field.
pub fn norm_vec(f: &VectorField) -> f64 {
    inner_vec(f, f).expect("same grid").max(0.0).sqrt()
}

/// Boundary integral `∮ expr dS`: the expression is evaluated per boundary
/// node (normal signs are the caller's responsibility). In 1D this is the
/// two-endpoint sum; in 2D the trapezoid rule along the boundary polyline.
pub fn boundary_integral(grid: &Grid, mut expr: impl FnMut(&BoundaryNode) -> f64) -> f64 {
    grid.boundary().iter().map(|b| b.weight * expr(b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn interval_grid_basics() {
        let g = Grid::interval(0.0, 1.0, 9).unwrap();
        assert_eq!(g.spacing()[0], 0.125);
        assert_relative_eq!(g.weights().iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        assert_eq!(g.boundary().len(), 2);
        assert_eq!(g.boundary()[0].normal[0], -1.0);
    }

    #[test]
    fn rectangle_weights_sum_to_measure() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), (9, 17)).unwrap();
        assert_relative_eq!(g.weights().iter().sum::<f64>(), 2.0, max_relative = 1e-13);
        for b in g.boundary() {
            let len = (b.normal[0].powi(2) + b.normal[1].powi(2)).sqrt();
            assert_relative_eq!(len, 1.0, epsilon = 1e-14);
        }
        // boundary weights sum to the perimeter
        let perim: f64 = g.boundary().iter().map(|b| b.weight).sum();
        assert_relative_eq!(perim, 6.0, max_relative = 1e-13);
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(Grid::interval(0.0, 1.0, 4).is_err());
        assert!(Grid::interval(1.0, 1.0, 16).is_err());
    }

    #[test]
    fn grad_exact_on_linear_and_quadratic() {
        let g = Grid::interval(0.0, 1.0, 17).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| x[0]);
        let df = grad(&f);
        for i in 0..g.len() {
            assert_relative_eq!(df.component(0)[i], 1.0, epsilon = 1e-13);
        }
        // centered and one-sided second-order stencils are exact on quadratics
        let f2 = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        let df2 = grad(&f2);
        for i in 0..g.len() {
            assert_relative_eq!(df2.component(0)[i], 2.0 * g.coords(i)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn grad_converges_at_second_order() {
        let err = |n: usize| {
            let g = Grid::interval(0.0, 1.0, n).unwrap();
            let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).sin());
            let df = grad(&f);
            (0..g.len())
                .map(|i| (df.component(0)[i] - PI * (PI * g.coords(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(257), err(513));
        assert!(e1 <= 1e-3, "max gradient error {e1}");
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "refinement ratio {ratio}");
    }

    #[test]
    fn div_a_grad_kernel_and_conservation() {
        let g = Grid::interval(0.0, 1.0, 33).unwrap();
        let coef = CoefficientSet::from_fns(
            g.clone(),
            |x| [1.0 + 0.5 * x[0], 0.0, 0.0, 0.0],
            |_| [0.0, 0.0],
            |_| 0.0,
            1.5,
        )
        .unwrap();
        let c = ScalarField::constant(g.clone(), 3.25);
        let d = div_a_grad_neumann(&c, &coef).unwrap();
        assert_eq!(d.max_abs(), 0.0);

        let f = ScalarField::from_fn(g.clone(), |x| (2.0 * PI * x[0]).cos() + x[0]);
        let df = div_a_grad_neumann(&f, &coef).unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        let integral = inner(&df, &one).unwrap();
        assert!(integral.abs() <= 1e-12 * norm(&f), "divergence theorem residual {integral}");
    }

    #[test]
    fn div_a_grad_matches_laplacian() {
        let g = Grid::interval(0.0, 1.0, 257).unwrap();
        let coef = CoefficientSet::isotropic(g.clone(), 1.0, [0.0, 0.0], 0.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).cos());
        let lap = div_a_grad_neumann(&f, &coef).unwrap();
        // cos(πx) has zero Neumann flux, so the stencil is consistent everywhere
        let mut max_err: f64 = 0.0;
        for i in 0..g.len() {
            let exact = -PI * PI * (PI * g.coords(i)[0]).cos();
            max_err = max_err.max((lap.values()[i] - exact).abs());
        }
        let h = g.spacing()[0];
        assert!(max_err <= 10.0 * h * h, "max error {max_err} vs O(h²) = {}", h * h);
    }

    #[test]
    fn operator_symmetry_neumann() {
        let g = Grid::interval(0.0, 1.0, 65).unwrap();
        let coef = CoefficientSet::from_fns(
            g.clone(),
            |x| [1.0 + 0.5 * x[0], 0.0, 0.0, 0.0],
            |_| [0.0, 0.0],
            |_| 0.0,
            1.5,
        )
        .unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| (3.0 * x[0]).sin());
        let gfield = ScalarField::from_fn(g.clone(), |x| x[0] * x[0] * (1.0 - x[0]));
        let lf = div_a_grad_neumann(&f, &coef).unwrap();
        let lg = div_a_grad_neumann(&gfield, &coef).unwrap();
        let lhs = inner(&lf, &gfield).unwrap();
        let rhs = inner(&f, &lg).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-10 * norm(&f) * norm(&gfield),
            "symmetry defect {}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn summation_by_parts_under_refinement() {
        // ⟨div(A∇f), g⟩ + ⟨A∇f, ∇g⟩ → 0 at O(h²) for zero-flux f
        let defect = |n: usize| {
            let g = Grid::interval(0.0, 1.0, n).unwrap();
            let coef = CoefficientSet::isotropic(g.clone(), 1.0, [0.0, 0.0], 0.0, 1.0).unwrap();
            let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).cos());
            let gf = ScalarField::from_fn(g.clone(), |x| (2.0 * PI * x[0]).cos() + x[0]);
            let term1 = inner(&div_a_grad_neumann(&f, &coef).unwrap(), &gf).unwrap();
            let agrad = coef.apply_principal(&grad(&f)).unwrap();
            let term2 = inner_vec(&agrad, &grad(&gf)).unwrap();
            (term1 + term2).abs()
        };
        let (d1, d2) = (defect(129), defect(257));
        assert!(d2 < d1, "defect should shrink: {d1} -> {d2}");
        let order = (d1 / d2).log2();
        assert!((1.5..=2.6).contains(&order), "measured order {order}");
    }

    #[test]
    fn inner_products_and_boundary_integral() {
        let g = Grid::interval(0.0, 1.0, 257).unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        assert_relative_eq!(inner(&one, &one).unwrap(), 1.0, max_relative = 1e-13);

        let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).cos());
        assert_relative_eq!(inner(&f, &f).unwrap(), 0.5, epsilon = 1e-6);

        assert_relative_eq!(boundary_integral(&g, |_| 1.0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn grid_mismatch_detected() {
        let g1 = Grid::interval(0.0, 1.0, 17).unwrap();
        let g2 = Grid::interval(0.0, 1.0, 33).unwrap();
        let f = ScalarField::constant(g1, 1.0);
        let h = ScalarField::constant(g2, 1.0);
        assert!(inner(&f, &h).is_err());
    }

    #[test]
    fn ellipticity_violation_rejected() {
        let g = Grid::interval(0.0, 1.0, 17).unwrap();
        let res = CoefficientSet::isotropic(g, 5.0, [0.0, 0.0], 0.0, 2.0);
        assert!(res.is_err());
    }

    #[test]
    fn div_free_pairs_with_boundary_flux_1d() {
        // ∫ div(A∇Φ) dx telescopes to the one-sided boundary fluxes exactly
        let g = Grid::interval(0.0, 1.0, 33).unwrap();
        let coef = CoefficientSet::from_fns(
            g.clone(),
            |x| [1.0 + 0.5 * x[0], 0.0, 0.0, 0.0],
            |_| [0.0, 0.0],
            |_| 0.0,
            1.5,
        )
        .unwrap();
        let phi = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).sin() - 1.0);
        let div = div_a_grad_free(&phi, &coef).unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        let volume = inner(&div, &one).unwrap();
        let agrad = coef.apply_principal(&grad(&phi)).unwrap();
        let surface = boundary_integral(&g, |b| {
            b.normal[0] * agrad.component(0)[b.node]
        });
        assert_relative_eq!(volume, surface, epsilon = 1e-12);
    }

    #[test]
    fn constant_in_kernel_2d() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (12, 14)).unwrap();
        let coef = CoefficientSet::from_fns(
            g.clone(),
            |x| {
                // symmetric full matrix with modest anisotropy
                let e = 0.2 * (x[0] + x[1]);
                [1.2, e, e, 1.0]
            },
            |_| [0.0, 0.0],
            |_| 0.0,
            2.0,
        )
        .unwrap();
        let c = ScalarField::constant(g.clone(), -2.0);
        let d = div_a_grad_neumann(&c, &coef).unwrap();
        assert_eq!(d.max_abs(), 0.0);

        let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0]).cos() * (2.0 * x[1]).cos());
        let df = div_a_grad_neumann(&f, &coef).unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        assert!(inner(&df, &one).unwrap().abs() <= 1e-12 * norm(&f));
    }

    #[test]
    fn grad_2d_exact_on_bilinear() {
        let g = Grid::rectangle((0.0, 2.0), (0.0, 1.0), (9, 11)).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| 2.0 * x[0] - 3.0 * x[1] + x[0] * x[1]);
        let df = grad(&f);
        for i in 0..g.len() {
            let [x, y] = g.coords(i);
            assert_relative_eq!(df.component(0)[i], 2.0 + y, epsilon = 1e-12);
            assert_relative_eq!(df.component(1)[i], -3.0 + x, epsilon = 1e-12);
        }
    }
}
