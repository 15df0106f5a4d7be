//! Desk-scale numerical laboratory for quantitative unique continuation and
//! observability of linear parabolic equations with homogeneous Neumann
//! boundary conditions,
//!
//! ```text
//!     ∂ₜu − div(A∇u) + B·∇u + au = 0   in Ω×(0,T),
//!     A∇u·n = 0                        on ∂Ω×(0,T),
//! ```
//!
//! on 1D intervals (canonical) and 2D rectangles (best effort).
//!
//! The crate builds the full verification chain:
//!
//! * [`mesh`] — grids, fields, quadrature, and discrete differential operators
//!   with conservative Neumann flux handling;
//! * [`solver`] — Crank–Nicolson time integration and the two L²/H¹ energy
//!   estimates;
//! * [`weights`] — explicit Morse weight families, the Carleman weights
//!   Φ = sφ/Γ(t), their geometric constants, and the admissible range of s;
//! * [`commutator`] — the symmetric/antisymmetric Carleman commutator parts
//!   and their three integral identities;
//! * [`frequency`] — the stacked weighted vector 𝐟, the frequency function
//!   N(t) = ⟨𝒮𝐟,𝐟⟩/‖𝐟‖², and the staged log-convexity checks;
//! * [`ode_lemma`] — the standalone two-ODE interpolation lemma;
//! * [`observability`] — the interpolation-constant fit, the ε-form with its
//!   constant ledger, the telescoping time sequence, and the final
//!   observability inequality.

pub mod commutator;
pub mod frequency;
pub mod linalg;
pub mod mesh;
pub mod ode_lemma;
pub mod observability;
pub mod quadrature;
pub mod solver;
pub mod weights;

mod error;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
