//! Numerical geometry of Lagrangian immersions into `C^n` and `CP^n`.
//!
//! Immersions are evaluated on exact Taylor jets, so the second fundamental
//! form, its trace-free part `ĥ` and their covariant derivatives are exact to
//! rounding. On top of the pointwise [`GeometryState`] sit residual checks for
//! the structure equations and the Laplacian formula for `|ĥ|²`
//! ([`identities`]), and quadrature of the energy functionals ([`quadrature`]).
//!
//! ```
//! use whitney::{geometry_state, make_whitney_cn, ChartPoint, Depth};
//!
//! let sphere = make_whitney_cn(2.0, &[[0.5, 0.0], [0.0, -1.0]], 2)?;
//! let st = geometry_state(&sphere, &ChartPoint::new(1, vec![0.2, 0.9]), Depth::Pointwise)?;
//! assert!(st.hhat.norm2() < 1e-24);
//! # Ok::<(), whitney::Error>(())
//! ```

pub mod chart;
pub mod cpn;
pub mod error;
pub mod geometry;
pub mod identities;
pub mod immersion;
pub mod jet;
pub mod quadrature;
pub mod tensor;

pub use chart::{ChartPoint, SourceModel};
pub use error::{Error, Result};
pub use geometry::{geometry_state, geometry_state_with, Depth, GeometryOptions, GeometryState};
pub use identities::{run_identity_suite, IdentityReport, SuiteOptions};
pub use immersion::{
    make_black_box, make_lagrangian_plane, make_perturbed_whitney, make_product_torus, make_rpn, make_whitney_cn,
    make_whitney_cpn, Ambient, Immersion, ImmersionSpec,
};
pub use quadrature::{energy_report, EnergyReport, QuadratureRule};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/jets.md")]
    mod jets {}
    #[doc = include_str!("../../../book/src/immersions.md")]
    mod immersions {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/identities.md")]
    mod identities {}
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
}
