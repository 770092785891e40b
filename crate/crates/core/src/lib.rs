//! Numerical laboratory for the large-time behaviour of perturbed viscous
//! shock profiles in systems of conservation laws.

pub mod decomposition;
pub mod diffusion_waves;
pub mod error;
pub mod evolution;
pub mod kernel_quadrature;
pub mod mesh;
pub mod pipeline;
pub mod profile;
pub mod quadrature;
pub mod systems;
pub mod templates;
pub mod verification;

pub use error::{Error, ErrorClass, Result};

// The guide's snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/diffusion_waves.md")]
    mod diffusion_waves {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
