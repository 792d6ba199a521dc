//! Adaptive Argyris finite elements for Kirchhoff plate bending.
//!
//! The pipeline is: build a [`mesh::Mesh`], wrap it with material and loads
//! in a [`model::PlateProblem`], [`assembly::solve`] it, estimate the error
//! with [`estimator::global_estimate`], and let [`adapt::run_study`] drive
//! refinement. [`oracle`] provides Navier series reference values and
//! [`builtin`] the stock benchmark problems.

// Dense element matrices read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

use thiserror::Error;

pub mod adapt;
pub mod assembly;
pub mod builtin;
pub mod element;
pub mod estimator;
pub mod mesh;
pub mod model;
pub mod oracle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlateError {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Element(#[from] element::ElementError),
    #[error(transparent)]
    Assembly(#[from] assembly::AssemblyError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

impl PlateError {
    /// Whether the failure is numerical (as opposed to invalid input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PlateError::Element(_) | PlateError::Assembly(_) | PlateError::Oracle(_)
        )
    }
}
