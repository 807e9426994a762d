//! Core of the ASP code-generation benchmark: program handling, the solver
//! bridge, model-based and test-suite metrics, mutation analysis and the
//! problem dataset.

pub mod dataset;
pub mod model_eval;
pub mod mutation;
pub mod solver;
pub mod suite;
pub mod syntax;
