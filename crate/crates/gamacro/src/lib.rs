//! A geometric-algebra macro compiler.
//!
//! The pipeline: `.gmac` project files describe frames, linear transforms,
//! subspaces, multivector classes, constants and macros ([`dsl`]); the
//! [`compiler`] resolves them into product tables and linear GA-operation
//! lists; [`codegen`] evaluates a macro symbolically at a binding point in a
//! target source file and splices optimized scalar assignment code in place.
//! The [`oracle`] module is an independent dense numeric GA engine used to
//! verify every generated sequence.

pub mod blades;
pub mod codegen;
pub mod compiler;
pub mod dsl;
pub mod error;
pub mod multivector;
pub mod oracle;
pub mod project;
pub mod stdlib;
pub mod symbolic;

pub use error::Error;
