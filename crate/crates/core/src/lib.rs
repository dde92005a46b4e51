//! Characteristic functions of commuting row contractions, computed at finite
//! dimension and finite Fock truncation order.
//!
//! The crate is organised bottom-up: [`opcore`] holds dense complex linear
//! algebra, [`tuples`] the operator tuples themselves, [`charfn`] the
//! commutative characteristic function, [`decomp`] the canonical block
//! decomposition, [`fock`] the truncated Fock space calculus, [`factor`] the
//! factorization engine, [`fixtures`] seeded generators with known answers and
//! [`verify`] the numerical identity batteries used by the command line tool.

pub mod error;
pub mod opcore;
pub mod tuples;
pub mod charfn;
pub mod decomp;
pub mod fock;
pub mod factor;
pub mod fixtures;
pub mod verify;

pub use error::{Error, Result};
