//! Fibonacci and Lucas arithmetic, and a replayable computational
//! certificate for the statement that no Lucas number is a Lehmer number
//! (a composite `N` with `phi(N) | N - 1`).
//!
//! The crate is organised bottom-up:
//!
//! * [`sequences`]: exact and modular Fibonacci/Lucas values, identities, periods.
//! * [`arith`]: primality, budgeted factorization, `phi`, `tau`, `omega`, Legendre symbols.
//! * [`certified`]: dyadic interval enclosures for logarithms and comparisons.
//! * [`apparition`]: ranks of apparition, Wall exponents, primitive prime divisors.
//! * [`lehmer`]: the Lehmer property, 2-adic filters and a direct search.
//! * [`proof`]: the ordered certificate of every computational step.
//! * [`cli`]: the `lucas-lehmer` command-line front end.

pub mod apparition;
pub mod arith;
pub mod certified;
pub mod cli;
pub mod error;
pub mod json;
pub mod lehmer;
pub mod proof;
pub mod sequences;

pub use error::{Error, Result};
