//! Two-isogeny descent engine for the congruent number problem.
//!
//! Given a squarefree n whose odd prime factors are all 3 mod 8, the engine
//! builds the F2 descent matrix, computes the phi- and psi-Selmer groups of
//! the curves y^2 = x^3 - n^2 x and y^2 = x^3 + 4 n^2 x from closed-form
//! local conditions, determines the image psi-Selmer group through auxiliary
//! quartic coverings, and derives rank 0 together with the 2-part of both
//! Tate-Shafarevich groups. Every closed-form step is cross-checked by an
//! independent p-adic search oracle, and verdicts are cross-checked against
//! the ternary-form counting criterion.

pub mod arith;
pub mod descent;
pub mod error;
pub mod f2linalg;
pub mod localsolve;
pub mod selmer;
pub mod sieve;
pub mod tunnell;

pub use error::{Error, Result};
