//! Exact computations around perfect powers in orbits of polynomial maps
//! over Q: heights, valuations, power relations in orbits, searches and
//! abc-style diagnostics.

pub mod abcdiag;
pub mod cli;
pub mod dynamics;
pub mod exactnum;
pub mod heights;
pub mod powerrel;
pub mod search;
mod serde_rational;
