//! Brute-force reference implementations.
//!
//! Everything here is deliberately naive: dense `2^W x 2^W` matrices built
//! from explicit Kronecker products, explicit density matrices, and loops
//! over every pair of views. Nothing in this crate shares code with
//! `qssl-core`, so agreement between the two is meaningful.

pub mod dense;
pub mod density;
pub mod finite_diff;
pub mod ntxent;
