//! Static deadlock analysis for a small concurrent bytecode language.
//!
//! The pipeline is: [`frontend`] parses assembly into a class table,
//! [`typesystem`] infers a behavioural type (a [`lam`] program) for every
//! method, and [`solver`] decides whether the main lam can display a
//! circular lock dependency. [`oracle`] runs programs concretely under every
//! interleaving and serves as ground truth in tests.

pub mod frontend;
pub mod lam;
pub mod name;
pub mod oracle;
pub mod solver;
pub mod typesystem;

pub use name::Name;
