//! Model expansion over four-valued partial structures.

pub mod algebra;
pub mod engines;
pub mod explain;
pub mod lattice;
pub mod propagators;
pub mod frontend;
