pub mod error;
pub mod numerics;
pub mod structures;
pub mod pair;
pub mod constructors;
pub mod grassmann;
pub mod tangent;
pub mod field;
pub mod cli;
