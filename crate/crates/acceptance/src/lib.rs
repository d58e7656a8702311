//! Oracles that share no code with the engine: exact enumeration of small
//! discrete models, big-integer float products, and truth tables written out
//! from the model's prose description.

pub mod bigfloat;
pub mod enumeration;
pub mod tables;
