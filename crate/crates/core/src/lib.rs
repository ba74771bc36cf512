pub mod assembly;
pub mod basis;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod solvers;
pub mod trials;
pub mod variety;
