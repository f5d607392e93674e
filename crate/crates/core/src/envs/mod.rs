pub mod grid;
pub mod classic;
