pub mod conv;
mod elementwise;
mod linear;
mod loss;
pub mod norm;
pub mod pool;
mod shape;
