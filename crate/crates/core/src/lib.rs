pub mod series;
pub mod model;
pub mod homological;
pub mod normalizer;
pub mod transform;
pub mod integrator;
pub mod fa;
pub mod birkhoff;
pub mod harness;
