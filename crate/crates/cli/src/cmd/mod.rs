pub mod cluster;
pub mod compare;
pub mod layers;
pub mod reduce;
pub mod synth;
