//! Circuit-level Monte Carlo of codes concatenated with a biased bosonic qubit.

pub mod circuit;
pub mod decoder;
pub mod matching;
pub mod mc;
pub mod noise;
pub mod optimize;
pub mod sampler;
pub mod threshold;

pub use circuit::{build_repetition_circuit, build_surface_circuit, PauliCircuit};
pub use decoder::{Decoder, DetectorGraph, ErrorModel};
pub use mc::{run_mc, MCResult};
pub use noise::NoiseModel;
