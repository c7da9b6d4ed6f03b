//! Numerical toolkit for indefinite-metric scattering theory built from
//! transfer polynomials.

pub mod fitter;
pub mod formfactor;
pub mod gns;
pub mod kinematics;
pub mod lszlab;
pub mod packet;
pub mod quadrature;
pub mod scalar;
pub mod structure;
pub mod transfer;
pub mod truncation;

pub use kinematics::{FourVector, LegLabel, ModelParams};
pub use packet::WavePacket;
pub use scalar::Real;

pub type FourVector64 = kinematics::FourVector<f64>;
pub type ModelParams64 = kinematics::ModelParams<f64>;
pub type WavePacket64 = packet::WavePacket<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
