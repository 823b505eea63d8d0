pub mod code;
pub mod dissipation;
pub mod dynamics;
pub mod fock;
pub mod gates;
pub mod hardware;
pub mod rates;
