//! Deterministic discrete-event simulator for comparing QUIC startup
//! behavior: Cubic with Slow Start against Blitzstart, which seeds the
//! congestion window from a client-signaled bandwidth estimate.

pub mod congestion;
pub mod engine;
pub mod harness;
pub mod netmodel;
pub mod signaling;
pub mod transport;
