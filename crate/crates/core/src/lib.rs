//! Operator-curated narration pipeline.
//!
//! A scene context accumulates operator-typed lines and published model
//! sentences. Each generation request runs the model several times over the
//! whole context, keeps complete sentences within a character budget, and
//! filters every sentence before an operator can select, reorder, edit and
//! publish them back into the context. Sessions are event-sourced so a show
//! can be replayed byte-for-byte from its transcript and recorded completions.

pub mod backend;
pub mod clock;
pub mod engine;
pub mod exec;
pub mod filter;
pub mod net;
pub mod seed;
pub mod segment;
pub mod session;
pub mod synth;
