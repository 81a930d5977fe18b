//! Pipeline for mining temporally distant definition pairs from wiki revision
//! histories, labeling them by multi-annotator consensus, and growing a
//! three-class definition-change classifier through iterative self-training.

pub mod annotate;
pub mod bootstrap;
pub mod eval;
pub mod harvest;
pub mod wictsv;

mod textutil;

/// Stable hex digest of a byte string. Changes to this function invalidate
/// every recorded artifact manifest, so treat the output as a wire format.
pub fn content_digest(bytes: &[u8]) -> String {
    format!("{:016x}", textutil::fnv1a64(bytes))
}
