// `!(x > 0.0)` is used so that NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod clock;
pub mod codec;
pub mod crypto;
pub mod ercset;
pub mod pm;
pub mod pseudonym;
pub mod simnet;
pub mod sizing;
pub mod slot_tree;
pub mod verifier;
pub mod wire;
