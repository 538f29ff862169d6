//! (2,3) secret image sharing for cheque truncation.
//!
//! * [`image_io`]: grayscale images, PGM and `SIS1` share containers, MSE.
//! * [`xor_scheme`]: deterministic bit-plane scheme with 4-bit shares.
//! * [`partition_scheme`]: randomized nibble-masking scheme with 8-bit shares.
//! * [`cheat_detect`]: radix-`p` commitment and cheater identification.
//! * [`cts_sim`]: deterministic simulation of the clearing workflow.

pub mod cheat_detect;
pub mod cts_sim;
pub mod image_io;
pub mod partition_scheme;
pub mod sharing;
pub mod xor_scheme;

pub use cheat_detect::{PublicParams, Verdict, VerificationReport};
pub use image_io::{GrayImage, Scheme, Share, ShareIndex, ShareTriple};
pub use sharing::{reconstruct, split, Pair, ReconstructError};
