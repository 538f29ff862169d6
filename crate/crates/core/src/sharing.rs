//! Scheme-independent entry points and pair validation shared by both schemes.

use rand::RngCore;
use thiserror::Error;

use crate::image_io::{GrayImage, Scheme, Share, ShareIndex, ShareTriple};
use crate::{partition_scheme, xor_scheme};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReconstructError {
    #[error("both shares carry index {0}")]
    DuplicateIndex(ShareIndex),
    #[error("share dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("expected a {expected} share, got {found}")]
    WrongScheme { expected: Scheme, found: Scheme },
    #[error("cannot combine a {0} share with a {1} share")]
    MixedSchemes(Scheme, Scheme),
}

/// Which two participants are pooling their shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pair {
    OneTwo,
    OneThree,
    TwoThree,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::OneTwo, Pair::OneThree, Pair::TwoThree];

    pub fn indices(self) -> (ShareIndex, ShareIndex) {
        match self {
            Pair::OneTwo => (ShareIndex::ONE, ShareIndex::TWO),
            Pair::OneThree => (ShareIndex::ONE, ShareIndex::THREE),
            Pair::TwoThree => (ShareIndex::TWO, ShareIndex::THREE),
        }
    }
}

/// Validates a pair of shares for `scheme` and returns them ordered by index.
pub(crate) fn order_pair<'a>(
    scheme: Scheme,
    a: &'a Share,
    b: &'a Share,
) -> Result<(Pair, &'a Share, &'a Share), ReconstructError> {
    for s in [a, b] {
        if s.scheme() != scheme {
            return Err(ReconstructError::WrongScheme {
                expected: scheme,
                found: s.scheme(),
            });
        }
    }
    if a.index() == b.index() {
        return Err(ReconstructError::DuplicateIndex(a.index()));
    }
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(ReconstructError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let (lo, hi) = if a.index() < b.index() {
        (a, b)
    } else {
        (b, a)
    };
    let pair = match (lo.index().get(), hi.index().get()) {
        (1, 2) => Pair::OneTwo,
        (1, 3) => Pair::OneThree,
        _ => Pair::TwoThree,
    };
    Ok((pair, lo, hi))
}

/// Splits `img` with the chosen scheme. The xor scheme ignores `rng`.
pub fn split<R: RngCore + ?Sized>(scheme: Scheme, img: &GrayImage, rng: &mut R) -> ShareTriple {
    match scheme {
        Scheme::Xor => xor_scheme::xor_split(img),
        Scheme::Partition => partition_scheme::partition_split(img, rng),
    }
}

/// Reconstructs from any two shares of the same scheme.
pub fn reconstruct(a: &Share, b: &Share) -> Result<GrayImage, ReconstructError> {
    if a.scheme() != b.scheme() {
        return Err(ReconstructError::MixedSchemes(a.scheme(), b.scheme()));
    }
    match a.scheme() {
        Scheme::Xor => xor_scheme::xor_reconstruct(a, b),
        Scheme::Partition => partition_scheme::partition_reconstruct(a, b),
    }
}
