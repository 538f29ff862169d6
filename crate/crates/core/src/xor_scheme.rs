//! Deterministic (2,3) XOR scheme.
//!
//! Bit `k` of a pixel has weight `2^k`. Share 1 carries bits 0, 2, 4, 6 and
//! share 2 carries bits 1, 3, 5, 7, each packed into a nibble with bit `2k`
//! (or `2k+1`) landing at position `k`. Share 3 is their XOR. For pixel 190
//! (`1011_1110`) that gives shares 6, 15 and 9.
//!
//! Each share is a 4-bit image, half the size of the secret. The scheme is not
//! hiding: share 1 *is* the even-bit plane of the secret, and share 2 the odd
//! one.

use crate::image_io::{GrayImage, Scheme, Share, ShareIndex, ShareTriple};
use crate::sharing::{order_pair, Pair, ReconstructError};

pub type XorShareTriple = ShareTriple;

/// Gathers bits 0, 2, 4, 6 of `v` into a nibble.
pub fn even_bits(v: u8) -> u8 {
    (0..4).fold(0, |acc, k| acc | (((v >> (2 * k)) & 1) << k))
}

/// Gathers bits 1, 3, 5, 7 of `v` into a nibble.
pub fn odd_bits(v: u8) -> u8 {
    even_bits(v >> 1)
}

/// Inverse of [`even_bits`]/[`odd_bits`]: spreads `even` over bits 0, 2, 4, 6
/// and `odd` over bits 1, 3, 5, 7.
pub fn interleave(even: u8, odd: u8) -> u8 {
    (0..4).fold(0, |acc, k| {
        acc | (((even >> k) & 1) << (2 * k)) | (((odd >> k) & 1) << (2 * k + 1))
    })
}

pub fn xor_split_pixel(v: u8) -> [u8; 3] {
    let sc1 = even_bits(v);
    let sc2 = odd_bits(v);
    [sc1, sc2, sc1 ^ sc2]
}

pub fn xor_split(img: &GrayImage) -> XorShareTriple {
    let n = img.pixels().len();
    let (mut p1, mut p2, mut p3) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &v in img.pixels() {
        let [a, b, c] = xor_split_pixel(v);
        p1.push(a);
        p2.push(b);
        p3.push(c);
    }
    let share = |index, pixels| {
        Share::new(Scheme::Xor, index, img.width(), img.height(), pixels)
            .expect("nibbles fit a 4-bit share")
    };
    ShareTriple {
        sc1: share(ShareIndex::ONE, p1),
        sc2: share(ShareIndex::TWO, p2),
        sc3: share(ShareIndex::THREE, p3),
    }
}

/// Recovers one pixel from two share nibbles, `lo` from the lower-indexed share.
pub fn xor_reconstruct_pixel(pair: Pair, lo: u8, hi: u8) -> u8 {
    match pair {
        Pair::OneTwo => interleave(lo, hi),
        Pair::OneThree => interleave(lo, lo ^ hi),
        Pair::TwoThree => interleave(lo ^ hi, lo),
    }
}

/// Rebuilds the secret from any two XOR shares; argument order is irrelevant.
pub fn xor_reconstruct(a: &Share, b: &Share) -> Result<GrayImage, ReconstructError> {
    let (pair, lo, hi) = order_pair(Scheme::Xor, a, b)?;
    let pixels = lo
        .pixels()
        .iter()
        .zip(hi.pixels())
        .map(|(&x, &y)| xor_reconstruct_pixel(pair, x, y))
        .collect();
    Ok(GrayImage::new(lo.width(), lo.height(), pixels)
        .expect("dimensions taken from a valid share"))
}
