//! Randomized (2,3) partition scheme.
//!
//! Each secret pixel `s` and a fresh uniform byte `r` are cut into nibbles,
//! `s = s1·16 + s2` and `r = r1·16 + r2` (part 1 is the high nibble). Share
//! pixels are built high part first:
//!
//! ```text
//! sc1 = (s2 ^ r2, r1)
//! sc2 = (s1 ^ r1, r2)
//! sc3 = (s2 ^ r1, s1 ^ r2)
//! ```
//!
//! Neither the nibble order nor the part order is fixed by the generation
//! steps alone. They follow from the three reconstruction rules, which read
//! `s2 = sc1.hi ^ sc2.lo`, `s1 = sc1.lo ^ sc2.hi` for pair (1,2),
//! `s2 = sc1.lo ^ sc3.hi`, `s1 ^ s2 = sc1.hi ^ sc3.lo` for (1,3), and
//! `s1 = sc2.lo ^ sc3.lo`, `s1 ^ s2 = sc2.hi ^ sc3.hi` for (2,3). Only the
//! layout above makes every rule cancel its mask.
//!
//! For a fixed `s`, each of `r -> sc1`, `r -> sc2`, `r -> sc3` is a bijection
//! on bytes, so every single share pixel is uniformly distributed.

use rand::RngCore;

use crate::image_io::{GrayImage, Scheme, Share, ShareIndex, ShareTriple};
use crate::sharing::{order_pair, Pair, ReconstructError};

pub type PartitionShareTriple = ShareTriple;

#[inline]
fn hi(v: u8) -> u8 {
    v >> 4
}

#[inline]
fn lo(v: u8) -> u8 {
    v & 0x0F
}

#[inline]
fn join(high: u8, low: u8) -> u8 {
    (high << 4) | low
}

/// Share pixels for secret `s` under mask `r`.
pub fn partition_split_pixel(s: u8, r: u8) -> [u8; 3] {
    let (s1, s2, r1, r2) = (hi(s), lo(s), hi(r), lo(r));
    [join(s2 ^ r2, r1), join(s1 ^ r1, r2), join(s2 ^ r1, s1 ^ r2)]
}

/// Splits `img`, drawing one mask byte per pixel in row-major order.
pub fn partition_split<R: RngCore + ?Sized>(img: &GrayImage, rng: &mut R) -> PartitionShareTriple {
    let mut masks = vec![0u8; img.pixels().len()];
    rng.fill_bytes(&mut masks);
    partition_split_with_masks(img, &masks)
}

/// Splits with caller-supplied masks, one per pixel.
pub fn partition_split_with_masks(img: &GrayImage, masks: &[u8]) -> PartitionShareTriple {
    assert_eq!(masks.len(), img.pixels().len(), "one mask byte per pixel");
    let n = masks.len();
    let (mut p1, mut p2, mut p3) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (&s, &r) in img.pixels().iter().zip(masks) {
        let [a, b, c] = partition_split_pixel(s, r);
        p1.push(a);
        p2.push(b);
        p3.push(c);
    }
    let share = |index, pixels| {
        Share::new(Scheme::Partition, index, img.width(), img.height(), pixels)
            .expect("8-bit share of valid image")
    };
    ShareTriple {
        sc1: share(ShareIndex::ONE, p1),
        sc2: share(ShareIndex::TWO, p2),
        sc3: share(ShareIndex::THREE, p3),
    }
}

/// Recovers one pixel; `a` comes from the lower-indexed share of `pair`.
pub fn partition_reconstruct_pixel(pair: Pair, a: u8, b: u8) -> u8 {
    let (s1, s2) = match pair {
        Pair::OneTwo => (lo(a) ^ hi(b), hi(a) ^ lo(b)),
        Pair::OneThree => {
            let s2 = lo(a) ^ hi(b);
            (hi(a) ^ lo(b) ^ s2, s2)
        }
        Pair::TwoThree => {
            let s1 = lo(a) ^ lo(b);
            (s1, hi(a) ^ hi(b) ^ s1)
        }
    };
    join(s1, s2)
}

pub fn partition_reconstruct(a: &Share, b: &Share) -> Result<GrayImage, ReconstructError> {
    let (pair, first, second) = order_pair(Scheme::Partition, a, b)?;
    let pixels = first
        .pixels()
        .iter()
        .zip(second.pixels())
        .map(|(&x, &y)| partition_reconstruct_pixel(pair, x, y))
        .collect();
    Ok(GrayImage::new(first.width(), first.height(), pixels)
        .expect("dimensions taken from a valid share"))
}
