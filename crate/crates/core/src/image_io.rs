//! Grayscale images, shares, and their on-disk encodings.
//!
//! Secret images are read and written as binary PGM (`P5`). Shares use the
//! `SIS1` container:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `SIS1`                           |
//! | 4      | 1    | version (`0x01`)                       |
//! | 5      | 1    | scheme (1 = xor, 2 = partition)        |
//! | 6      | 1    | share index (1..=3)                    |
//! | 7      | 1    | bit depth (4 or 8)                     |
//! | 8      | 4    | width, u32 little-endian               |
//! | 12     | 4    | height, u32 little-endian              |
//! | 16     | ..   | pixel payload                          |
//!
//! Four-bit payloads pack two pixels per byte, earlier pixel in the high
//! nibble. An odd pixel count leaves the final low nibble zero.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const SHARE_MAGIC: &[u8; 4] = b"SIS1";
pub const SHARE_VERSION: u8 = 0x01;
pub const SHARE_HEADER_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} values but {width}x{height} needs {expected}")]
    PixelCount {
        width: u32,
        height: u32,
        expected: u64,
        actual: usize,
    },
    #[error("pixel {value} at position {position} exceeds {bit_depth}-bit range")]
    PixelOutOfRange {
        position: usize,
        value: u8,
        bit_depth: u8,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a binary PGM: expected magic P5")]
    BadMagic,
    #[error("ASCII PGM (P2) is not supported, convert to P5")]
    AsciiUnsupported,
    #[error("malformed PGM header: {0}")]
    MalformedHeader(&'static str),
    #[error("PGM maxval {0} is outside 1..=255")]
    UnsupportedMaxval(u32),
    #[error("truncated PGM pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: usize },
    #[error("PGM pixel {value} exceeds declared maxval {maxval}")]
    PixelAboveMaxval { value: u8, maxval: u32 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShareFormatError {
    #[error("share container shorter than its {SHARE_HEADER_LEN}-byte header")]
    TruncatedHeader,
    #[error("bad share magic, expected SIS1")]
    BadMagic,
    #[error("unsupported share container version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown scheme tag {0}")]
    UnknownScheme(u8),
    #[error("share index {0} outside 1..=3")]
    BadIndex(u8),
    #[error("bit depth {found} does not match scheme {scheme} (expects {expected})")]
    BitDepthMismatch {
        scheme: Scheme,
        expected: u8,
        found: u8,
    },
    #[error("share payload is {found} bytes, expected {expected}")]
    PayloadLength { expected: u64, found: usize },
    #[error("non-zero padding nibble in 4-bit payload")]
    NonZeroPadding,
    #[error("tamper offset {offset} outside payload of {len} bytes")]
    TamperOffset { offset: usize, len: usize },
    #[error(
        "tamper mask {mask:#04x} at offset {offset} leaves the share unchanged or touches padding"
    )]
    TamperMask { offset: usize, mask: u8 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// An 8-bit grayscale image stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("pixels", &format_args!("[{} bytes]", self.pixels.len()))
            .finish()
    }
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension { width, height });
    }
    let expected = u64::from(width) * u64::from(height);
    if expected != len as u64 {
        return Err(ImageError::PixelCount {
            width,
            height,
            expected,
            actual: len,
        });
    }
    Ok(())
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from rows of equal length.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, ImageError> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.as_ref().len()) as u32;
        let pixels: Vec<u8> = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn same_dimensions(&self, other: &GrayImage) -> Result<(), ImageError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Xor,
    Partition,
}

impl Scheme {
    pub fn bit_depth(self) -> u8 {
        match self {
            Scheme::Xor => 4,
            Scheme::Partition => 8,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Scheme::Xor => 1,
            Scheme::Partition => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Scheme::Xor),
            2 => Some(Scheme::Partition),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Xor => "xor",
            Scheme::Partition => "partition",
        }
    }

    /// Number of payload bytes a share of `pixel_count` pixels occupies.
    pub fn payload_len(self, pixel_count: u64) -> u64 {
        match self {
            Scheme::Xor => pixel_count.div_ceil(2),
            Scheme::Partition => pixel_count,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xor" => Ok(Scheme::Xor),
            "partition" => Ok(Scheme::Partition),
            other => Err(format!(
                "unknown scheme `{other}` (expected xor or partition)"
            )),
        }
    }
}

/// Participant index of a share, always in `1..=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShareIndex(u8);

impl ShareIndex {
    pub const ONE: ShareIndex = ShareIndex(1);
    pub const TWO: ShareIndex = ShareIndex(2);
    pub const THREE: ShareIndex = ShareIndex(3);
    pub const ALL: [ShareIndex; 3] = [Self::ONE, Self::TWO, Self::THREE];

    pub fn new(index: u8) -> Option<Self> {
        (1..=3).contains(&index).then_some(ShareIndex(index))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for ShareIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One participant's shadow image.
#[derive(Clone, PartialEq, Eq)]
pub struct Share {
    scheme: Scheme,
    index: ShareIndex,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Share")
            .field("scheme", &self.scheme)
            .field("index", &self.index)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("pixels", &format_args!("[{} values]", self.pixels.len()))
            .finish()
    }
}

impl Share {
    pub fn new(
        scheme: Scheme,
        index: ShareIndex,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, ImageError> {
        check_dims(width, height, pixels.len())?;
        let bit_depth = scheme.bit_depth();
        if bit_depth < 8 {
            let limit = 1u16 << bit_depth;
            if let Some((position, &value)) = pixels
                .iter()
                .enumerate()
                .find(|(_, &v)| u16::from(v) >= limit)
            {
                return Err(ImageError::PixelOutOfRange {
                    position,
                    value,
                    bit_depth,
                });
            }
        }
        Ok(Self {
            scheme,
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn index(&self) -> ShareIndex {
        self.index
    }

    pub fn bit_depth(&self) -> u8 {
        self.scheme.bit_depth()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn payload_len(&self) -> usize {
        self.scheme.payload_len(self.pixels.len() as u64) as usize
    }
}

/// The three shares produced by one split, indexed 1..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareTriple {
    pub sc1: Share,
    pub sc2: Share,
    pub sc3: Share,
}

impl ShareTriple {
    pub fn get(&self, index: ShareIndex) -> &Share {
        match index.get() {
            1 => &self.sc1,
            2 => &self.sc2,
            _ => &self.sc3,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Share> {
        [&self.sc1, &self.sc2, &self.sc3].into_iter()
    }
}

// ---------------------------------------------------------------------------
// PGM

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u32, PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::MalformedHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::MalformedHeader(what))
    }
}

/// Decodes a binary (P5) PGM with maxval at most 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    match bytes.get(..2) {
        Some(b"P5") => {}
        Some(b"P2") => return Err(PgmError::AsciiUnsupported),
        _ => return Err(PgmError::BadMagic),
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(cur.pos)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(PgmError::MalformedHeader("missing separator after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PgmError::MalformedHeader("missing separator after maxval"));
    }
    cur.pos += 1;

    let expected = u64::from(width) * u64::from(height);
    let data = &bytes[cur.pos..];
    if (data.len() as u64) < expected {
        return Err(PgmError::Truncated {
            expected,
            found: data.len(),
        });
    }
    let pixels = data[..expected as usize].to_vec();
    if let Some(&value) = pixels.iter().find(|&&v| u32::from(v) > maxval) {
        return Err(PgmError::PixelAboveMaxval { value, maxval });
    }
    Ok(GrayImage::new(width, height, pixels)?)
}

fn encode_pgm(width: u32, height: u32, maxval: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Encodes an image as binary PGM with maxval 255.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    encode_pgm(img.width, img.height, 255, &img.pixels)
}

/// PGM rendering of a share for viewing; maxval is `2^bit_depth - 1`.
pub fn share_to_pgm(share: &Share) -> Vec<u8> {
    let maxval = (1u32 << share.bit_depth()) - 1;
    encode_pgm(share.width, share.height, maxval, &share.pixels)
}

// ---------------------------------------------------------------------------
// SIS1 share container

pub fn write_share(share: &Share) -> Vec<u8> {
    let mut out = Vec::with_capacity(SHARE_HEADER_LEN + share.payload_len());
    out.extend_from_slice(SHARE_MAGIC);
    out.push(SHARE_VERSION);
    out.push(share.scheme.tag());
    out.push(share.index.get());
    out.push(share.bit_depth());
    out.extend_from_slice(&share.width.to_le_bytes());
    out.extend_from_slice(&share.height.to_le_bytes());
    match share.scheme {
        Scheme::Partition => out.extend_from_slice(&share.pixels),
        Scheme::Xor => out.extend(
            share
                .pixels
                .chunks(2)
                .map(|pair| (pair[0] << 4) | pair.get(1).copied().unwrap_or(0)),
        ),
    }
    out
}

pub fn read_share(bytes: &[u8]) -> Result<Share, ShareFormatError> {
    if bytes.len() < SHARE_HEADER_LEN {
        return Err(ShareFormatError::TruncatedHeader);
    }
    if &bytes[..4] != SHARE_MAGIC {
        return Err(ShareFormatError::BadMagic);
    }
    if bytes[4] != SHARE_VERSION {
        return Err(ShareFormatError::UnsupportedVersion(bytes[4]));
    }
    let scheme = Scheme::from_tag(bytes[5]).ok_or(ShareFormatError::UnknownScheme(bytes[5]))?;
    let index = ShareIndex::new(bytes[6]).ok_or(ShareFormatError::BadIndex(bytes[6]))?;
    if bytes[7] != scheme.bit_depth() {
        return Err(ShareFormatError::BitDepthMismatch {
            scheme,
            expected: scheme.bit_depth(),
            found: bytes[7],
        });
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension { width, height }.into());
    }
    let pixel_count = u64::from(width) * u64::from(height);
    let payload = &bytes[SHARE_HEADER_LEN..];
    let expected = scheme.payload_len(pixel_count);
    if payload.len() as u64 != expected {
        return Err(ShareFormatError::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    let pixels = match scheme {
        Scheme::Partition => payload.to_vec(),
        Scheme::Xor => {
            if pixel_count % 2 == 1 && payload.last().is_some_and(|b| b & 0x0F != 0) {
                return Err(ShareFormatError::NonZeroPadding);
            }
            let mut pixels = Vec::with_capacity(pixel_count as usize);
            for &b in payload {
                pixels.push(b >> 4);
                pixels.push(b & 0x0F);
            }
            pixels.truncate(pixel_count as usize);
            pixels
        }
    };
    Ok(Share::new(scheme, index, width, height, pixels)?)
}

/// Checks that XOR-ing `mask` into payload byte `offset` of a share with the
/// given layout yields a different, still well-formed share.
pub fn check_tamper(
    scheme: Scheme,
    pixel_count: u64,
    offset: usize,
    mask: u8,
) -> Result<(), ShareFormatError> {
    let len = scheme.payload_len(pixel_count) as usize;
    if offset >= len {
        return Err(ShareFormatError::TamperOffset { offset, len });
    }
    let touches_padding = scheme == Scheme::Xor && pixel_count % 2 == 1 && offset == len - 1;
    if mask == 0 || (touches_padding && mask & 0x0F != 0) {
        return Err(ShareFormatError::TamperMask { offset, mask });
    }
    Ok(())
}

/// Flips payload byte `offset` of the share's container by XOR with `mask`.
pub fn tamper_share(share: &Share, offset: usize, mask: u8) -> Result<Share, ShareFormatError> {
    check_tamper(share.scheme, share.pixels.len() as u64, offset, mask)?;
    let mut bytes = write_share(share);
    bytes[SHARE_HEADER_LEN + offset] ^= mask;
    read_share(&bytes)
}

// ---------------------------------------------------------------------------
// Metrics

/// Mean squared error between two equally sized images.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, ImageError> {
    a.same_dimensions(b)?;
    let sum: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = u64::from(x.abs_diff(y));
            d * d
        })
        .sum();
    Ok(sum as f64 / a.pixels.len() as f64)
}
