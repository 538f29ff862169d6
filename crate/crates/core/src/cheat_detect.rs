//! Cheater identification with a published radix-`p` commitment.
//!
//! The dealer hashes each share into `[0, p)` and publishes
//!
//! ```text
//! T = Σ_{i=1..n} h(SC_i)·p^(2(i-1)) + Σ_{i=1..n-1} c·p^(2i-1)
//! ```
//!
//! together with `p`. Even radix-`p` digits of `T` hold the share hashes and
//! odd digits hold the constant `c ≥ 1`. A verifier holding claimed shares
//! `SC'_j` for `j ∈ G` computes `T' = Σ_{j∈G} h(SC'_j)·p^(2(j-1))` and reads
//! digit `2(j-1)` of `T - T'` with floor division. A genuine share leaves a
//! zero digit. The odd `c` digits absorb borrows from negative lower digits,
//! so the verdict for `j` does not depend on what any other participant
//! presents.
//!
//! `c` never leaves the dealer; verification needs only `T` and `p`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image_io::{write_share, Scheme, Share};

/// The Mersenne prime 2^61 - 1.
pub const DEFAULT_PRIME: u64 = (1 << 61) - 1;

/// SHA-256 of the `SIS1` container bytes, read big-endian, reduced mod `p`.
pub const HASH_ID: &str = "sha256-mod-p";

pub const PARTICIPANTS: u8 = 3;

const PARAMS_MAGIC: &str = "sisct-params v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheatError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("constant c = {c} outside [1, {p})")]
    ConstantOutOfRange { c: u64, p: u64 },
    #[error("expected exactly {PARTICIPANTS} shares with indices 1..=3, got {0}")]
    ShareSet(String),
    #[error("digit position must be at least 1")]
    DigitIndex,
    #[error("no shares presented for verification")]
    EmptyClaims,
    #[error("participant {0} presented more than once")]
    DuplicateClaim(u8),
    #[error("participant index {index} outside 1..={n}")]
    ClaimOutOfRange { index: u8, n: u8 },
    #[error("unsupported hash construction `{0}`")]
    UnsupportedHash(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("params line {line}: expected `{expected}`")]
    Syntax { line: usize, expected: &'static str },
    #[error("params field `{0}` is not a canonical decimal")]
    Number(&'static str),
    #[error("params declare unknown scheme `{0}`")]
    Scheme(String),
    #[error("params declare n = {0}, only 3 participants are supported")]
    Participants(u64),
    #[error("T does not fit the radix-p layout for n participants")]
    CommitmentRange,
    #[error(transparent)]
    Cheat(#[from] CheatError),
}

/// Deterministic Miller-Rabin; the base set is exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mul = |a: u64, b: u64| ((u128::from(a) * u128::from(b)) % u128::from(n)) as u64;
    let pow = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for &a in &BASES {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// A verified prime modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prime(u64);

impl Prime {
    pub fn new(p: u64) -> Result<Self, CheatError> {
        if is_prime(p) {
            Ok(Prime(p))
        } else {
            Err(CheatError::NotPrime(p))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl Default for Prime {
    fn default() -> Self {
        Prime(DEFAULT_PRIME)
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Hash of a share's canonical container bytes, in `[0, p)`.
pub fn share_hash(share: &Share, p: Prime) -> u64 {
    let digest = Sha256::digest(write_share(share));
    let value = BigUint::from_bytes_be(&digest) % p.0;
    value.to_u64().expect("reduced below a u64 modulus")
}

/// Digit spacing of a commitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadixLayout {
    /// `T = Σ a_i p^(i-1)`; digit `j` sits at power `j-1`.
    Plain,
    /// `T = Σ a_i p^(2(i-1)) + Σ c p^(2i-1)`; digit `j` sits at power `2(j-1)`.
    Spaced,
}

/// `⌊T / p^e⌋ mod p` with floor semantics for negative `T`, where `e` is
/// the power holding digit `j` under `layout`.
pub fn radix_digit(t: &BigInt, p: u64, j: usize, layout: RadixLayout) -> Result<u64, CheatError> {
    if j == 0 {
        return Err(CheatError::DigitIndex);
    }
    let exp = match layout {
        RadixLayout::Plain => j - 1,
        RadixLayout::Spaced => 2 * (j - 1),
    };
    let modulus = BigInt::from(p);
    let scale = num_traits::pow(modulus.clone(), exp);
    let digit = t.div_floor(&scale).mod_floor(&modulus);
    Ok(digit.to_u64().expect("residue below p"))
}

/// Builds the spaced commitment from per-participant digits and constant `c`.
/// Digits may be negative as long as they lie in `(-p, p)`.
pub fn commit_digits(digits: &[BigInt], c: u64, p: u64) -> BigInt {
    let base = BigInt::from(p);
    let c = BigInt::from(c);
    let mut t = BigInt::zero();
    let mut scale = BigInt::one();
    for (i, a) in digits.iter().enumerate() {
        t += a * &scale;
        scale *= &base;
        if i + 1 < digits.len() {
            t += &c * &scale;
        }
        scale *= &base;
    }
    t
}

/// Dealer's commitment over non-negative hash values.
pub fn commit(hashes: &[u64], c: u64, p: Prime) -> BigUint {
    let digits: Vec<BigInt> = hashes.iter().map(|&h| BigInt::from(h)).collect();
    commit_digits(&digits, c, p.0)
        .to_biguint()
        .expect("non-negative digits give a non-negative commitment")
}

/// The dealer's published verification data for one share triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub scheme: Scheme,
    pub p: Prime,
    pub t: BigUint,
    pub n: u8,
    pub hash_id: String,
}

impl PublicParams {
    /// Line-oriented text form; [`PublicParams::from_text`] accepts exactly
    /// what this produces.
    pub fn to_text(&self) -> String {
        format!(
            "{PARAMS_MAGIC}\nscheme={}\np={}\nT={}\nn={}\nhash={}\n",
            self.scheme, self.p, self.t, self.n, self.hash_id
        )
    }

    pub fn from_text(text: &str) -> Result<Self, ParamsError> {
        let body = text.strip_suffix('\n').ok_or(ParamsError::Syntax {
            line: text.lines().count().max(1),
            expected: "trailing newline",
        })?;
        let lines: Vec<&str> = body.split('\n').collect();
        const KEYS: [&str; 5] = ["scheme=", "p=", "T=", "n=", "hash="];
        if lines.len() != 1 + KEYS.len() {
            return Err(ParamsError::Syntax {
                line: lines.len().min(KEYS.len() + 1),
                expected: "six lines: header, scheme, p, T, n, hash",
            });
        }
        if lines[0] != PARAMS_MAGIC {
            return Err(ParamsError::Syntax {
                line: 1,
                expected: PARAMS_MAGIC,
            });
        }
        let mut values = [""; 5];
        for (i, key) in KEYS.iter().enumerate() {
            values[i] = lines[i + 1].strip_prefix(key).ok_or(ParamsError::Syntax {
                line: i + 2,
                expected: key,
            })?;
        }
        let [scheme, p, t, n, hash] = values;

        let scheme: Scheme = scheme
            .parse()
            .map_err(|_| ParamsError::Scheme(scheme.to_owned()))?;
        let p: u64 = parse_canonical(p, "p")?;
        let t: BigUint = parse_canonical(t, "T")?;
        let n: u64 = parse_canonical(n, "n")?;
        if n != u64::from(PARTICIPANTS) {
            return Err(ParamsError::Participants(n));
        }
        if hash != HASH_ID {
            return Err(CheatError::UnsupportedHash(hash.to_owned()).into());
        }
        let p = Prime::new(p)?;
        if t >= num_traits::pow(BigUint::from(p.0), 2 * PARTICIPANTS as usize - 1) {
            return Err(ParamsError::CommitmentRange);
        }
        Ok(PublicParams {
            scheme,
            p,
            t,
            n: PARTICIPANTS,
            hash_id: hash.to_owned(),
        })
    }
}

fn parse_canonical<T: std::str::FromStr>(s: &str, field: &'static str) -> Result<T, ParamsError> {
    let canonical =
        !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'));
    if !canonical {
        return Err(ParamsError::Number(field));
    }
    s.parse().map_err(|_| ParamsError::Number(field))
}

fn check_triple(shares: &[Share]) -> Result<Scheme, CheatError> {
    let indices: Vec<u8> = shares.iter().map(|s| s.index().get()).collect();
    if indices != [1, 2, 3] {
        return Err(CheatError::ShareSet(format!("indices {indices:?}")));
    }
    let scheme = shares[0].scheme();
    if shares.iter().any(|s| s.scheme() != scheme) {
        return Err(CheatError::ShareSet("mixed schemes".into()));
    }
    Ok(scheme)
}

/// Commits to `shares` (indices 1, 2, 3 in order) with a fixed constant `c`.
pub fn make_params_with_constant(
    shares: &[Share],
    p: Prime,
    c: u64,
) -> Result<PublicParams, CheatError> {
    if c == 0 || c >= p.0 {
        return Err(CheatError::ConstantOutOfRange { c, p: p.0 });
    }
    let scheme = check_triple(shares)?;
    let hashes: Vec<u64> = shares.iter().map(|s| share_hash(s, p)).collect();
    Ok(PublicParams {
        scheme,
        p,
        t: commit(&hashes, c, p),
        n: PARTICIPANTS,
        hash_id: HASH_ID.to_owned(),
    })
}

/// Commits to `shares` with `c` drawn uniformly from `[1, p)`.
pub fn make_params<R: Rng + ?Sized>(
    shares: &[Share],
    p: Prime,
    rng: &mut R,
) -> Result<PublicParams, CheatError> {
    let c = rng.gen_range(1..p.0);
    make_params_with_constant(shares, p, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Honest,
    Cheater,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimVerdict {
    pub index: u8,
    pub verdict: Verdict,
    /// Digit of `T - T'` at this participant's position; zero iff honest.
    pub residual: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    /// One entry per claimant, ascending by index.
    pub entries: Vec<ClaimVerdict>,
}

impl VerificationReport {
    pub fn all_honest(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Honest)
    }

    pub fn cheaters(&self) -> Vec<u8> {
        self.entries
            .iter()
            .filter(|e| e.verdict == Verdict::Cheater)
            .map(|e| e.index)
            .collect()
    }

    pub fn verdict(&self, index: u8) -> Option<Verdict> {
        self.entries
            .iter()
            .find(|e| e.index == index)
            .map(|e| e.verdict)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let v = match e.verdict {
                Verdict::Honest => "honest",
                Verdict::Cheater => "cheater",
            };
            writeln!(f, "{} {v} residual={}", e.index, e.residual)?;
        }
        Ok(())
    }
}

/// Core check over already-hashed claims `(participant index, h(SC'_j))`.
pub fn verify_hashes(
    params: &PublicParams,
    claims: &[(u8, u64)],
) -> Result<VerificationReport, CheatError> {
    if params.hash_id != HASH_ID {
        return Err(CheatError::UnsupportedHash(params.hash_id.clone()));
    }
    if claims.is_empty() {
        return Err(CheatError::EmptyClaims);
    }
    let mut sorted: Vec<(u8, u64)> = claims.to_vec();
    sorted.sort_by_key(|&(j, _)| j);
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(CheatError::DuplicateClaim(w[0].0));
        }
    }
    if let Some(&(index, _)) = sorted.iter().find(|(j, _)| *j == 0 || *j > params.n) {
        return Err(CheatError::ClaimOutOfRange { index, n: params.n });
    }

    let p = params.p.get();
    let base = BigInt::from(p);
    let t_prime: BigInt = sorted
        .iter()
        .map(|&(j, h)| BigInt::from(h) * num_traits::pow(base.clone(), 2 * (usize::from(j) - 1)))
        .sum();
    let diff = BigInt::from(params.t.clone()) - t_prime;

    let entries = sorted
        .iter()
        .map(|&(j, _)| {
            let residual = radix_digit(&diff, p, usize::from(j), RadixLayout::Spaced)
                .expect("claim indices are at least 1");
            ClaimVerdict {
                index: j,
                verdict: if residual == 0 {
                    Verdict::Honest
                } else {
                    Verdict::Cheater
                },
                residual,
            }
        })
        .collect();
    Ok(VerificationReport { entries })
}

/// Checks each presented share against the published commitment.
pub fn verify(
    params: &PublicParams,
    claims: &[(u8, &Share)],
) -> Result<VerificationReport, CheatError> {
    let hashed: Vec<(u8, u64)> = claims
        .iter()
        .map(|&(j, s)| (j, share_hash(s, params.p)))
        .collect();
    verify_hashes(params, &hashed)
}

/// Convenience wrapper presenting shares under their own indices.
pub fn verify_shares(
    params: &PublicParams,
    shares: &[&Share],
) -> Result<VerificationReport, CheatError> {
    let claims: Vec<(u8, &Share)> = shares.iter().map(|s| (s.index().get(), *s)).collect();
    verify(params, &claims)
}
