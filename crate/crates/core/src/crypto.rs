//! Additively homomorphic Paillier cryptosystem.
//!
//! Registries and class-count vectors travel between parties as Paillier
//! ciphertexts, so the server can fold uploads by ciphertext multiplication
//! without ever seeing a plaintext. Messages are non-negative integers
//! (protocol payloads are counts), the generator is fixed to `g = n + 1`,
//! and all operations are pure: keys and ciphertexts are immutable, the
//! random source is supplied per call.
//!
//! # Wire format
//!
//! Sizes are byte-exact so communication overhead can be accounted without
//! estimation. With a key of `b` bits:
//!
//! - a ciphertext value lives in `[1, n^2 - 1]` and serializes as a
//!   fixed-width big-endian string of `2 b / 8` bytes (`raw_element_size`);
//! - an encrypted vector serializes as a 14-byte header
//!   (`magic "DHEV" | version u16 | key bits u32 | element count u32`)
//!   followed by one 24-byte record header per element
//!   (`key fingerprint [u8; 16] | element index u32 | payload length u32`)
//!   and the fixed-width payload.
//!
//! `framed_vector_size(b, l) = 14 + l * (24 + 2b/8)`. The per-element key
//! fingerprint is what lets a receiver reject folds across mismatched keys.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Miller-Rabin witness rounds.
const MILLER_RABIN_ROUNDS: usize = 40;
/// Bound on candidate draws before keygen gives up.
const PRIME_SEARCH_RETRIES: usize = 10_000;
/// Wire-format magic for encrypted vectors.
const VECTOR_MAGIC: &[u8; 4] = b"DHEV";
/// Wire-format version.
const VECTOR_VERSION: u16 = 1;
/// Bytes of vector header: magic(4) + version(2) + key bits(4) + count(4).
pub const VECTOR_HEADER_BYTES: usize = 14;
/// Bytes of per-element record header: fingerprint(16) + index(4) + len(4).
pub const ELEMENT_HEADER_BYTES: usize = 24;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("key size must be an even number of bits >= 64, got {0}")]
    BadKeySize(u32),
    #[error("no suitable prime pair found after {0} candidates")]
    PrimeSearchExhausted(usize),
    #[error("message must satisfy 0 <= m < n")]
    MessageOutOfRange,
    #[error("ciphertexts belong to different keys")]
    MismatchedKeys,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ciphertext is not invertible modulo n^2 (corrupted)")]
    CorruptCiphertext,
    #[error("plaintext does not fit in u64")]
    PlaintextOverflow,
    #[error("malformed ciphertext bytes: {0}")]
    MalformedBytes(String),
    #[error("invalid test primes: {0}")]
    BadPrimes(String),
}

/// Public half of a Paillier key; `g = n + 1` is implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
    bit_length: u32,
    fingerprint: [u8; 16],
}

/// Secret half; carries its public key so decryption is self-contained.
#[derive(Debug, Clone)]
pub struct PaillierSecretKey {
    lambda: BigUint,
    mu: BigUint,
    public: PaillierPublicKey,
}

/// A Paillier ciphertext tagged with the fingerprint of the key that made it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_fingerprint: [u8; 16],
}

/// An ordered list of ciphertexts under one key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedVector {
    elements: Vec<Ciphertext>,
}

impl PaillierPublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.n_squared
    }

    /// The fixed generator `g = n + 1`.
    pub fn generator(&self) -> BigUint {
        &self.n + BigUint::one()
    }

    pub fn bit_length(&self) -> u32 {
        self.bit_length
    }

    pub fn fingerprint(&self) -> [u8; 16] {
        self.fingerprint
    }

    /// Serialized size in bytes of one ciphertext value (no framing).
    pub fn raw_element_size(&self) -> usize {
        raw_element_size(self.bit_length)
    }

    fn from_modulus(n: BigUint, bit_length: u32) -> Self {
        let n_squared = &n * &n;
        let fingerprint = fingerprint_of(&n);
        PaillierPublicKey {
            n,
            n_squared,
            bit_length,
            fingerprint,
        }
    }
}

impl PaillierSecretKey {
    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// Fixed-width big-endian bytes of the ciphertext value.
    pub fn to_bytes(&self, pk: &PaillierPublicKey) -> Result<Vec<u8>, CryptoError> {
        if self.key_fingerprint != pk.fingerprint {
            return Err(CryptoError::MismatchedKeys);
        }
        let width = pk.raw_element_size();
        let digits = self.value.to_bytes_be();
        if digits.len() > width {
            return Err(CryptoError::MalformedBytes(format!(
                "value needs {} bytes, field is {}",
                digits.len(),
                width
            )));
        }
        let mut out = vec![0u8; width];
        out[width - digits.len()..].copy_from_slice(&digits);
        Ok(out)
    }

    pub fn from_bytes(pk: &PaillierPublicKey, bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != pk.raw_element_size() {
            return Err(CryptoError::MalformedBytes(format!(
                "expected {} bytes, got {}",
                pk.raw_element_size(),
                bytes.len()
            )));
        }
        let value = BigUint::from_bytes_be(bytes);
        if value >= pk.n_squared || value.is_zero() {
            return Err(CryptoError::MalformedBytes(
                "value outside [1, n^2 - 1]".into(),
            ));
        }
        Ok(Ciphertext {
            value,
            key_fingerprint: pk.fingerprint,
        })
    }
}

fn fingerprint_of(n: &BigUint) -> [u8; 16] {
    let mut hasher = Sha256::new();
    hasher.update(b"paillier-modulus");
    hasher.update(n.to_bytes_be());
    let digest = hasher.finalize();
    let mut fp = [0u8; 16];
    fp.copy_from_slice(&digest[..16]);
    fp
}

/// Serialized size in bytes of one ciphertext value at `bit_length`-bit keys.
pub fn raw_element_size(bit_length: u32) -> usize {
    (2 * bit_length as usize).div_ceil(8)
}

/// Raw payload bytes of a `length`-element vector: values only, no framing.
pub fn raw_vector_size(bit_length: u32, length: usize) -> usize {
    length * raw_element_size(bit_length)
}

/// On-the-wire bytes of a `length`-element vector including all framing.
pub fn framed_vector_size(bit_length: u32, length: usize) -> usize {
    VECTOR_HEADER_BYTES + length * (ELEMENT_HEADER_BYTES + raw_element_size(bit_length))
}

/// Generates a fresh keypair with an exactly `bit_length`-bit modulus.
///
/// Primes get their top two bits forced so the product cannot fall short a
/// bit; candidates failing trial division or Miller-Rabin are redrawn, with
/// the total number of draws bounded.
pub fn keygen<R: Rng>(
    bit_length: u32,
    rng: &mut R,
) -> Result<(PaillierPublicKey, PaillierSecretKey), CryptoError> {
    if bit_length < 64 || bit_length % 2 != 0 {
        return Err(CryptoError::BadKeySize(bit_length));
    }
    let half = (bit_length / 2) as u64;
    let mut draws = 0usize;
    let p = generate_prime(half, rng, &mut draws)?;
    loop {
        let q = generate_prime(half, rng, &mut draws)?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != bit_length as u64 {
            continue;
        }
        let phi = (&p - BigUint::one()) * (&q - BigUint::one());
        if n.gcd(&phi) != BigUint::one() {
            continue;
        }
        return Ok(build_keypair(n, p, q, bit_length));
    }
}

/// Builds a keypair from explicit primes, bypassing the prime search.
///
/// Meant for exhaustive correctness tests with small primes; there is no
/// size floor here, so production callers must go through [`keygen`].
pub fn keypair_from_primes(
    p: u64,
    q: u64,
) -> Result<(PaillierPublicKey, PaillierSecretKey), CryptoError> {
    if p < 3 || q < 3 {
        return Err(CryptoError::BadPrimes("primes must be >= 3".into()));
    }
    if p == q {
        return Err(CryptoError::BadPrimes("primes must be distinct".into()));
    }
    let p = BigUint::from(p);
    let q = BigUint::from(q);
    if !is_probable_prime(&p, &mut deterministic_mr_rng()) {
        return Err(CryptoError::BadPrimes(format!("{p} is not prime")));
    }
    if !is_probable_prime(&q, &mut deterministic_mr_rng()) {
        return Err(CryptoError::BadPrimes(format!("{q} is not prime")));
    }
    let n = &p * &q;
    let phi = (&p - BigUint::one()) * (&q - BigUint::one());
    if n.gcd(&phi) != BigUint::one() {
        return Err(CryptoError::BadPrimes(
            "gcd(pq, (p-1)(q-1)) must be 1".into(),
        ));
    }
    let bits = n.bits() as u32;
    Ok(build_keypair(n, p, q, bits))
}

fn build_keypair(
    n: BigUint,
    p: BigUint,
    q: BigUint,
    bit_length: u32,
) -> (PaillierPublicKey, PaillierSecretKey) {
    let public = PaillierPublicKey::from_modulus(n, bit_length);
    let lambda = (&p - BigUint::one()).lcm(&(&q - BigUint::one()));
    // mu = L(g^lambda mod n^2)^-1 mod n, L(x) = (x - 1) / n.
    let g_lambda = public
        .generator()
        .modpow(&lambda, public.modulus_squared());
    let l_value = (&g_lambda - BigUint::one()) / public.modulus();
    let mu = l_value
        .modinv(public.modulus())
        .expect("lambda invertible because gcd(n, phi) = 1");
    let secret = PaillierSecretKey {
        lambda,
        mu,
        public: public.clone(),
    };
    (public, secret)
}

fn deterministic_mr_rng() -> rand_chacha::ChaCha12Rng {
    crate::seed::rng(0x4d52, &[])
}

fn generate_prime<R: Rng>(
    bits: u64,
    rng: &mut R,
    draws: &mut usize,
) -> Result<BigUint, CryptoError> {
    loop {
        if *draws >= PRIME_SEARCH_RETRIES {
            return Err(CryptoError::PrimeSearchExhausted(*draws));
        }
        *draws += 1;
        let mut candidate = rng.gen_biguint(bits);
        // Top two bits set: the product of two such primes keeps full width.
        candidate |= BigUint::one() << (bits - 1);
        if bits >= 2 {
            candidate |= BigUint::one() << (bits - 2);
        }
        candidate |= BigUint::one();
        if passes_trial_division(&candidate) && is_probable_prime_with(&candidate, rng) {
            return Ok(candidate);
        }
    }
}

const SMALL_PRIMES: [u32; 54] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257,
];

fn passes_trial_division(candidate: &BigUint) -> bool {
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if candidate == &sp {
            return true;
        }
        if (candidate % sp).is_zero() {
            return false;
        }
    }
    true
}

fn is_probable_prime(candidate: &BigUint, rng: &mut rand_chacha::ChaCha12Rng) -> bool {
    passes_trial_division(candidate) && is_probable_prime_with(candidate, rng)
}

/// Miller-Rabin with random bases.
fn is_probable_prime_with<R: Rng>(candidate: &BigUint, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if candidate < &two {
        return false;
    }
    if candidate == &two {
        return true;
    }
    if (candidate % &two).is_zero() {
        return false;
    }
    let n_minus_one = candidate - &one;
    let trailing = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd_part = &n_minus_one >> trailing;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let base = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = base.modpow(&odd_part, candidate);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..trailing {
            x = x.modpow(&two, candidate);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Encrypts `m` under `pk` with a fresh random blinding factor.
///
/// `c = (1 + m n) r^n mod n^2`, the `g = n + 1` form of `g^m r^n`.
pub fn encrypt<R: Rng>(
    pk: &PaillierPublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, CryptoError> {
    if m >= pk.modulus() {
        return Err(CryptoError::MessageOutOfRange);
    }
    let r = loop {
        let candidate = rng.gen_biguint_range(&BigUint::one(), pk.modulus());
        if candidate.gcd(pk.modulus()) == BigUint::one() {
            break candidate;
        }
    };
    let n = pk.modulus();
    let n2 = pk.modulus_squared();
    let g_m = (BigUint::one() + m * n) % n2;
    let r_n = r.modpow(n, n2);
    Ok(Ciphertext {
        value: (g_m * r_n) % n2,
        key_fingerprint: pk.fingerprint,
    })
}

/// Convenience for integer counts.
pub fn encrypt_u64<R: Rng>(
    pk: &PaillierPublicKey,
    m: u64,
    rng: &mut R,
) -> Result<Ciphertext, CryptoError> {
    encrypt(pk, &BigUint::from(m), rng)
}

/// Recovers the plaintext: `m = L(c^lambda mod n^2) mu mod n`.
pub fn decrypt(sk: &PaillierSecretKey, c: &Ciphertext) -> Result<BigUint, CryptoError> {
    let pk = sk.public();
    if c.key_fingerprint != pk.fingerprint {
        return Err(CryptoError::MismatchedKeys);
    }
    if c.value.gcd(pk.modulus_squared()) != BigUint::one() {
        return Err(CryptoError::CorruptCiphertext);
    }
    let x = c.value.modpow(&sk.lambda, pk.modulus_squared());
    let l_value = (&x - BigUint::one()) / pk.modulus();
    Ok((l_value * &sk.mu) % pk.modulus())
}

pub fn decrypt_u64(sk: &PaillierSecretKey, c: &Ciphertext) -> Result<u64, CryptoError> {
    let m = decrypt(sk, c)?;
    u64::try_from(&m).map_err(|_| CryptoError::PlaintextOverflow)
}

/// Homomorphic addition: multiply ciphertexts modulo `n^2`.
pub fn add_ciphertexts(
    pk: &PaillierPublicKey,
    a: &Ciphertext,
    b: &Ciphertext,
) -> Result<Ciphertext, CryptoError> {
    if a.key_fingerprint != pk.fingerprint || b.key_fingerprint != pk.fingerprint {
        return Err(CryptoError::MismatchedKeys);
    }
    Ok(Ciphertext {
        value: (&a.value * &b.value) % pk.modulus_squared(),
        key_fingerprint: pk.fingerprint,
    })
}

impl EncryptedVector {
    pub fn new(elements: Vec<Ciphertext>) -> Self {
        EncryptedVector { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Ciphertext] {
        &self.elements
    }

    /// Full wire encoding, header and element records included.
    pub fn to_bytes(&self, pk: &PaillierPublicKey) -> Result<Vec<u8>, CryptoError> {
        let mut out = Vec::with_capacity(framed_vector_size(pk.bit_length(), self.len()));
        out.extend_from_slice(VECTOR_MAGIC);
        out.extend_from_slice(&VECTOR_VERSION.to_be_bytes());
        out.extend_from_slice(&pk.bit_length().to_be_bytes());
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        for (index, element) in self.elements.iter().enumerate() {
            let payload = element.to_bytes(pk)?;
            out.extend_from_slice(&element.key_fingerprint);
            out.extend_from_slice(&(index as u32).to_be_bytes());
            out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
            out.extend_from_slice(&payload);
        }
        Ok(out)
    }

    pub fn from_bytes(pk: &PaillierPublicKey, bytes: &[u8]) -> Result<Self, CryptoError> {
        let bad = |msg: &str| CryptoError::MalformedBytes(msg.into());
        if bytes.len() < VECTOR_HEADER_BYTES {
            return Err(bad("truncated header"));
        }
        if &bytes[0..4] != VECTOR_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_be_bytes([bytes[4], bytes[5]]);
        if version != VECTOR_VERSION {
            return Err(bad("unsupported version"));
        }
        let bits = u32::from_be_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
        if bits != pk.bit_length() {
            return Err(CryptoError::MismatchedKeys);
        }
        let count = u32::from_be_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
        let width = pk.raw_element_size();
        if bytes.len() != framed_vector_size(bits, count) {
            return Err(bad("length does not match element count"));
        }
        let mut elements = Vec::with_capacity(count);
        let mut cursor = VECTOR_HEADER_BYTES;
        for index in 0..count {
            let fp: [u8; 16] = bytes[cursor..cursor + 16].try_into().unwrap();
            if fp != pk.fingerprint {
                return Err(CryptoError::MismatchedKeys);
            }
            cursor += 16;
            let stored_index =
                u32::from_be_bytes(bytes[cursor..cursor + 4].try_into().unwrap()) as usize;
            if stored_index != index {
                return Err(bad("element index out of order"));
            }
            cursor += 4;
            let len = u32::from_be_bytes(bytes[cursor..cursor + 4].try_into().unwrap()) as usize;
            if len != width {
                return Err(bad("unexpected payload width"));
            }
            cursor += 4;
            elements.push(Ciphertext::from_bytes(pk, &bytes[cursor..cursor + width])?);
            cursor += width;
        }
        Ok(EncryptedVector { elements })
    }
}

/// Element-wise encryption of a count vector.
pub fn encrypt_vector<R: Rng>(
    pk: &PaillierPublicKey,
    values: &[u64],
    rng: &mut R,
) -> Result<EncryptedVector, CryptoError> {
    let elements = values
        .iter()
        .map(|&v| encrypt_u64(pk, v, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncryptedVector::new(elements))
}

/// Element-wise decryption back to counts.
pub fn decrypt_vector(
    sk: &PaillierSecretKey,
    vector: &EncryptedVector,
) -> Result<Vec<u64>, CryptoError> {
    vector.elements.iter().map(|c| decrypt_u64(sk, c)).collect()
}

/// Element-wise homomorphic addition; lengths must match.
pub fn add_vectors(
    pk: &PaillierPublicKey,
    a: &EncryptedVector,
    b: &EncryptedVector,
) -> Result<EncryptedVector, CryptoError> {
    if a.len() != b.len() {
        return Err(CryptoError::LengthMismatch(a.len(), b.len()));
    }
    let elements = a
        .elements
        .iter()
        .zip(&b.elements)
        .map(|(x, y)| add_ciphertexts(pk, x, y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncryptedVector::new(elements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    /// u128 modular exponentiation, the independent oracle for small keys.
    fn modpow_u128(mut base: u128, mut exp: u128, modulus: u128) -> u128 {
        let mut acc = 1u128;
        base %= modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % modulus;
            }
            base = base * base % modulus;
            exp >>= 1;
        }
        acc
    }

    #[test]
    fn fixed_prime_key_parameters() {
        let (pk, sk) = keypair_from_primes(11, 13).unwrap();
        assert_eq!(pk.modulus(), &BigUint::from(143u32));
        assert_eq!(pk.modulus_squared(), &BigUint::from(20449u32));
        // lambda = lcm(10, 12) = 60, checked against integer arithmetic.
        assert_eq!(sk.lambda, BigUint::from(60u32));
        // mu = 60^-1 mod 143 = 31 because 60 * 31 = 1860 = 13 * 143 + 1.
        assert_eq!(sk.mu, BigUint::from(31u32));
    }

    #[test]
    fn encrypt_matches_modular_exponentiation_oracle() {
        // c = g^m * r^n mod n^2 with g = 144, m = 3, r = 2, n = 143.
        let expected = modpow_u128(144, 3, 20449) * modpow_u128(2, 143, 20449) % 20449;
        let (pk, sk) = keypair_from_primes(11, 13).unwrap();
        let n2 = pk.modulus_squared();
        let g_m = (BigUint::one() + BigUint::from(3u32) * pk.modulus()) % n2;
        let c = Ciphertext {
            value: (g_m * BigUint::from(2u32).modpow(pk.modulus(), n2)) % n2,
            key_fingerprint: pk.fingerprint(),
        };
        assert_eq!(c.value, BigUint::from(expected));
        assert_eq!(decrypt(&sk, &c).unwrap(), BigUint::from(3u32));
    }

    #[test]
    fn roundtrip_zero_and_small_values() {
        let (pk, sk) = keypair_from_primes(11, 13).unwrap();
        let mut rng = seed::rng(1, &[]);
        for m in [0u64, 1, 7, 142] {
            let c = encrypt_u64(&pk, m, &mut rng).unwrap();
            assert_eq!(decrypt_u64(&sk, &c).unwrap(), m);
        }
    }

    #[test]
    fn rejects_message_at_modulus() {
        let (pk, _) = keypair_from_primes(11, 13).unwrap();
        let mut rng = seed::rng(2, &[]);
        assert!(matches!(
            encrypt_u64(&pk, 143, &mut rng),
            Err(CryptoError::MessageOutOfRange)
        ));
    }

    #[test]
    fn same_message_different_randomness() {
        let (pk, sk) = keypair_from_primes(11, 13).unwrap();
        let mut rng = seed::rng(3, &[]);
        let a = encrypt_u64(&pk, 5, &mut rng).unwrap();
        let b = encrypt_u64(&pk, 5, &mut rng).unwrap();
        assert_ne!(a.value, b.value);
        assert_eq!(decrypt_u64(&sk, &a).unwrap(), 5);
        assert_eq!(decrypt_u64(&sk, &b).unwrap(), 5);
    }

    #[test]
    fn addition_is_homomorphic_and_associative() {
        let (pk, sk) = keypair_from_primes(11, 13).unwrap();
        let mut rng = seed::rng(4, &[]);
        let c1 = encrypt_u64(&pk, 2, &mut rng).unwrap();
        let c2 = encrypt_u64(&pk, 3, &mut rng).unwrap();
        let c3 = encrypt_u64(&pk, 40, &mut rng).unwrap();
        let sum = add_ciphertexts(&pk, &c1, &c2).unwrap();
        assert_eq!(decrypt_u64(&sk, &sum).unwrap(), 5);

        let left = add_ciphertexts(&pk, &add_ciphertexts(&pk, &c1, &c2).unwrap(), &c3).unwrap();
        let right = add_ciphertexts(&pk, &c1, &add_ciphertexts(&pk, &c2, &c3).unwrap()).unwrap();
        assert_eq!(decrypt_u64(&sk, &left).unwrap(), decrypt_u64(&sk, &right).unwrap());

        let zero = encrypt_u64(&pk, 0, &mut rng).unwrap();
        let with_zero = add_ciphertexts(&pk, &zero, &c3).unwrap();
        assert_eq!(decrypt_u64(&sk, &with_zero).unwrap(), 40);
    }

    #[test]
    fn keygen_is_deterministic_per_seed() {
        let (pk_a, _) = keygen(64, &mut seed::rng(42, &[])).unwrap();
        let (pk_b, _) = keygen(64, &mut seed::rng(42, &[])).unwrap();
        let (pk_c, _) = keygen(64, &mut seed::rng(43, &[])).unwrap();
        assert_eq!(pk_a.modulus(), pk_b.modulus());
        assert_ne!(pk_a.modulus(), pk_c.modulus());
        assert_eq!(pk_a.bit_length(), 64);
        assert_eq!(pk_a.modulus().bits(), 64);
    }

    #[test]
    fn keygen_rejects_bad_sizes() {
        let mut rng = seed::rng(5, &[]);
        assert!(matches!(keygen(32, &mut rng), Err(CryptoError::BadKeySize(32))));
        assert!(matches!(keygen(65, &mut rng), Err(CryptoError::BadKeySize(65))));
    }

    #[test]
    fn seeded_roundtrips_on_64_bit_key() {
        let mut rng = seed::rng(42, &[]);
        let (pk, sk) = keygen(64, &mut rng).unwrap();
        for i in 0..200u64 {
            let m = rng.gen_biguint_below(pk.modulus());
            let c = encrypt(&pk, &m, &mut rng).unwrap();
            assert_eq!(decrypt(&sk, &c).unwrap(), m, "roundtrip {i}");
        }
    }

    #[test]
    fn vector_roundtrip_and_sum() {
        let (pk, sk) = keypair_from_primes(11, 13).unwrap();
        let mut rng = seed::rng(6, &[]);
        let a = encrypt_vector(&pk, &[1, 0, 2, 3], &mut rng).unwrap();
        let b = encrypt_vector(&pk, &[4, 5, 0, 1], &mut rng).unwrap();
        let sum = add_vectors(&pk, &a, &b).unwrap();
        assert_eq!(decrypt_vector(&sk, &sum).unwrap(), vec![5, 5, 2, 4]);
        assert_eq!(decrypt_vector(&sk, &a).unwrap(), vec![1, 0, 2, 3]);

        let short = encrypt_vector(&pk, &[1], &mut rng).unwrap();
        assert!(matches!(
            add_vectors(&pk, &a, &short),
            Err(CryptoError::LengthMismatch(4, 1))
        ));
    }

    #[test]
    fn wire_format_sizes_are_exact() {
        // 2048-bit key: 512-byte elements; 56 elements = 28672 raw bytes.
        assert_eq!(raw_element_size(2048), 512);
        assert_eq!(raw_vector_size(2048, 56), 28672);
        assert_eq!(framed_vector_size(2048, 56), 14 + 56 * (24 + 512));

        let (pk, _) = keypair_from_primes(11, 13).unwrap();
        let mut rng = seed::rng(7, &[]);
        let v = encrypt_vector(&pk, &[9, 9, 9], &mut rng).unwrap();
        let bytes = v.to_bytes(&pk).unwrap();
        assert_eq!(bytes.len(), framed_vector_size(pk.bit_length(), 3));
        let back = EncryptedVector::from_bytes(&pk, &bytes).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn wire_format_rejects_foreign_key() {
        let (pk_a, _) = keypair_from_primes(11, 13).unwrap();
        let (pk_b, _) = keypair_from_primes(11, 17).unwrap();
        let mut rng = seed::rng(8, &[]);
        let v = encrypt_vector(&pk_a, &[1, 2], &mut rng).unwrap();
        let bytes = v.to_bytes(&pk_a).unwrap();
        assert!(matches!(
            EncryptedVector::from_bytes(&pk_b, &bytes),
            Err(CryptoError::MismatchedKeys)
        ));

        let c = encrypt_u64(&pk_a, 1, &mut rng).unwrap();
        let d = encrypt_u64(&pk_b, 1, &mut rng).unwrap();
        assert!(matches!(
            add_ciphertexts(&pk_a, &c, &d),
            Err(CryptoError::MismatchedKeys)
        ));
    }

    #[test]
    fn mismatched_secret_key_is_detected() {
        let (pk_a, _) = keypair_from_primes(11, 13).unwrap();
        let (_, sk_b) = keypair_from_primes(11, 17).unwrap();
        let mut rng = seed::rng(9, &[]);
        let c = encrypt_u64(&pk_a, 1, &mut rng).unwrap();
        assert!(matches!(decrypt(&sk_b, &c), Err(CryptoError::MismatchedKeys)));
    }

    #[test]
    fn from_primes_validates_inputs() {
        assert!(keypair_from_primes(11, 11).is_err());
        assert!(keypair_from_primes(12, 13).is_err());
        assert!(keypair_from_primes(2, 13).is_err());
    }
}
