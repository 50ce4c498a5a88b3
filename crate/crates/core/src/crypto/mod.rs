//! Cryptographic primitives for the identity protocol: ECDSA keypairs over
//! secp256k1, the two domain-separated protocol hashes, XOR folding of public
//! keys, deterministic index derivation, and hybrid wrapping of cluster keys.
//!
//! Everything here is deterministic given a seeded RNG. A `Null` suite with
//! the same shapes (33-byte keys, 64-byte signatures, 32-byte digests) is
//! available for large-scale delay runs where real EC math would dominate
//! the wall clock; it offers no security and is clearly labelled as such.

use k256::ecdsa::signature::hazmat::{PrehashSigner, PrehashVerifier};
use k256::ecdsa::{Signature as EcdsaSignature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Digest length of both protocol hashes, in bytes.
pub const DIGEST_LEN: usize = 32;
/// Compressed SEC1 point length; the minimum (and default) public key length.
pub const COMPRESSED_POINT_LEN: usize = 33;
/// Symmetric cluster key length (AES-128).
pub const CLUSTER_KEY_LEN: usize = 16;
/// Fixed-size signature encoding (r ‖ s).
pub const SIGNATURE_LEN: usize = 64;

/// secp256k1 group order, hex.
const SECP256K1_ORDER_HEX: &str =
    "fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141";

pub type Digest32 = [u8; DIGEST_LEN];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("empty key set")]
    EmptyKeySet,
    #[error("public key length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no eligible UAV (count is zero)")]
    NoEligibleUav,
    #[error("cluster key unwrap failed")]
    UnwrapFailure,
    #[error("malformed public key")]
    BadPublicKey,
}

/// Serialized public key. Always exactly `pk_len` bytes for the suite that
/// produced it; the first 33 bytes are the compressed point, the rest is
/// zero padding (used by the key-length energy sweep).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_bytes")] pub Vec<u8>);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Short hex prefix for logs and CSV identifiers.
    pub fn short_hex(&self) -> String {
        self.0[..6.min(self.0.len())]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", self.short_hex())
    }
}

/// Secret scalar (real suite) or opaque seed (null suite). Never serialized.
#[derive(Clone)]
pub struct SecretKey(pub(crate) [u8; 32]);

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SecretKey(..)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "hex_bytes")] pub Vec<u8>);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({} bytes)", self.0.len())
    }
}

/// Symmetric cluster key with its epoch. Epochs increase strictly on every
/// key update within a cluster.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ClusterKey {
    pub key_bytes: [u8; CLUSTER_KEY_LEN],
    pub epoch: u64,
}

/// Published system parameters. The base-station secret key never appears
/// here; it lives only in the simulation's base-station actor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemParams {
    pub curve_id: String,
    pub group_order_hex: String,
    pub generator_tag: String,
    pub bs_public_key: PublicKey,
    pub h1_id: String,
    pub h2_id: String,
}

impl SystemParams {
    pub fn new(suite: &CryptoSuite, bs_public_key: PublicKey) -> Self {
        SystemParams {
            curve_id: match suite.mode {
                CryptoMode::Real => "secp256k1".to_string(),
                CryptoMode::Null => "null".to_string(),
            },
            group_order_hex: SECP256K1_ORDER_HEX.to_string(),
            generator_tag: "G".to_string(),
            bs_public_key,
            h1_id: "sha256/0x01".to_string(),
            h2_id: "sha256/0x02".to_string(),
        }
    }
}

/// Head-selection hash: SHA-256 with domain prefix `0x01`.
pub fn h1(input: &[u8]) -> Digest32 {
    let mut h = Sha256::new();
    h.update([0x01]);
    h.update(input);
    h.finalize().into()
}

/// Packet/transmission hash: SHA-256 with domain prefix `0x02`.
pub fn h2(input: &[u8]) -> Digest32 {
    let mut h = Sha256::new();
    h.update([0x02]);
    h.update(input);
    h.finalize().into()
}

/// `h1` over a list of byte slices.
pub fn h1_concat(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    h.update([0x01]);
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Convenience: `h2` over a list of byte slices.
pub fn h2_concat(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    h.update([0x02]);
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Byte-wise XOR of equal-length serialized public keys. Order-independent.
pub fn xor_fold(keys: &[PublicKey]) -> Result<Vec<u8>, CryptoError> {
    let first = keys.first().ok_or(CryptoError::EmptyKeySet)?;
    let len = first.len();
    let mut acc = vec![0u8; len];
    for key in keys {
        if key.len() != len {
            return Err(CryptoError::LengthMismatch {
                expected: len,
                got: key.len(),
            });
        }
        for (a, b) in acc.iter_mut().zip(key.as_bytes()) {
            *a ^= b;
        }
    }
    Ok(acc)
}

/// Interpret `digest` as a big-endian integer and reduce it modulo
/// `eligible_count`. Used to turn a hash into a sequence number over the
/// sorted eligible list; identical on every node holding the same inputs.
pub fn derive_index(digest: &[u8], eligible_count: usize) -> Result<usize, CryptoError> {
    if eligible_count == 0 {
        return Err(CryptoError::NoEligibleUav);
    }
    let m = eligible_count as u128;
    let mut acc: u128 = 0;
    for &b in digest {
        acc = ((acc << 8) | b as u128) % m;
    }
    Ok(acc as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CryptoMode {
    /// secp256k1 ECDSA + ECIES-style key wrapping.
    Real,
    /// Hash-based stand-in with identical shapes and determinism but no
    /// security. For large synthetic-chain delay runs only.
    Null,
}

/// A configured crypto suite: mode plus the serialized public-key length
/// (33 by default; larger values zero-pad, for the key-length sweep).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryptoSuite {
    pub mode: CryptoMode,
    pub pk_len: usize,
}

impl CryptoSuite {
    pub fn real() -> Self {
        CryptoSuite {
            mode: CryptoMode::Real,
            pk_len: COMPRESSED_POINT_LEN,
        }
    }

    pub fn null() -> Self {
        CryptoSuite {
            mode: CryptoMode::Null,
            pk_len: COMPRESSED_POINT_LEN,
        }
    }

    pub fn with_pk_len(mut self, pk_len: usize) -> Self {
        assert!(pk_len >= COMPRESSED_POINT_LEN, "pk_len below point size");
        self.pk_len = pk_len;
        self
    }

    fn pad(&self, point: &[u8]) -> PublicKey {
        let mut out = vec![0u8; self.pk_len];
        out[..point.len()].copy_from_slice(point);
        PublicKey(out)
    }

    /// Deterministic keypair generation from the scenario RNG.
    pub fn generate_keypair<R: RngCore + CryptoRng>(&self, rng: &mut R) -> KeyPair {
        match self.mode {
            CryptoMode::Real => {
                let sk = SigningKey::random(rng);
                let vk = VerifyingKey::from(&sk);
                let point = vk.to_encoded_point(true);
                KeyPair {
                    public: self.pad(point.as_bytes()),
                    secret: SecretKey(sk.to_bytes().into()),
                }
            }
            CryptoMode::Null => {
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                let mut point = [0u8; COMPRESSED_POINT_LEN];
                point[0] = 0x02;
                point[1..].copy_from_slice(&null_point(&seed));
                KeyPair {
                    public: self.pad(&point),
                    secret: SecretKey(seed),
                }
            }
        }
    }

    /// Signature over `message`. Real mode is RFC 6979 deterministic ECDSA
    /// on SHA-256(message); both modes emit exactly 64 bytes.
    pub fn sign(&self, secret: &SecretKey, message: &[u8]) -> Signature {
        match self.mode {
            CryptoMode::Real => {
                let sk = SigningKey::from_bytes((&secret.0).into())
                    .expect("secret key was produced by generate_keypair");
                let digest: Digest32 = Sha256::digest(message).into();
                let sig: EcdsaSignature = sk.sign_prehash(&digest).expect("prehash sign");
                Signature(sig.to_bytes().to_vec())
            }
            CryptoMode::Null => {
                let public = self.public_of(secret);
                Signature(null_sig(public.as_bytes(), message))
            }
        }
    }

    /// Verification is total: malformed inputs yield `false`, never a panic.
    pub fn verify(&self, public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        if public.len() != self.pk_len || sig.as_bytes().len() != SIGNATURE_LEN {
            return false;
        }
        match self.mode {
            CryptoMode::Real => {
                let Ok(vk) = VerifyingKey::from_sec1_bytes(&public.as_bytes()[..COMPRESSED_POINT_LEN])
                else {
                    return false;
                };
                let Ok(parsed) = EcdsaSignature::from_slice(sig.as_bytes()) else {
                    return false;
                };
                let digest: Digest32 = Sha256::digest(message).into();
                vk.verify_prehash(&digest, &parsed).is_ok()
            }
            CryptoMode::Null => sig.0 == null_sig(public.as_bytes(), message),
        }
    }

    /// Recompute the public key that belongs to `secret`.
    pub fn public_of(&self, secret: &SecretKey) -> PublicKey {
        match self.mode {
            CryptoMode::Real => {
                let sk = SigningKey::from_bytes((&secret.0).into())
                    .expect("secret key was produced by generate_keypair");
                let point = VerifyingKey::from(&sk).to_encoded_point(true);
                self.pad(point.as_bytes())
            }
            CryptoMode::Null => {
                let mut point = [0u8; COMPRESSED_POINT_LEN];
                point[0] = 0x02;
                point[1..].copy_from_slice(&null_point(&secret.0));
                self.pad(&point)
            }
        }
    }

    /// Hybrid (ephemeral-key) encryption of a cluster key to one member.
    /// Two wraps of the same key use fresh ephemerals and differ blob-wise;
    /// both unwrap to the same key.
    pub fn wrap_cluster_key<R: RngCore + CryptoRng>(
        &self,
        ck: &ClusterKey,
        member: &PublicKey,
        rng: &mut R,
    ) -> Result<Vec<u8>, CryptoError> {
        let mut plain = [0u8; 24];
        plain[..16].copy_from_slice(&ck.key_bytes);
        plain[16..].copy_from_slice(&ck.epoch.to_be_bytes());
        match self.mode {
            CryptoMode::Real => {
                let eph = SigningKey::random(rng);
                let eph_pub = VerifyingKey::from(&eph).to_encoded_point(true);
                let eph_padded = self.pad(eph_pub.as_bytes());
                let vk =
                    VerifyingKey::from_sec1_bytes(&member.as_bytes()[..COMPRESSED_POINT_LEN])
                        .map_err(|_| CryptoError::BadPublicKey)?;
                let shared = k256::ecdh::diffie_hellman(
                    eph.as_nonzero_scalar(),
                    k256::PublicKey::from(&vk).as_affine(),
                );
                let kdf = wrap_kdf(shared.raw_secret_bytes(), eph_padded.as_bytes(), member.as_bytes());
                Ok(seal(&kdf, eph_padded.as_bytes(), &plain))
            }
            CryptoMode::Null => {
                let mut eph = [0u8; COMPRESSED_POINT_LEN];
                eph[0] = 0x02;
                rng.fill_bytes(&mut eph[1..]);
                let eph_padded = self.pad(&eph);
                // "Shared secret" anyone can compute; shapes only.
                let kdf = wrap_kdf(
                    &member.as_bytes()[..COMPRESSED_POINT_LEN],
                    eph_padded.as_bytes(),
                    member.as_bytes(),
                );
                Ok(seal(&kdf, eph_padded.as_bytes(), &plain))
            }
        }
    }

    /// Inverse of [`CryptoSuite::wrap_cluster_key`]. Fails with
    /// `UnwrapFailure` when the secret does not match the wrapped-to key or
    /// the blob was tampered with.
    pub fn unwrap_cluster_key(
        &self,
        blob: &[u8],
        secret: &SecretKey,
    ) -> Result<ClusterKey, CryptoError> {
        if blob.len() != self.pk_len + 24 + 16 {
            return Err(CryptoError::UnwrapFailure);
        }
        let (eph, rest) = blob.split_at(self.pk_len);
        let member = self.public_of(secret);
        let kdf = match self.mode {
            CryptoMode::Real => {
                let eph_vk = VerifyingKey::from_sec1_bytes(&eph[..COMPRESSED_POINT_LEN])
                    .map_err(|_| CryptoError::UnwrapFailure)?;
                let scalar = SigningKey::from_bytes((&secret.0).into())
                    .map_err(|_| CryptoError::UnwrapFailure)?;
                let shared = k256::ecdh::diffie_hellman(
                    scalar.as_nonzero_scalar(),
                    k256::PublicKey::from(&eph_vk).as_affine(),
                );
                wrap_kdf(shared.raw_secret_bytes(), eph, member.as_bytes())
            }
            CryptoMode::Null => {
                wrap_kdf(&member.as_bytes()[..COMPRESSED_POINT_LEN], eph, member.as_bytes())
            }
        };
        let plain = open(&kdf, eph, rest).ok_or(CryptoError::UnwrapFailure)?;
        let mut key_bytes = [0u8; 16];
        key_bytes.copy_from_slice(&plain[..16]);
        let epoch = u64::from_be_bytes(plain[16..].try_into().unwrap());
        Ok(ClusterKey { key_bytes, epoch })
    }
}

fn null_point(seed: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"null-point");
    h.update(seed);
    h.finalize().into()
}

fn null_sig(public: &[u8], message: &[u8]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"null-sig");
    h.update(public);
    h.update(message);
    let a: Digest32 = h.finalize().into();
    let b: Digest32 = Sha256::digest(a).into();
    let mut out = Vec::with_capacity(SIGNATURE_LEN);
    out.extend_from_slice(&a);
    out.extend_from_slice(&b);
    out
}

fn wrap_kdf(shared: &[u8], eph: &[u8], member: &[u8]) -> [u8; 40] {
    let mut h = Sha256::new();
    h.update(b"wrap-k");
    h.update(shared);
    h.update(eph);
    h.update(member);
    let k1: Digest32 = h.finalize().into();
    let k2: Digest32 = Sha256::digest(k1).into();
    let mut out = [0u8; 40];
    out[..32].copy_from_slice(&k1);
    out[32..].copy_from_slice(&k2[..8]);
    out
}

fn seal(kdf: &[u8; 40], eph: &[u8], plain: &[u8; 24]) -> Vec<u8> {
    let mut ct = *plain;
    for (c, k) in ct.iter_mut().zip(kdf.iter()) {
        *c ^= k;
    }
    let mut h = Sha256::new();
    h.update(b"wrap-tag");
    h.update(kdf);
    h.update(eph);
    h.update(ct);
    let tag: Digest32 = h.finalize().into();
    let mut blob = Vec::with_capacity(eph.len() + 24 + 16);
    blob.extend_from_slice(eph);
    blob.extend_from_slice(&ct);
    blob.extend_from_slice(&tag[..16]);
    blob
}

fn open(kdf: &[u8; 40], eph: &[u8], rest: &[u8]) -> Option<[u8; 24]> {
    let (ct, tag) = rest.split_at(24);
    let mut h = Sha256::new();
    h.update(b"wrap-tag");
    h.update(kdf);
    h.update(eph);
    h.update(ct);
    let expect: Digest32 = h.finalize().into();
    if &expect[..16] != tag {
        return None;
    }
    let mut plain = [0u8; 24];
    plain.copy_from_slice(ct);
    for (p, k) in plain.iter_mut().zip(kdf.iter()) {
        *p ^= k;
    }
    Some(plain)
}

/// AES-128-CTR keystream application; nonce is 16 bytes. Used for task-result
/// ciphertexts under the cluster key.
pub fn aes_ctr_apply(key: &[u8; 16], nonce: &[u8; 16], data: &mut [u8]) {
    use aes::Aes128;
    use ctr::cipher::{KeyIvInit, StreamCipher};
    type Aes128Ctr = ctr::Ctr64BE<Aes128>;
    let mut cipher = Aes128Ctr::new(key.into(), nonce.into());
    cipher.apply_keystream(data);
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        let s: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        ser.serialize_str(&s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        if s.len() % 2 != 0 {
            return Err(serde::de::Error::custom("odd hex length"));
        }
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(serde::de::Error::custom))
            .collect()
    }
}
