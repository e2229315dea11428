//! Canonical byte encoding used for every hashed or signed value.
//!
//! Integers are fixed-width big-endian, strings are UTF-8 prefixed with a
//! `u32` big-endian byte length, and lists are prefixed with a `u32`
//! big-endian element count. Two encoders that follow these rules produce
//! identical bytes, which is what makes golden vectors portable.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha512};

use crate::error::EncodeError;

/// Maximum byte length of any identifier that enters the canonical encoding.
pub const MAX_ID_BYTES: usize = 64;

/// A SHA-512 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hash512(pub [u8; 64]);

impl Hash512 {
    pub const ZERO: Hash512 = Hash512([0u8; 64]);

    pub fn of(bytes: &[u8]) -> Self {
        let mut out = [0u8; 64];
        out.copy_from_slice(&Sha512::digest(bytes));
        Hash512(out)
    }

    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Number of leading zero bits, most significant bit of byte 0 first.
    pub fn leading_zero_bits(&self) -> u32 {
        let mut bits = 0;
        for byte in self.0 {
            if byte == 0 {
                bits += 8;
            } else {
                bits += byte.leading_zeros();
                break;
            }
        }
        bits
    }
}

impl fmt::Debug for Hash512 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash512({}..)", &self.to_hex()[..16])
    }
}

impl fmt::Display for Hash512 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A 64-byte Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignatureBytes(pub [u8; 64]);

impl SignatureBytes {
    pub const ZERO: SignatureBytes = SignatureBytes([0u8; 64]);
}

impl fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sig({}..)", hex::encode(&self.0[..8]))
    }
}

/// A 32-byte Ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKeyBytes(pub [u8; 32]);

impl fmt::Debug for PublicKeyBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pk({})", hex::encode(self.0))
    }
}

macro_rules! hex_serde {
    ($ty:ident, $len:expr) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                let mut out = [0u8; $len];
                hex::decode_to_slice(&text, &mut out).map_err(|e| {
                    serde::de::Error::custom(format!(
                        "expected {} hex-encoded bytes: {e}",
                        $len
                    ))
                })?;
                Ok($ty(out))
            }
        }
    };
}

hex_serde!(Hash512, 64);
hex_serde!(SignatureBytes, 64);
hex_serde!(PublicKeyBytes, 32);

/// Append-only canonical encoder.
#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(mut self, tag: &[u8]) -> Self {
        self.buf.extend_from_slice(tag);
        self
    }

    pub fn u32(mut self, v: u32) -> Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(mut self, bytes: &[u8]) -> Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Length-prefixed identifier; rejects ids longer than [`MAX_ID_BYTES`].
    pub fn id(self, id: &str) -> Result<Self, EncodeError> {
        if id.len() > MAX_ID_BYTES {
            return Err(EncodeError::IdTooLong {
                id: id.to_owned(),
                len: id.len(),
            });
        }
        Ok(self.str(id))
    }

    /// Length-prefixed string without the identifier length limit.
    pub fn str(self, s: &str) -> Self {
        self.u32(s.len() as u32).raw(s.as_bytes())
    }

    pub fn count(self, n: usize) -> Self {
        self.u32(n as u32)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}
