//! Party keys and transaction signatures (Ed25519).

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub type PublicKey = [u8; 32];
pub type Signature = [u8; 64];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub String);

impl PartyId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PartyId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: PartyId,
    #[serde(with = "hex::serde")]
    pub public_key: PublicKey,
    pub authorized: bool,
}

#[derive(Clone)]
pub struct SecretKey(SigningKey);

impl SecretKey {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(SigningKey::from_bytes(&seed))
    }

    pub fn to_seed(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn public_key(&self) -> PublicKey {
        self.0.verifying_key().to_bytes()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey(pk={})", hex::encode(self.public_key()))
    }
}

/// Fresh key pair for `party_id`, marked authorized.
pub fn keygen<R: RngCore>(party_id: impl Into<PartyId>, rng: &mut R) -> (SecretKey, Party) {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let sk = SecretKey::from_seed(seed);
    let party = Party {
        id: party_id.into(),
        public_key: sk.public_key(),
        authorized: true,
    };
    (sk, party)
}

pub fn sign(sk: &SecretKey, payload: &[u8]) -> Signature {
    sk.0.sign(payload).to_bytes()
}

pub fn verify(pk: &PublicKey, payload: &[u8], signature: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(pk) else {
        return false;
    };
    key.verify(payload, &ed25519_dalek::Signature::from_bytes(signature)).is_ok()
}
