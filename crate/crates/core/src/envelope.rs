//! Signed update envelopes: canonical payload encoding, SHA-256 content
//! digests, and HMAC-SHA-256 authentication bound to the round number.
//!
//! The payload layout is a 32-bit little-endian length followed by that many
//! IEEE-754 binary64 little-endian values. The authentication preimage is
//! `digest || round (u64 LE) || client_id (u32 LE)`, so an envelope replayed
//! in a later round fails authentication without any nonce bookkeeping.

use crate::params::{ClientId, ParamVector};
use crate::{Error, Result};
use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};

type HmacSha256 = Hmac<Sha256>;

/// Verification result; adversarial outcomes are values, not errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyOutcome {
    Ok,
    /// Payload bytes do not match the digest.
    IntegrityFail,
    /// Digest, round, and client id do not match the authentication tag.
    AuthFail,
}

/// A client's signed submission for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client_id: ClientId,
    pub round: u64,
    pub payload: Vec<u8>,
    pub eps_declared: f64,
    pub pre_clip_norm: f64,
    pub digest: [u8; 32],
    pub auth_tag: [u8; 32],
}

/// Serializes a vector into the canonical payload bytes.
pub fn encode_payload(values: &ParamVector) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(4 + 8 * values.len());
    bytes.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Parses canonical payload bytes back into a vector.
pub fn decode_payload(bytes: &[u8]) -> Result<ParamVector> {
    if bytes.len() < 4 {
        return Err(Error::MalformedPayload("shorter than the length prefix".into()));
    }
    let declared = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let body = &bytes[4..];
    if body.len() != declared * 8 {
        return Err(Error::MalformedPayload(format!(
            "length prefix {declared} does not match {} payload bytes",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParamVector::new(values)
}

fn payload_digest(payload: &[u8]) -> [u8; 32] {
    Sha256::digest(payload).into()
}

fn auth_tag(key: &[u8; 32], digest: &[u8; 32], round: u64, client_id: ClientId) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("any key length is accepted");
    mac.update(digest);
    mac.update(&round.to_le_bytes());
    mac.update(&client_id.0.to_le_bytes());
    mac.finalize().into_bytes().into()
}

/// Builds a digest-protected, authenticated envelope around an update.
pub fn seal(
    client_id: ClientId,
    round: u64,
    values: &ParamVector,
    eps_declared: f64,
    pre_clip_norm: f64,
    key: &[u8; 32],
) -> ClientUpdate {
    let payload = encode_payload(values);
    let digest = payload_digest(&payload);
    let auth_tag = auth_tag(key, &digest, round, client_id);
    ClientUpdate {
        client_id,
        round,
        payload,
        eps_declared,
        pre_clip_norm,
        digest,
        auth_tag,
    }
}

/// Checks an envelope against the client's key and the server's current
/// round: payload-digest mismatch is an integrity failure; a tag that does
/// not bind (digest, current round, client id) is an authentication failure.
pub fn verify(env: &ClientUpdate, key: &[u8; 32], current_round: u64) -> VerifyOutcome {
    let digest = payload_digest(&env.payload);
    if digest != env.digest {
        return VerifyOutcome::IntegrityFail;
    }
    let expected = auth_tag(key, &digest, current_round, env.client_id);
    if expected != env.auth_tag {
        return VerifyOutcome::AuthFail;
    }
    VerifyOutcome::Ok
}
