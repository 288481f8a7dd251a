//! SHA-256 helpers for content ids and trace digests.

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `data`.
pub fn sha256_hex(data: &[u8]) -> String {
    let out = Sha256::digest(data);
    let mut s = String::with_capacity(64);
    for b in out.iter() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// First 12 hex characters of the SHA-256, for compact trace labels.
pub fn short_digest(data: &[u8]) -> String {
    sha256_hex(data)[..12].to_string()
}
