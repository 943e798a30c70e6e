//! Bitstring revocation lists.
//!
//! Bit `i` (byte `i / 8`, most significant bit first) is set iff the
//! credential with `revocationListIndex` `i` is revoked. The issuer publishes
//! the whole list as a signed JWT so verifiers check status locally.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::jose::{jws_sign, JoseError, Jws, KeyPair, PublicKeyJwk};

pub const DEFAULT_LIST_BITS: usize = 131_072;
pub const LIST_CREDENTIAL_TYP: &str = "revocation-list+jwt";

#[derive(Debug, thiserror::Error)]
pub enum RevocationError {
    #[error("list length {0} must be positive and a multiple of 8")]
    InvalidLength(usize),
    #[error("index {index} out of range for list of {len} bits")]
    IndexOutOfRange { index: u64, len: usize },
    #[error("list credential signature does not verify")]
    BadSignature,
    #[error("malformed list credential: {0}")]
    MalformedList(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevocationList {
    bits: Vec<u8>,
    version: u64,
}

impl RevocationList {
    pub fn new(length_bits: usize) -> Result<Self, RevocationError> {
        if length_bits == 0 || !length_bits.is_multiple_of(8) {
            return Err(RevocationError::InvalidLength(length_bits));
        }
        Ok(RevocationList {
            bits: vec![0; length_bits / 8],
            version: 0,
        })
    }

    pub fn from_bytes(bits: Vec<u8>, version: u64) -> Result<Self, RevocationError> {
        if bits.is_empty() {
            return Err(RevocationError::InvalidLength(0));
        }
        Ok(RevocationList { bits, version })
    }

    pub fn len_bits(&self) -> usize {
        self.bits.len() * 8
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    fn locate(&self, index: u64) -> Result<(usize, u8), RevocationError> {
        match usize::try_from(index) {
            Ok(i) if i < self.len_bits() => Ok((i / 8, 0x80 >> (i % 8))),
            _ => Err(RevocationError::IndexOutOfRange {
                index,
                len: self.len_bits(),
            }),
        }
    }

    /// Sets bit `index`. Idempotent on the bits; the version always advances.
    pub fn revoke(&mut self, index: u64) -> Result<(), RevocationError> {
        let (byte, mask) = self.locate(index)?;
        self.bits[byte] |= mask;
        self.version += 1;
        Ok(())
    }

    /// Clears bit `index` (administrative reinstatement).
    pub fn unrevoke(&mut self, index: u64) -> Result<(), RevocationError> {
        let (byte, mask) = self.locate(index)?;
        self.bits[byte] &= !mask;
        self.version += 1;
        Ok(())
    }

    pub fn is_revoked(&self, index: u64) -> Result<bool, RevocationError> {
        let (byte, mask) = self.locate(index)?;
        Ok(self.bits[byte] & mask != 0)
    }

    pub fn encoded(&self) -> String {
        URL_SAFE_NO_PAD.encode(&self.bits)
    }
}

/// Payload of the signed list credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationListCredential {
    pub iss: String,
    pub iat: u64,
    pub version: u64,
    #[serde(rename = "encodedList")]
    pub encoded_list: String,
}

impl RevocationListCredential {
    pub fn list(&self) -> Result<RevocationList, RevocationError> {
        let bits = URL_SAFE_NO_PAD
            .decode(&self.encoded_list)
            .map_err(|e| RevocationError::MalformedList(format!("encodedList: {e}")))?;
        RevocationList::from_bytes(bits, self.version)
            .map_err(|_| RevocationError::MalformedList("encodedList is empty".into()))
    }
}

pub fn encode_list_credential(
    list: &RevocationList,
    issuer: &str,
    signer: &KeyPair,
    now: u64,
) -> Result<String, JoseError> {
    let credential = RevocationListCredential {
        iss: issuer.to_owned(),
        iat: now,
        version: list.version(),
        encoded_list: list.encoded(),
    };
    jws_sign(&credential, LIST_CREDENTIAL_TYP, signer)
}

/// Verifies a list credential under `issuer_key` and returns its payload.
pub fn decode_list_credential(
    compact: &str,
    issuer_key: &PublicKeyJwk,
) -> Result<RevocationListCredential, RevocationError> {
    let jws = Jws::decode(compact).map_err(|e| RevocationError::MalformedList(e.to_string()))?;
    jws.verify(issuer_key).map_err(|e| match e {
        JoseError::BadSignature => RevocationError::BadSignature,
        other => RevocationError::MalformedList(other.to_string()),
    })?;
    let credential: RevocationListCredential =
        serde_json::from_value(Value::Object(jws.payload))
            .map_err(|e| RevocationError::MalformedList(e.to_string()))?;
    credential.list()?;
    Ok(credential)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn default_length_is_16k_bytes() {
        let list = RevocationList::new(DEFAULT_LIST_BITS).unwrap();
        assert_eq!(list.as_bytes().len(), 16384);
        assert!(list.as_bytes().iter().all(|&b| b == 0));
        assert_eq!(list.version(), 0);
    }

    #[test]
    fn length_rules() {
        assert_eq!(RevocationList::new(8).unwrap().as_bytes().len(), 1);
        assert!(matches!(
            RevocationList::new(7),
            Err(RevocationError::InvalidLength(7))
        ));
        assert!(matches!(
            RevocationList::new(0),
            Err(RevocationError::InvalidLength(0))
        ));
    }

    #[test]
    fn revoke_appendix_index() {
        let mut list = RevocationList::new(DEFAULT_LIST_BITS).unwrap();
        list.revoke(94567).unwrap();
        assert!(list.is_revoked(94567).unwrap());
        assert!(!list.is_revoked(94566).unwrap());
        assert!(!list.is_revoked(94568).unwrap());
    }

    #[test]
    fn revoke_is_idempotent_but_versioned() {
        let mut list = RevocationList::new(64).unwrap();
        list.revoke(0).unwrap();
        let once = list.as_bytes().to_vec();
        list.revoke(0).unwrap();
        assert_eq!(list.as_bytes(), once.as_slice());
        assert_eq!(list.version(), 2);
    }

    #[test]
    fn bounds() {
        let mut list = RevocationList::new(64).unwrap();
        assert!(matches!(
            list.revoke(64),
            Err(RevocationError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            list.is_revoked(u64::MAX),
            Err(RevocationError::IndexOutOfRange { .. })
        ));
        assert!(list.revoke(63).is_ok());
    }

    #[test]
    fn isolation_and_msb_first_order() {
        let mut list = RevocationList::new(64).unwrap();
        assert!(!list.is_revoked(5).unwrap());
        list.revoke(5).unwrap();
        assert!(list.is_revoked(5).unwrap());
        assert!(!list.is_revoked(4).unwrap());
        assert!(!list.is_revoked(6).unwrap());
        assert_eq!(list.as_bytes()[0], 0b0000_0100);
        list.revoke(8).unwrap();
        assert_eq!(list.as_bytes()[1], 0b1000_0000);
    }

    #[test]
    fn unrevoke_clears() {
        let mut list = RevocationList::new(64).unwrap();
        list.revoke(9).unwrap();
        list.unrevoke(9).unwrap();
        assert!(!list.is_revoked(9).unwrap());
        assert_eq!(list.version(), 2);
    }

    #[test]
    fn credential_round_trip() {
        let key = KeyPair::from_seed(&[5u8; 32]);
        let mut list = RevocationList::new(DEFAULT_LIST_BITS).unwrap();
        for i in [0, 7, 94567, 131071] {
            list.revoke(i).unwrap();
        }
        let compact = encode_list_credential(&list, "https://mm.aueb.gr/as", &key, 42).unwrap();
        let decoded = decode_list_credential(&compact, key.public()).unwrap();
        assert_eq!(decoded.iss, "https://mm.aueb.gr/as");
        assert_eq!(decoded.list().unwrap(), list);
        // 16384 bytes -> 5461 full groups of 4 chars + 2 chars for the last byte,
        // no padding (21848 with padding).
        assert_eq!(decoded.encoded_list.len(), 21846);
    }

    #[test]
    fn wrong_key_is_bad_signature() {
        let key = KeyPair::from_seed(&[5u8; 32]);
        let other = KeyPair::from_seed(&[6u8; 32]);
        let compact =
            encode_list_credential(&RevocationList::new(8).unwrap(), "i", &key, 0).unwrap();
        assert!(matches!(
            decode_list_credential(&compact, other.public()),
            Err(RevocationError::BadSignature)
        ));
    }

    #[test]
    fn malformed_credentials() {
        let key = KeyPair::from_seed(&[5u8; 32]);
        assert!(matches!(
            decode_list_credential("x", key.public()),
            Err(RevocationError::MalformedList(_))
        ));
        let empty = jws_sign(
            &serde_json::json!({"iss": "i", "iat": 0, "version": 0, "encodedList": ""}),
            LIST_CREDENTIAL_TYP,
            &key,
        )
        .unwrap();
        assert!(matches!(
            decode_list_credential(&empty, key.public()),
            Err(RevocationError::MalformedList(_))
        ));
    }

    #[derive(Debug, Clone)]
    enum Step {
        Revoke(u64),
        Unrevoke(u64),
        Check(u64),
    }

    fn step() -> impl Strategy<Value = Step> {
        prop_oneof![
            (0u64..70).prop_map(Step::Revoke),
            (0u64..70).prop_map(Step::Unrevoke),
            (0u64..70).prop_map(Step::Check),
        ]
    }

    proptest! {
        #[test]
        fn matches_naive_set_model(steps in proptest::collection::vec(step(), 0..200)) {
            let mut list = RevocationList::new(64).unwrap();
            let mut model = BTreeSet::new();
            for s in steps {
                match s {
                    Step::Revoke(i) => {
                        prop_assert_eq!(list.revoke(i).is_ok(), i < 64);
                        if i < 64 { model.insert(i); }
                    }
                    Step::Unrevoke(i) => {
                        prop_assert_eq!(list.unrevoke(i).is_ok(), i < 64);
                        model.remove(&i);
                    }
                    Step::Check(i) => match list.is_revoked(i) {
                        Ok(b) => prop_assert_eq!(b, model.contains(&i)),
                        Err(_) => prop_assert!(i >= 64),
                    },
                }
            }
            for i in 0..64 {
                prop_assert_eq!(list.is_revoked(i).unwrap(), model.contains(&i));
            }
        }
    }
}
