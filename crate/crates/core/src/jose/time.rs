use serde::{Deserialize, Serialize};

use super::JoseError;

pub const DEFAULT_SKEW_SECS: u64 = 5;

/// `iat` / `exp` pair of a JWT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JwtTimeWindow {
    iat: u64,
    exp: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TimeReject {
    #[error("token expired")]
    Expired,
    #[error("token issued in the future")]
    NotFresh,
}

impl JwtTimeWindow {
    pub fn new(iat: u64, exp: Option<u64>) -> Result<Self, JoseError> {
        if let Some(exp) = exp {
            if exp <= iat {
                return Err(JoseError::InvalidTimeWindow { iat, exp });
            }
        }
        Ok(JwtTimeWindow { iat, exp })
    }

    pub fn iat(&self) -> u64 {
        self.iat
    }

    pub fn exp(&self) -> Option<u64> {
        self.exp
    }

    pub fn check(&self, now: u64, skew: u64) -> Result<(), TimeReject> {
        check_time_window(self, now, skew)
    }
}

pub fn check_time_window(claims: &JwtTimeWindow, now: u64, skew: u64) -> Result<(), TimeReject> {
    if let Some(exp) = claims.exp {
        if now > exp.saturating_add(skew) {
            return Err(TimeReject::Expired);
        }
    }
    if now < claims.iat.saturating_sub(skew) {
        return Err(TimeReject::NotFresh);
    }
    Ok(())
}
