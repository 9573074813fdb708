// SPDX-License-Identifier: Apache-2.0

use std::io;

use mmm_core::codec::DecodeError;
use mmm_core::gatekeeper::RuleFileError;
use mmm_core::measures::MeasureError;
use mmm_core::reward::RewardError;
use mmm_core::sharing::SharingError;
use mmm_core::sim::SimError;
use mmm_core::CoreError;
use thiserror::Error;

/// A domain error with its stable code.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        CliError::new("BAD_REQUEST", message)
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded!(CoreError, DecodeError, MeasureError, RewardError, SharingError, SimError);

impl From<RuleFileError> for CliError {
    fn from(e: RuleFileError) -> Self {
        CliError::new(e.error.code(), e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::new("IO_ERROR", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
