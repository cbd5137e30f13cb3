//! Failure classes and their exit codes.

use std::fmt;

/// Exit status for each failure class; success is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Other = 1,
    Config = 2,
    Input = 3,
    NonConvergence = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure {
            class: Class::Config,
            error: anyhow::anyhow!(msg.into()),
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Failure {
            class: Class::Input,
            error: anyhow::anyhow!(msg.into()),
        }
    }

    pub fn other(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            class: Class::Other,
            error: error.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Library errors: numerical breakdowns map to non-convergence, bad
/// parameters to configuration errors, data problems to input errors.
impl From<bridgevol::Error> for Failure {
    fn from(e: bridgevol::Error) -> Self {
        use bridgevol::Error as E;
        let class = if e.is_numerical() {
            Class::NonConvergence
        } else {
            match e {
                E::InvalidParameter(_) | E::Domain(_) => Class::Config,
                E::Parse(_) | E::DegenerateSample(_) | E::OutsideDomain(_) | E::InsufficientData(_) => Class::Input,
                _ => Class::Other,
            }
        };
        Failure { class, error: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::other(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::other(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::other(e)
    }
}
