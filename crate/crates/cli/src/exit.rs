//! Error tags that select the process exit code.

use std::fmt;

/// Bad flags, config or arguments (exit 2).
#[derive(Debug)]
pub struct Invalid(pub String);

/// A required data file or checkpoint is absent (exit 3).
#[derive(Debug)]
pub struct Missing(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid input: {}", self.0)
    }
}

impl fmt::Display for Missing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing artifact: {}", self.0)
    }
}

impl std::error::Error for Invalid {}
impl std::error::Error for Missing {}

pub const VALIDATION: u8 = 2;
pub const MISSING: u8 = 3;
pub const RUNTIME: u8 = 4;

pub fn code(err: &anyhow::Error) -> u8 {
    use leapfactual::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return VALIDATION;
        }
        if cause.is::<Missing>() {
            return MISSING;
        }
        match cause.downcast_ref::<E>() {
            Some(E::Config(_) | E::LabelRange { .. }) => return VALIDATION,
            Some(E::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => return MISSING,
            _ => {}
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return MISSING;
            }
        }
    }
    RUNTIME
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn tags_survive_context() {
        let e = anyhow::Error::from(Invalid("n".into())).context("gen-data");
        assert_eq!(code(&e), VALIDATION);
        let e = anyhow::Error::from(Missing("flow".into())).context("explain");
        assert_eq!(code(&e), MISSING);
        let e: anyhow::Error = leapfactual::Error::Config("bad".into()).into();
        assert_eq!(code(&e), VALIDATION);
        let io = std::fs::read("/definitely/not/here").context("reading");
        assert_eq!(code(&io.unwrap_err()), MISSING);
        assert_eq!(code(&anyhow::anyhow!("diverged")), RUNTIME);
    }
}
