//! Process exit codes.

use mtscale_core::{Error, ShardError};

pub const OK: u8 = 0;
/// Unexpected failure not attributable to the inputs.
pub const INTERNAL: u8 = 1;
pub const INVALID_INPUT: u8 = 2;
pub const INSUFFICIENT_DATA: u8 = 3;
pub const INFEASIBLE: u8 = 4;

pub fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InsufficientData(_) | Error::FitFailed(_) => INSUFFICIENT_DATA,
                Error::InfeasibleTarget { .. } => INFEASIBLE,
                _ => INVALID_INPUT,
            };
        }
        if cause.downcast_ref::<ShardError>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<csv::Error>().is_some()
        {
            return INVALID_INPUT;
        }
    }
    INTERNAL
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classes() {
        let wrap = |e: Error| Err::<(), _>(e).context("while planning").unwrap_err();
        assert_eq!(
            classify(&wrap(Error::InfeasibleTarget {
                target: 1.0,
                floor: 2.0
            })),
            INFEASIBLE
        );
        assert_eq!(
            classify(&wrap(Error::InsufficientData("x".into()))),
            INSUFFICIENT_DATA
        );
        assert_eq!(
            classify(&wrap(Error::UnknownControlToken("<lang_xx>".into()))),
            INVALID_INPUT
        );
        let shard = anyhow::Error::new(ShardError::MagicMismatch);
        assert_eq!(classify(&shard), INVALID_INPUT);
        assert_eq!(classify(&anyhow::anyhow!("boom")), INTERNAL);
    }
}
