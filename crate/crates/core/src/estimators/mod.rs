//! Estimators for the legitimate user and the eavesdropper, plus a batch
//! conditioning oracle used to validate the eavesdropper's recursive filter.

pub mod eve;
pub mod oracle;
pub mod user;

pub use eve::EveFilter;
pub use oracle::{batch_oracle, OracleResult, ORACLE_MAX_DIM};
pub use user::UserBelief;
