//! Certification engine for the positive semi-definiteness of the
//! symmetrized sextic Bessel-moment quadratic form on band-limited,
//! antipodally symmetric functions on the circle.
//!
//! Pipeline: tabulate `J_n` on two uniform grids ([`bessel`]), integrate
//! every required six-fold product with composite Newton–Cotes ([`quad`]),
//! add the analytic tail ([`tail`]), cache the results with certified error
//! budgets ([`integrals`]), assemble the block-diagonal matrix ([`qform`]) and
//! compare each block's smallest eigenvalue with a row-sum bound on the error
//! matrix ([`certify`]).

pub mod bessel;
pub mod decimal;
pub mod error;
pub mod hiprec;
pub mod quad;
pub mod tail;
pub mod config;
pub mod integrals;
pub mod qform;
pub mod certify;
pub mod pipeline;

pub use config::RunConfig;
pub use decimal::Decimal;
pub use error::{Error, Result};
pub use hiprec::ExtReal;
