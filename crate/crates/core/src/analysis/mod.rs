//! Cross-cutting diagnostics: norm estimators, barrier-compatibility
//! witnesses, and ordering/uniqueness/approximation test batteries.

pub mod approximation;
pub mod comparison;
pub mod mokobodzki;
pub mod norms;
pub mod uniqueness;
