pub mod biometric;
pub mod bits;
pub mod harness;
pub mod ledger;
pub mod lsh;
pub mod passport;
