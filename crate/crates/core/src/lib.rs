pub mod bounds;
pub mod certify;
pub mod cli;
pub mod empirical;
pub mod error;
pub mod moments;
pub mod oracle;
pub mod tuning;
pub mod verify;
