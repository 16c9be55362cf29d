//! Command-line and HTTP front end for the survpower engine. Both paths go
//! through [`dispatch::dispatch`], so they return identical documents.

pub mod dispatch;
pub mod error;
pub mod payload;
pub mod report;
pub mod serve;

pub use dispatch::{dispatch, Command, Outcome};
pub use error::{ApiError, ErrorClass, ErrorDocument};
