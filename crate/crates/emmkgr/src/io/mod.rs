pub mod checkpoint;
pub mod features;
pub mod graphdir;
pub mod interactions;
pub mod queries;
