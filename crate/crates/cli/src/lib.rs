pub mod commands;
pub mod config;
pub mod parallel;
pub mod report;
