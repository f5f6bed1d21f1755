pub mod audit;
pub mod config;
pub mod demand;
pub mod dispatch;
pub mod error;
pub mod fleet;
pub mod logs;
pub mod matching;
pub mod metrics;
pub mod network;
pub mod simcore;
pub mod sweep;
