pub mod acquisition;
pub mod bench;
pub mod forest;
pub mod harness;
pub mod history;
pub mod optimizer;
pub mod space;
pub mod transport;
