pub mod audio;
pub mod features;
pub mod dnn;
pub mod gmm;
pub mod fusion;
pub mod segmenter;
pub mod config;
pub mod pipeline;
pub mod harness;
