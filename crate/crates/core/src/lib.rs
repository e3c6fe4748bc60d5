pub mod cli;
pub mod codecs;
pub mod ctc;
pub mod diffcore;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod notation;
pub mod render;
