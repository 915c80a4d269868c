//! Chart answer attribution: turns a chart, a question and an answer into
//! per-claim bounding-box citations.

pub mod agent;
pub mod captioning;
pub mod chart2table;
pub mod chartgen;
pub mod eval;
pub mod gateway;
pub mod html;
pub mod model;
pub mod prompts;
pub mod reformulate;
pub mod retrieval;
pub mod localization;
pub mod pipeline;
