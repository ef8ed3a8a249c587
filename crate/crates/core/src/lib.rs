//! Teaching-size measurement for hand-drawn concepts shown to vision-language
//! learners as bitmaps or as TikZ coordinate text.

pub mod drawing;
pub mod learner;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod sampling;
pub mod simplify;
