//! Training, evaluation, checkpointing and figures.

mod checkpoint;
mod config;
mod eval;
mod plot;
mod train;

pub use checkpoint::{intention_points, load_compatible, round_to_f32, TrainState};
pub use config::{DataSection, OptimSection, Precision, RunConfig};
pub use eval::{evaluate_expert, evaluate_model, evaluate_with, scorable_frames, EvalRecord, EvalReport};
pub use plot::{line_chart_svg, plan_svg, smooth};
pub use train::{sample_gradients, step_rng, train, training_samples, MetricsLog, StepRecord};
