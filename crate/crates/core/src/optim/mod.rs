//! Fitting Gaussians to images.

pub mod adam;
pub mod backward;
pub mod densify;
pub mod gradcheck;
pub mod loss;
pub mod train;

pub use adam::{Adam, LearningRates};
pub use backward::{forward_backward, StepOutput};
pub use densify::{densify_and_prune, DensifyConfig, GradAccum};
pub use loss::{loss, loss_with_grad};
pub use train::{train, Dataset, TrainConfig, TrainRecord, TrainSummary};
