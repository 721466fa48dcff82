pub mod bench;
pub mod costvolume;
pub mod encoder;
pub mod error;
pub mod imagecore;
pub mod jbf;
pub mod matcher;
pub mod synthesis;

pub use costvolume::{CostVolume, DisparitySign};
pub use encoder::{SampleSet, Scheme};
pub use error::{Error, Result};
pub use imagecore::{Image, ResizeMode};
pub use matcher::{DisparityMap, PipelineParams, Strategy};
