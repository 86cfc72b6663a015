//! Knowledge-augmented LLM prompting for speech emotion recognition.

pub mod acoustics;
pub mod corpus;
pub mod eval;
pub mod llmclient;
pub mod parse;
pub mod pipeline;
pub mod promptkit;
pub mod scalar;
pub mod template;
pub mod textmetrics;

pub use scalar::Sample;

pub type AcousticProfile = acoustics::Profile<f64>;
pub type AcousticProfileF32 = acoustics::Profile<f32>;
pub type Calibration = acoustics::Calibration<f64>;
pub type CalibrationF32 = acoustics::Calibration<f32>;
pub type Audio = acoustics::Audio<f64>;
pub type AudioF32 = acoustics::Audio<f32>;
pub type F0Track = acoustics::F0Track<f64>;
