//! Behavioral cloning: record driving, balance and mirror the data, train a
//! small dense network with Adam, and deploy it as the driver.

pub mod dataset;
pub mod driver;
pub mod features;
pub mod mlp;
pub mod session;
pub mod train;

pub use dataset::{augment_mirror, balance_dataset, Dataset, DatasetError, DatasetRow, Recorder};
pub use driver::{BcDriver, Course, HumanDriver, HumanParams, LapCounter};
pub use features::{
    featurize, mirror_features, FeatureSpec, Featurizer, FEATURE_BEAMS, FEATURE_LEN,
};
pub use mlp::{Adam, AdamConfig, Layer, Mlp, MlpError};
pub use session::{
    course_of, evaluate_driver, featurizer_for, record_human_session, run_bc_trial, BcTrial,
    BcTrialConfig, DriveOutcome, RecordOutcome, SessionError,
};
pub use train::{train, MinMax, ModelDoc, ModelMetadata, Policy, TrainConfig, TrainResult};
