//! Soundscape impression prediction.

pub mod acoustic;
pub mod data;
pub mod embedding;
pub mod geo;
pub mod nn;
pub mod pipeline;
pub mod records;
pub mod seed;
pub mod selection;
pub mod ssqp;
pub mod synth;

pub use acoustic::{extract, AcousticFeature, AudioError, ExtractionConfig, PercentileConvention, Waveform, FEATURE_LEN};
pub use data::{
    AttributeScores, DataError, DatasetManifest, ImpressionPair, ManifestEntry, NoiseRule, Recording,
    SoundSourceScores, NUM_SOURCES,
};
pub use embedding::{AutoencoderConfig, AutoencoderModel, BottleneckFeature, EmbeddingError, RawEmbedding};
pub use geo::{GeoError, TileCoord, WindowPlan};
pub use nn::{MlpConfig, MlpModel, NnError};
pub use pipeline::{
    ExperimentReport, ExperimentSettings, FeatureCombo, HpoSettings, Impression, PipelineError, Sample, SsInput,
    SsSource,
};
pub use records::{RecordError, VectorRecord};
pub use seed::derive_seed;
pub use selection::{Hyper, SearchSpace, SearchSettings, SelectionError, Strategy};
pub use ssqp::{impressions_from_attributes, Scale, SsqpError};
pub use synth::{SynthError, SynthRecipe};
