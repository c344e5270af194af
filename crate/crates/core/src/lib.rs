//! Three-class sentiment polarity classification for short social-media
//! texts with a hybrid convolutional / recurrent network.
//!
//! The crate covers the full path from a labeled CSV to predictions:
//!
//! * [`corpus`]: CSV loading, class histograms, stratified splits
//! * [`preprocess`]: tweet cleaning, Porter stemming, vocabulary, padding
//! * [`tensor`]: dense `f64` matrices and seeded random streams
//! * [`layers`]: embedding, convolution, LSTM and softmax layers with
//!   analytic gradients
//! * [`model`]: CNN-LSTM / CNN / LSTM assembly, training, model files
//! * [`metrics`]: confusion matrices, precision, recall, F1, AUC

pub mod corpus;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod tensor;

pub use corpus::{LabeledCorpus, LabeledExample, Sentiment, SplitSpec};
pub use model::{Model, ModelConfig, TrainConfig, Variant};
pub use preprocess::{EncodedCorpus, Preprocessor, StopWordList, TokenSequence, Vocabulary};
