//! Dataset ingestion: MNIST IDX files and reproducible synthetic sets.

pub mod mnist;
pub mod synth;

pub use mnist::{load_mnist, Mnist, MNIST_RADIUS};
pub use synth::{random_teacher, synth_dataset, InputKind, LabelKind, SynthSpec};
