//! Recording manifests, signal files, synthetic corpora and splits.

mod manifest;
mod signal_io;
mod split;
mod synth;

pub use manifest::{read_manifest, write_manifest, Recording, RecordingRow, EMOTION_CLASSES};
pub use signal_io::{read_signal, write_signal, SignalFormat};
pub use split::{make_split, Split, SplitItem, SplitPolicy, SplitSpec};
pub use synth::{
    generate_corpus, generate_synthetic_ecg, SyntheticClass, SyntheticCorpus, SyntheticCorpusSpec,
    SyntheticEcg, SyntheticEcgSpec,
};
