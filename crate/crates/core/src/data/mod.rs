//! Dataset records, vocabularies, ground-truth masks and the synthetic
//! grid world.

mod mask;
mod prepare;
mod records;
mod synth;
mod vocab;

pub use mask::{load_attention_gt, mask_to_attention, mask_to_pgm, parse_pgm, GrayImage};
pub use prepare::{prepare_records, prepare_synthetic, PreparedExample, Vocabularies};
pub use records::{load_dataset, parse_record, read_records, save_dataset, write_records, ExampleRecord};
pub use synth::{
    category_name, generate_synthetic, justification, object_name, quadrant_of, validate_example,
    write_synthetic, SynthConfig, SynthExample, SynthVariant, SynthWorld, SyntheticDataset, CATEGORIES,
    POSITION_CHANNELS, QUADRANTS,
};
pub use vocab::{tokenize, AnswerSet, Vocabulary, RESERVED};
