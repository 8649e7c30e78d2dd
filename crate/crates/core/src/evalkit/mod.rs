//! Dataset loading, sampling, folds, aggregation, report tables and
//! transcript files.

mod dataset;
mod evaluate;
mod folds;
mod table;
mod transcript;

pub use dataset::{load_dataset, parse_dataset, read_records, DatasetError, DatasetKind, Entry, RecordError, RecordRead};
pub use evaluate::{
    evaluate, run_entry, ClockMode, EntryOutcome, EntryRecord, EvalError, EvalReport, EvalSettings, Pipeline,
};
pub use folds::{aggregate, sample, sample_indices, split_folds, Aggregate, FoldError, FoldPlan, NoFolds, SampleError};
pub use table::{
    emit_table, format_accuracy, format_runtime, read_report_csv, render_table, write_entries_csv, write_report_csv,
    ReportRow,
};
pub use transcript::{
    decode_file_stem, encode_file_stem, persist_transcript, read_transcript, transcript_relpath, TranscriptError,
};
