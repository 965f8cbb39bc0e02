//! Latency and quality metrics. All functions are pure.

mod latency;
mod quality;

pub use latency::{
    average_lagging, average_lagging_tokens, average_token_delay, source_token_end_times,
    AlLengthBasis, LatencyReport, SentenceLatency,
};
pub use quality::{
    corpus_bleu, length_diff_histogram, length_ratio, BleuScore, Bucket, HistogramSpec,
    QualityReport, MAX_ORDER,
};
