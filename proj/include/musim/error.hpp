#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace musim {

enum class Errc {
    // midi ingest
    malformed_header,
    unsupported_division,
    truncated_chunk,
    bad_field,
    bad_manifest,
    io_failure,
    // tokenizer / vocabulary
    target_too_small,
    incompatible_vocabulary,
    unknown_id,
    // model
    sequence_too_long,
    id_out_of_range,
    bad_magic,
    shape_mismatch,
    truncated_payload,
    // calibration
    empty_sequence,
    layer_out_of_range,
    too_few_embeddings,
    dimension_mismatch,
    missing_stats,
    missing_directions,
    // pairs
    insufficient_pairs,
    // evaluation
    length_mismatch,
    too_short,
    constant_input,
    missing_embedding,
    empty_results,
    // cli / config
    bad_config,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::malformed_header: return "MalformedHeader";
        case Errc::unsupported_division: return "UnsupportedDivision";
        case Errc::truncated_chunk: return "TruncatedChunk";
        case Errc::bad_field: return "BadField";
        case Errc::bad_manifest: return "BadManifest";
        case Errc::io_failure: return "IoFailure";
        case Errc::target_too_small: return "TargetTooSmall";
        case Errc::incompatible_vocabulary: return "IncompatibleVocabulary";
        case Errc::unknown_id: return "UnknownId";
        case Errc::sequence_too_long: return "SequenceTooLong";
        case Errc::id_out_of_range: return "IdOutOfRange";
        case Errc::bad_magic: return "BadMagic";
        case Errc::shape_mismatch: return "ShapeMismatch";
        case Errc::truncated_payload: return "TruncatedPayload";
        case Errc::empty_sequence: return "EmptySequence";
        case Errc::layer_out_of_range: return "LayerOutOfRange";
        case Errc::too_few_embeddings: return "TooFewEmbeddings";
        case Errc::dimension_mismatch: return "DimensionMismatch";
        case Errc::missing_stats: return "MissingStats";
        case Errc::missing_directions: return "MissingDirections";
        case Errc::insufficient_pairs: return "InsufficientPairs";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::too_short: return "TooShort";
        case Errc::constant_input: return "ConstantInput";
        case Errc::missing_embedding: return "MissingEmbedding";
        case Errc::empty_results: return "EmptyResults";
        case Errc::bad_config: return "BadConfig";
    }
    return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class; the
/// message carries instance detail (offsets, ids, line numbers).
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Non-fatal diagnostics (skipped events, degenerate inputs). Callers pass
/// this where the operation may keep going after recording a problem; a null
/// sink drops the messages.
using WarningSink = std::vector<std::string>;

inline void warn(WarningSink* sink, const std::string& message) {
    if (sink) sink->push_back(message);
}

}  // namespace musim
