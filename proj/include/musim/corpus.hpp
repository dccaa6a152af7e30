#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "musim/csv.hpp"
#include "musim/error.hpp"
#include "musim/note.hpp"
#include "musim/note_text.hpp"
#include "musim/smf.hpp"

namespace musim {

struct ManifestEntry {
    std::string path;
    std::string piece_id;
    std::string composer_id;
};

/// Corpus description: which files to load and how to label them.
/// Serialized as CSV with header `path,piece_id,composer_id`.
struct CorpusManifest {
    std::vector<ManifestEntry> entries;
    int format_version = 1;
};

inline void validate_manifest(const CorpusManifest& manifest) {
    std::set<std::string> seen;
    for (const auto& e : manifest.entries) {
        if (e.piece_id.empty()) throw Error(Errc::bad_manifest, "empty piece_id");
        if (e.composer_id.empty())
            throw Error(Errc::bad_manifest, "empty composer_id for piece " + e.piece_id);
        if (!seen.insert(e.piece_id).second)
            throw Error(Errc::bad_manifest, "duplicate piece_id " + e.piece_id);
    }
}

inline CorpusManifest read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::io_failure, "cannot open manifest " + file.string());
    std::string line;
    if (!std::getline(in, line) || csv_split(line) != std::vector<std::string>{"path", "piece_id", "composer_id"})
        throw Error(Errc::bad_manifest, "manifest header must be 'path,piece_id,composer_id'");
    CorpusManifest manifest;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = csv_split(line);
        if (fields.size() != 3)
            throw Error(Errc::bad_manifest, "manifest row needs 3 fields, got " +
                                                std::to_string(fields.size()));
        manifest.entries.push_back({fields[0], fields[1], fields[2]});
    }
    validate_manifest(manifest);
    return manifest;
}

inline void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(Errc::io_failure, "cannot write manifest " + file.string());
    out << "path,piece_id,composer_id\n";
    for (const auto& e : manifest.entries) csv_write_row(out, {e.path, e.piece_id, e.composer_id});
}

/// Parse one performance file. SMF input is detected by its MThd magic;
/// anything else is treated as note text.
inline Piece parse_performance_file(const std::filesystem::path& file, WarningSink* warnings = nullptr) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(Errc::io_failure, "cannot open " + file.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() >= 4 && bytes[0] == 'M' && bytes[1] == 'T' && bytes[2] == 'h' && bytes[3] == 'd')
        return parse_smf(bytes, warnings);
    return parse_note_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

/// Load every manifest entry, in manifest order. Relative paths resolve
/// against `base_dir` (typically the manifest's directory). Parser errors
/// are re-thrown tagged with the offending piece_id.
inline std::vector<Piece> load_corpus(const CorpusManifest& manifest,
                                      const std::filesystem::path& base_dir = ".",
                                      WarningSink* warnings = nullptr) {
    validate_manifest(manifest);
    // resolve and stat everything up front so a bad manifest fails before any parsing
    std::vector<std::filesystem::path> paths;
    paths.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = base_dir / p;
        if (!std::filesystem::exists(p))
            throw Error(Errc::io_failure, "piece " + e.piece_id + ": missing file " + p.string());
        paths.push_back(p);
    }
    std::vector<Piece> pieces;
    pieces.reserve(manifest.entries.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        try {
            Piece piece = parse_performance_file(paths[i], warnings);
            piece.piece_id = e.piece_id;
            piece.composer_id = e.composer_id;
            pieces.push_back(std::move(piece));
        } catch (const Error& err) {
            throw Error(err.code(), "piece " + e.piece_id + ": " + err.what());
        }
    }
    return pieces;
}

}  // namespace musim
