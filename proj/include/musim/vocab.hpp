#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "musim/error.hpp"
#include "musim/events.hpp"

namespace musim {

/// Token vocabulary: a dense id space whose first block is every single
/// event representable under the tokenizer config, followed by one merged
/// multi-event word per recorded merge rule, in merge order.
struct Vocabulary {
    TokenizerConfig config;
    std::vector<std::vector<PerformanceEvent>> words;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> merge_rules;

    std::size_t base_size() const { return static_cast<std::size_t>(config.single_event_vocab_size()); }
    std::size_t size() const { return words.size(); }
};

/// Dense id of a single event: note-ons, note-offs, time-shift bins, then
/// velocity bins. Throws if the event does not fit the config's bins.
inline std::uint32_t single_event_id(const PerformanceEvent& e, const TokenizerConfig& config) {
    switch (e.kind) {
        case PerformanceEvent::Kind::note_on:
            if (e.value > 127) break;
            return e.value;
        case PerformanceEvent::Kind::note_off:
            if (e.value > 127) break;
            return 128u + e.value;
        case PerformanceEvent::Kind::time_shift:
            if (e.value < 1 || static_cast<int>(e.value) > config.max_time_shift_bins) break;
            return 256u + (e.value - 1);
        case PerformanceEvent::Kind::velocity:
            if (e.value < 1 || static_cast<int>(e.value) > config.velocity_bins) break;
            return 256u + static_cast<std::uint32_t>(config.max_time_shift_bins) + (e.value - 1);
    }
    throw Error(Errc::incompatible_vocabulary,
                "event " + event_code(e) + " outside configured bins");
}

inline Vocabulary make_base_vocabulary(const TokenizerConfig& config) {
    config.validate();
    Vocabulary vocab;
    vocab.config = config;
    vocab.words.reserve(vocab.base_size());
    for (std::uint16_t p = 0; p < 128; ++p)
        vocab.words.push_back({{PerformanceEvent::Kind::note_on, p}});
    for (std::uint16_t p = 0; p < 128; ++p)
        vocab.words.push_back({{PerformanceEvent::Kind::note_off, p}});
    for (std::uint16_t b = 1; b <= config.max_time_shift_bins; ++b)
        vocab.words.push_back({{PerformanceEvent::Kind::time_shift, b}});
    for (std::uint16_t b = 1; b <= config.velocity_bins; ++b)
        vocab.words.push_back({{PerformanceEvent::Kind::velocity, b}});
    return vocab;
}

namespace vocab_detail {

inline void apply_merge(std::vector<std::uint32_t>& seq, std::uint32_t left, std::uint32_t right,
                        std::uint32_t merged) {
    std::size_t w = 0, r = 0;
    while (r < seq.size()) {
        if (r + 1 < seq.size() && seq[r] == left && seq[r + 1] == right) {
            seq[w++] = merged;
            r += 2;
        } else {
            seq[w++] = seq[r++];
        }
    }
    seq.resize(w);
}

}  // namespace vocab_detail

/// Grow a vocabulary by greedy pair merging: repeatedly merge the most
/// frequent adjacent word pair across the corpus (ties to the smaller
/// (left, right) id pair), skipping merges whose expansion would exceed
/// `max_word_events`, until `target_size` words exist or no pair occurs at
/// least twice.
inline Vocabulary build_vocabulary(const std::vector<std::vector<PerformanceEvent>>& corpora,
                                   const TokenizerConfig& config, std::size_t target_size,
                                   std::size_t max_word_events = 8) {
    Vocabulary vocab = make_base_vocabulary(config);
    if (target_size < vocab.base_size())
        throw Error(Errc::target_too_small,
                    "target size " + std::to_string(target_size) + " below single-event size " +
                        std::to_string(vocab.base_size()));

    std::vector<std::vector<std::uint32_t>> seqs;
    seqs.reserve(corpora.size());
    for (const auto& events : corpora) {
        std::vector<std::uint32_t> ids;
        ids.reserve(events.size());
        for (const auto& e : events) ids.push_back(single_event_id(e, config));
        seqs.push_back(std::move(ids));
    }

    while (vocab.size() < target_size) {
        std::unordered_map<std::uint64_t, std::size_t> counts;
        for (const auto& seq : seqs)
            for (std::size_t i = 0; i + 1 < seq.size(); ++i)
                ++counts[static_cast<std::uint64_t>(seq[i]) << 32 | seq[i + 1]];

        bool found = false;
        std::size_t best_count = 0;
        std::uint32_t best_left = 0, best_right = 0;
        for (const auto& [key, count] : counts) {
            if (count < 2) continue;
            const auto left = static_cast<std::uint32_t>(key >> 32);
            const auto right = static_cast<std::uint32_t>(key & 0xFFFFFFFFu);
            if (vocab.words[left].size() + vocab.words[right].size() > max_word_events) continue;
            if (!found || count > best_count ||
                (count == best_count &&
                 std::make_pair(left, right) < std::make_pair(best_left, best_right))) {
                found = true;
                best_count = count;
                best_left = left;
                best_right = right;
            }
        }
        if (!found) break;

        const auto merged = static_cast<std::uint32_t>(vocab.size());
        std::vector<PerformanceEvent> word = vocab.words[best_left];
        word.insert(word.end(), vocab.words[best_right].begin(), vocab.words[best_right].end());
        vocab.words.push_back(std::move(word));
        vocab.merge_rules.emplace_back(best_left, best_right);
        for (auto& seq : seqs) vocab_detail::apply_merge(seq, best_left, best_right, merged);
    }
    return vocab;
}

/// Map events to token ids by replaying the vocabulary's merge rules in
/// recorded order over the single-event id sequence.
inline std::vector<std::uint32_t> tokenize(const std::vector<PerformanceEvent>& events,
                                           const Vocabulary& vocab) {
    std::vector<std::uint32_t> ids;
    ids.reserve(events.size());
    for (const auto& e : events) ids.push_back(single_event_id(e, vocab.config));
    for (std::size_t k = 0; k < vocab.merge_rules.size(); ++k) {
        const auto [left, right] = vocab.merge_rules[k];
        vocab_detail::apply_merge(ids, left, right,
                                  static_cast<std::uint32_t>(vocab.base_size() + k));
    }
    return ids;
}

inline std::vector<PerformanceEvent> detokenize(const std::vector<std::uint32_t>& ids,
                                                const Vocabulary& vocab) {
    std::vector<PerformanceEvent> events;
    for (auto id : ids) {
        if (id >= vocab.size())
            throw Error(Errc::unknown_id, "token id " + std::to_string(id) + " not in vocabulary");
        const auto& word = vocab.words[id];
        events.insert(events.end(), word.begin(), word.end());
    }
    return events;
}

// ---------------------------------------------------------------------------
// serialization (versioned JSON)

inline constexpr int kVocabularyFormatVersion = 1;

inline std::string vocabulary_to_json(const Vocabulary& vocab) {
    nlohmann::json j;
    j["version"] = kVocabularyFormatVersion;
    j["config"] = {{"time_shift_bin_ms", vocab.config.time_shift_bin_ms},
                   {"max_time_shift_bins", vocab.config.max_time_shift_bins},
                   {"velocity_bins", vocab.config.velocity_bins}};
    auto& words = j["words"] = nlohmann::json::array();
    for (const auto& word : vocab.words) {
        nlohmann::json w = nlohmann::json::array();
        for (const auto& e : word) w.push_back(event_code(e));
        words.push_back(std::move(w));
    }
    auto& merges = j["merges"] = nlohmann::json::array();
    for (const auto& [a, b] : vocab.merge_rules) merges.push_back({a, b});
    return j.dump(2) + "\n";
}

inline Vocabulary vocabulary_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::bad_field, std::string("vocabulary JSON: ") + e.what());
    }
    try {
        if (j.at("version").get<int>() != kVocabularyFormatVersion)
            throw Error(Errc::bad_field, "unsupported vocabulary version");
        TokenizerConfig config;
        config.time_shift_bin_ms = j.at("config").at("time_shift_bin_ms").get<int>();
        config.max_time_shift_bins = j.at("config").at("max_time_shift_bins").get<int>();
        config.velocity_bins = j.at("config").at("velocity_bins").get<int>();
        Vocabulary vocab = make_base_vocabulary(config);

        const auto& words = j.at("words");
        if (words.size() < vocab.base_size())
            throw Error(Errc::bad_field, "vocabulary smaller than its single-event block");
        for (std::size_t i = 0; i < vocab.base_size(); ++i) {
            std::vector<PerformanceEvent> word;
            for (const auto& code : words[i]) word.push_back(event_from_code(code.get<std::string>()));
            if (word != vocab.words[i])
                throw Error(Errc::bad_field, "single-event block does not match config at id " +
                                                 std::to_string(i));
        }
        const auto& merges = j.at("merges");
        if (vocab.base_size() + merges.size() != words.size())
            throw Error(Errc::bad_field, "merge count inconsistent with word count");
        for (std::size_t k = 0; k < merges.size(); ++k) {
            const auto left = merges[k][0].get<std::uint32_t>();
            const auto right = merges[k][1].get<std::uint32_t>();
            const std::size_t id = vocab.base_size() + k;
            if (left >= id || right >= id)
                throw Error(Errc::bad_field, "merge rule references a later id");
            std::vector<PerformanceEvent> expansion = vocab.words[left];
            expansion.insert(expansion.end(), vocab.words[right].begin(), vocab.words[right].end());
            std::vector<PerformanceEvent> stored;
            for (const auto& code : words[id]) stored.push_back(event_from_code(code.get<std::string>()));
            if (stored != expansion)
                throw Error(Errc::bad_field, "word " + std::to_string(id) +
                                                 " does not equal its merge expansion");
            vocab.words.push_back(std::move(expansion));
            vocab.merge_rules.emplace_back(left, right);
        }
        return vocab;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::bad_field, std::string("vocabulary JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// tokenized pieces (JSON-lines persistence: {"ids": [...], "piece_id": "..."})

struct TokenizedPiece {
    std::string piece_id;
    std::string composer_id;  // joined from the manifest, not persisted
    std::vector<std::uint32_t> ids;
};

inline std::string token_lines_to_string(const std::vector<TokenizedPiece>& pieces) {
    std::string out;
    for (const auto& p : pieces) {
        nlohmann::json j;
        j["piece_id"] = p.piece_id;
        j["ids"] = p.ids;
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<TokenizedPiece> token_lines_from_string(const std::string& text) {
    std::vector<TokenizedPiece> pieces;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(start, nl - start);
        start = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            TokenizedPiece p;
            p.piece_id = j.at("piece_id").get<std::string>();
            p.ids = j.at("ids").get<std::vector<std::uint32_t>>();
            pieces.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::bad_field,
                        "token line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pieces;
}

}  // namespace musim
