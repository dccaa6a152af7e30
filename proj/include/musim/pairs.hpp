#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "musim/csv.hpp"
#include "musim/error.hpp"
#include "musim/prng.hpp"
#include "musim/vocab.hpp"

namespace musim {

// Evaluation sequences and composer-labeled pairs: pieces are cut into
// fixed-length windows with a sliding stride, then same-composer and
// cross-composer window pairs are sampled uniformly without replacement.

struct WindowRef {
    std::string piece_id;
    std::uint32_t window_index = 0;

    friend bool operator==(const WindowRef&, const WindowRef&) = default;
    friend auto operator<=>(const WindowRef&, const WindowRef&) = default;
};

struct Window {
    std::string piece_id;
    std::string composer_id;
    std::uint32_t window_index = 0;
    std::vector<std::uint32_t> ids;  // length exactly the configured window size

    WindowRef ref() const { return {piece_id, window_index}; }
};

struct LabeledPair {
    WindowRef a;
    WindowRef b;  // (a, b) in lexicographic order, so pairs are unordered
    int label = 0;  // 1 same composer, 0 different
};

enum class ExclusionPolicy : std::uint8_t { none, same_piece, overlapping_windows };

inline const char* exclusion_policy_name(ExclusionPolicy p) {
    switch (p) {
        case ExclusionPolicy::none: return "none";
        case ExclusionPolicy::same_piece: return "same_piece";
        case ExclusionPolicy::overlapping_windows: return "overlapping_windows";
    }
    return "?";
}

inline ExclusionPolicy exclusion_policy_from_name(const std::string& name) {
    if (name == "none") return ExclusionPolicy::none;
    if (name == "same_piece") return ExclusionPolicy::same_piece;
    if (name == "overlapping_windows") return ExclusionPolicy::overlapping_windows;
    throw Error(Errc::bad_config, "unknown exclusion policy '" + name + "'");
}

struct SamplerConfig {
    std::uint32_t window = 1024;   // W, normally the model's max context
    std::uint32_t stride = 512;    // S, normally W / 2
    std::uint64_t positives = 1000;
    std::uint64_t negatives = 1000;
    std::uint64_t seed = 0;
    ExclusionPolicy policy = ExclusionPolicy::none;

    void validate() const {
        if (window == 0 || stride == 0)
            throw Error(Errc::bad_config, "window and stride must be positive");
        if (positives == 0 || negatives == 0)
            throw Error(Errc::bad_config, "positive and negative counts must be at least 1");
    }
};

/// Cut every piece into windows at offsets 0, S, 2S, ...; trailing partial
/// windows are discarded. Order is deterministic: piece order, then offset.
inline std::vector<Window> make_windows(const std::vector<TokenizedPiece>& pieces,
                                        const SamplerConfig& config) {
    config.validate();
    std::vector<Window> windows;
    for (const auto& piece : pieces) {
        const std::size_t len = piece.ids.size();
        std::uint32_t index = 0;
        for (std::size_t off = 0; off + config.window <= len; off += config.stride) {
            Window w;
            w.piece_id = piece.piece_id;
            w.composer_id = piece.composer_id;
            w.window_index = index++;
            w.ids.assign(piece.ids.begin() + static_cast<std::ptrdiff_t>(off),
                         piece.ids.begin() + static_cast<std::ptrdiff_t>(off + config.window));
            windows.push_back(std::move(w));
        }
    }
    return windows;
}

namespace pairs_detail {

// Two windows of one piece overlap when their offsets are closer than the
// window length: |i - j| * stride < window.
inline bool excluded(const Window& a, const Window& b, const SamplerConfig& config) {
    if (a.piece_id != b.piece_id) return false;
    switch (config.policy) {
        case ExclusionPolicy::none: return false;
        case ExclusionPolicy::same_piece: return true;
        case ExclusionPolicy::overlapping_windows: {
            const std::uint32_t lo = std::min(a.window_index, b.window_index);
            const std::uint32_t hi = std::max(a.window_index, b.window_index);
            return static_cast<std::uint64_t>(hi - lo) * config.stride < config.window;
        }
    }
    return false;
}

inline LabeledPair canonical_pair(const Window& a, const Window& b, int label) {
    if (b.ref() < a.ref()) return {b.ref(), a.ref(), label};
    return {a.ref(), b.ref(), label};
}

}  // namespace pairs_detail

/// Draw exactly `positives` same-composer and `negatives` cross-composer
/// unordered window pairs, uniformly without replacement among eligible
/// pairs, from the seeded generator. Throws InsufficientPairs naming the
/// class that cannot be satisfied. Small pair universes are enumerated and
/// partially shuffled; large ones are rejection-sampled — both paths are
/// deterministic for a fixed seed.
inline std::vector<LabeledPair> sample_pairs(const std::vector<Window>& windows,
                                             const SamplerConfig& config) {
    config.validate();
    const std::size_t n = windows.size();

    // eligible-pair counts per class
    std::uint64_t positive_total = 0, negative_total = 0, positive_eligible = 0;
    {
        std::unordered_map<std::string, std::uint64_t> per_composer;
        for (const auto& w : windows) ++per_composer[w.composer_id];
        const std::uint64_t all = static_cast<std::uint64_t>(n) * (n - 1) / 2;
        for (const auto& [_, count] : per_composer) positive_total += count * (count - 1) / 2;
        negative_total = all - positive_total;

        positive_eligible = positive_total;
        if (config.policy != ExclusionPolicy::none) {
            std::unordered_map<std::string, std::vector<std::uint32_t>> piece_windows;
            for (const auto& w : windows) piece_windows[w.piece_id].push_back(w.window_index);
            for (auto& [_, idx] : piece_windows) {
                const std::uint64_t count = idx.size();
                if (config.policy == ExclusionPolicy::same_piece) {
                    positive_eligible -= count * (count - 1) / 2;
                } else {
                    std::sort(idx.begin(), idx.end());
                    for (std::size_t i = 0; i < idx.size(); ++i)
                        for (std::size_t j = i + 1; j < idx.size(); ++j)
                            if (static_cast<std::uint64_t>(idx[j] - idx[i]) * config.stride <
                                config.window)
                                --positive_eligible;
                }
            }
        }
    }
    if (config.positives > positive_eligible)
        throw Error(Errc::insufficient_pairs,
                    "requested " + std::to_string(config.positives) + " positive pairs but only " +
                        std::to_string(positive_eligible) + " eligible");
    if (config.negatives > negative_total)
        throw Error(Errc::insufficient_pairs,
                    "requested " + std::to_string(config.negatives) + " negative pairs but only " +
                        std::to_string(negative_total) + " eligible");

    Rng rng(config.seed);
    std::vector<LabeledPair> out;
    out.reserve(config.positives + config.negatives);

    constexpr std::uint64_t kEnumerationLimit = 1 << 22;
    const bool enumerate = static_cast<std::uint64_t>(n) * (n - 1) / 2 <= kEnumerationLimit;
    if (enumerate) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pos, neg;
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::uint32_t j = i + 1; j < n; ++j) {
                if (windows[i].composer_id == windows[j].composer_id) {
                    if (!pairs_detail::excluded(windows[i], windows[j], config)) pos.emplace_back(i, j);
                } else {
                    neg.emplace_back(i, j);
                }
            }
        }
        auto take = [&](std::vector<std::pair<std::uint32_t, std::uint32_t>>& pool,
                        std::uint64_t want, int label) {
            for (std::uint64_t t = 0; t < want; ++t) {
                const std::uint64_t pick = t + rng.below(pool.size() - t);
                std::swap(pool[t], pool[pick]);
                out.push_back(
                    pairs_detail::canonical_pair(windows[pool[t].first], windows[pool[t].second], label));
            }
        };
        take(pos, config.positives, 1);
        take(neg, config.negatives, 0);
    } else {
        std::unordered_set<std::uint64_t> chosen;
        auto draw = [&](std::uint64_t want, int label) {
            std::uint64_t got = 0;
            while (got < want) {
                const auto i = static_cast<std::uint32_t>(rng.below(n));
                const auto j = static_cast<std::uint32_t>(rng.below(n));
                if (i == j) continue;
                const std::uint32_t a = std::min(i, j), b = std::max(i, j);
                const bool same = windows[a].composer_id == windows[b].composer_id;
                if (same != (label == 1)) continue;
                if (same && pairs_detail::excluded(windows[a], windows[b], config)) continue;
                if (!chosen.insert(static_cast<std::uint64_t>(a) << 32 | b).second) continue;
                out.push_back(pairs_detail::canonical_pair(windows[a], windows[b], label));
                ++got;
            }
        };
        draw(config.positives, 1);
        draw(config.negatives, 0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// persistence: CSV pair list plus a JSON sidecar echoing the sampler config

inline void write_pairs_csv(const std::vector<LabeledPair>& pairs, std::ostream& os) {
    os << "a_piece,a_window,b_piece,b_window,label\n";
    for (const auto& p : pairs)
        csv_write_row(os, {p.a.piece_id, std::to_string(p.a.window_index), p.b.piece_id,
                           std::to_string(p.b.window_index), std::to_string(p.label)});
}

inline std::vector<LabeledPair> read_pairs_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) ||
        csv_split(line) != std::vector<std::string>{"a_piece", "a_window", "b_piece", "b_window", "label"})
        throw Error(Errc::bad_field, "pairs header must be 'a_piece,a_window,b_piece,b_window,label'");
    std::vector<LabeledPair> pairs;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = csv_split(line);
        if (fields.size() != 5)
            throw Error(Errc::bad_field, "pairs line " + std::to_string(line_no) + ": need 5 fields");
        try {
            LabeledPair p;
            p.a = {fields[0], static_cast<std::uint32_t>(std::stoul(fields[1]))};
            p.b = {fields[2], static_cast<std::uint32_t>(std::stoul(fields[3]))};
            p.label = std::stoi(fields[4]);
            if (p.label != 0 && p.label != 1) throw std::invalid_argument("label");
            pairs.push_back(std::move(p));
        } catch (const std::exception&) {
            throw Error(Errc::bad_field, "pairs line " + std::to_string(line_no) + ": bad value");
        }
    }
    return pairs;
}

inline std::string sampler_sidecar_json(const SamplerConfig& config) {
    nlohmann::json j;
    j["window"] = config.window;
    j["stride"] = config.stride;
    j["positives"] = config.positives;
    j["negatives"] = config.negatives;
    j["seed"] = config.seed;
    j["exclusion_policy"] = exclusion_policy_name(config.policy);
    return j.dump(2) + "\n";
}

}  // namespace musim
