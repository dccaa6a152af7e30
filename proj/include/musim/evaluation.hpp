#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "musim/calibration.hpp"
#include "musim/error.hpp"
#include "musim/pairs.hpp"
#include "musim/spearman.hpp"

namespace musim {

// Scoring calibrated embeddings against composer labels: cosine similarity
// per pair, Spearman correlation as the metric, and a grid search over all
// calibration combinations.

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b,
                                WarningSink* warnings = nullptr) {
    if (a.size() != b.size())
        throw Error(Errc::dimension_mismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) {
        warn(warnings, "cosine of a zero vector defined as 0");
        return 0.0;
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

struct GridResult {
    CalibrationConfig config;
    double rho = 0.0;
    double p_value = 1.0;
    std::size_t pair_count = 0;
};

/// Axes of the calibration grid. layer_avg 0 is evaluated with uniform
/// weighting only (nothing is pooled there, so other modes would duplicate
/// it).
struct GridSpec {
    std::vector<int> layer_avg_values;
    std::vector<bool> sn_values = {false, true};
    std::vector<int> natsv_values = {0, 1, 2};
    std::vector<Weighting> weightings = {Weighting::uniform, Weighting::linear,
                                         Weighting::inverse_linear};

    void validate() const {
        if (layer_avg_values.empty() || sn_values.empty() || natsv_values.empty() ||
            weightings.empty())
            throw Error(Errc::bad_config, "grid spec axes must be non-empty");
        for (int v : layer_avg_values)
            if (v < 0) throw Error(Errc::bad_config, "layer_avg values must be non-negative");
        for (int v : natsv_values)
            if (v < 0) throw Error(Errc::bad_config, "natsv values must be non-negative");
    }
};

/// Full default grid for a model with `layers` layers: every layer_avg in
/// 0..layers, sn on/off, natsv 0..2, all three weightings.
inline GridSpec default_grid_spec(std::uint32_t layers) {
    GridSpec spec;
    for (std::uint32_t v = 0; v <= layers; ++v) spec.layer_avg_values.push_back(static_cast<int>(v));
    return spec;
}

/// Expand a spec into concrete configs, sorted by (weighting, sn,
/// layer_avg, natsv_k) with duplicates removed.
inline std::vector<CalibrationConfig> enumerate_grid(const GridSpec& spec) {
    spec.validate();
    auto weightings = spec.weightings;
    std::sort(weightings.begin(), weightings.end());
    weightings.erase(std::unique(weightings.begin(), weightings.end()), weightings.end());
    std::vector<bool> sns = spec.sn_values;
    std::sort(sns.begin(), sns.end());
    sns.erase(std::unique(sns.begin(), sns.end()), sns.end());
    auto layer_avgs = spec.layer_avg_values;
    std::sort(layer_avgs.begin(), layer_avgs.end());
    layer_avgs.erase(std::unique(layer_avgs.begin(), layer_avgs.end()), layer_avgs.end());
    auto natsvs = spec.natsv_values;
    std::sort(natsvs.begin(), natsvs.end());
    natsvs.erase(std::unique(natsvs.begin(), natsvs.end()), natsvs.end());

    std::vector<CalibrationConfig> configs;
    for (Weighting w : weightings)
        for (bool sn : sns)
            for (int layer_avg : layer_avgs) {
                if (layer_avg == 0 && w != Weighting::uniform) continue;
                for (int k : natsvs) configs.push_back({layer_avg, sn, k, w});
            }
    return configs;
}

struct WindowEmbedding {
    WindowRef ref;
    std::vector<double> vector;
};

struct WindowActivations {
    WindowRef ref;
    LayerActivations acts;
};

namespace eval_detail {

struct RefHash {
    std::size_t operator()(const WindowRef& r) const {
        return std::hash<std::string>()(r.piece_id) * 1000003u ^ r.window_index;
    }
};

inline std::unordered_map<WindowRef, std::size_t, RefHash> index_refs(
    const std::vector<WindowEmbedding>& embeddings) {
    std::unordered_map<WindowRef, std::size_t, RefHash> index;
    index.reserve(embeddings.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i) index[embeddings[i].ref] = i;
    return index;
}

}  // namespace eval_detail

/// Score one calibration config: cosine similarities over the pairs in file
/// order against the 0/1 labels, summarized by Spearman correlation.
inline GridResult run_config(const std::vector<WindowEmbedding>& embeddings,
                             const std::vector<LabeledPair>& pairs,
                             const CalibrationConfig& config, WarningSink* warnings = nullptr) {
    const auto index = eval_detail::index_refs(embeddings);
    std::vector<double> sims, labels;
    sims.reserve(pairs.size());
    labels.reserve(pairs.size());
    auto lookup = [&](const WindowRef& ref) -> const std::vector<double>& {
        auto it = index.find(ref);
        if (it == index.end())
            throw Error(Errc::missing_embedding,
                        ref.piece_id + "[" + std::to_string(ref.window_index) + "]");
        return embeddings[it->second].vector;
    };
    for (const auto& p : pairs) {
        sims.push_back(cosine_similarity(lookup(p.a), lookup(p.b), warnings));
        labels.push_back(static_cast<double>(p.label));
    }
    const SpearmanResult s = spearman(sims, labels);
    return {config, s.rho, s.p_value, pairs.size()};
}

struct GridError {
    CalibrationConfig config;
    std::string message;
};

struct GridOutcome {
    std::vector<GridResult> results;  // sorted by (weighting, sn, layer_avg, natsv_k)
    std::vector<GridError> errors;
    std::optional<std::size_t> argmax;  // into results
};

namespace eval_detail {

// argmax by rho; ties prefer smaller layer_avg, then smaller natsv_k, then
// sn off, then the earlier weighting. Total order, so permutation-stable.
inline bool better(const GridResult& a, const GridResult& b) {
    if (a.rho != b.rho) return a.rho > b.rho;
    if (a.config.layer_avg != b.config.layer_avg) return a.config.layer_avg < b.config.layer_avg;
    if (a.config.natsv_k != b.config.natsv_k) return a.config.natsv_k < b.config.natsv_k;
    if (a.config.sn != b.config.sn) return !a.config.sn;
    return a.config.weighting < b.config.weighting;
}

inline bool sort_key_less(const GridResult& a, const GridResult& b) {
    const auto key = [](const GridResult& r) {
        return std::make_tuple(r.config.weighting, r.config.sn, r.config.layer_avg,
                               r.config.natsv_k);
    };
    return key(a) < key(b);
}

}  // namespace eval_detail

/// Evaluate every config in the spec. Raw embeddings are pooled once per
/// (weighting, layer_avg); normalization statistics and principal
/// directions are fitted on the full window-embedding set of that group,
/// directions on the normalized set when sn is on. Configs that fail keep
/// the rest of the grid running and are reported in `errors`.
inline GridOutcome grid_search(const std::vector<WindowActivations>& windows,
                               const std::vector<LabeledPair>& pairs, const GridSpec& spec,
                               WarningSink* warnings = nullptr) {
    spec.validate();
    if (windows.empty()) throw Error(Errc::too_few_embeddings, "no window activations");
    const std::uint32_t layers = windows.front().acts.layers;
    const std::uint32_t hidden = windows.front().acts.hidden;
    for (const auto& w : windows)
        if (w.acts.layers != layers || w.acts.hidden != hidden)
            throw Error(Errc::shape_mismatch, "window activations disagree on L or H");
    for (int v : spec.layer_avg_values)
        if (static_cast<std::uint32_t>(v) > layers)
            throw Error(Errc::layer_out_of_range,
                        "grid layer_avg " + std::to_string(v) + " exceeds model layers " +
                            std::to_string(layers));

    const std::vector<CalibrationConfig> configs = enumerate_grid(spec);
    GridOutcome outcome;

    // group configs by (weighting, layer_avg) so pooling happens once per group
    std::vector<std::pair<std::pair<Weighting, int>, std::vector<std::size_t>>> groups;
    for (std::size_t j = 0; j < configs.size(); ++j) {
        const auto key = std::make_pair(configs[j].weighting, configs[j].layer_avg);
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {j}});
        } else {
            it->second.push_back(j);
        }
    }

    for (const auto& [key, group] : groups) {
        const auto [weighting, layer_avg] = key;
        std::vector<std::vector<double>> raw(windows.size());
        try {
            for (std::size_t w = 0; w < windows.size(); ++w)
                raw[w] = raw_embedding(windows[w].acts, layer_avg, weighting);
        } catch (const Error& e) {
            for (std::size_t j : group) outcome.errors.push_back({configs[j], e.what()});
            continue;
        }

        for (bool sn : {false, true}) {
            std::vector<std::size_t> members;
            for (std::size_t j : group)
                if (configs[j].sn == sn) members.push_back(j);
            if (members.empty()) continue;

            const std::vector<std::vector<double>>* base = &raw;
            std::vector<std::vector<double>> normalized;
            if (sn) {
                try {
                    const NormalizationStats stats = fit_sn(raw);
                    normalized.reserve(raw.size());
                    for (const auto& v : raw) normalized.push_back(apply_sn(v, stats));
                    base = &normalized;
                } catch (const Error& e) {
                    for (std::size_t j : members) outcome.errors.push_back({configs[j], e.what()});
                    continue;
                }
            }
            for (std::size_t j : members) {
                const CalibrationConfig& config = configs[j];
                try {
                    std::vector<WindowEmbedding> finals(windows.size());
                    if (config.natsv_k > 0) {
                        const PrincipalDirections dirs = fit_natsv(*base, config.natsv_k, warnings);
                        for (std::size_t w = 0; w < windows.size(); ++w)
                            finals[w] = {windows[w].ref, apply_natsv((*base)[w], dirs)};
                    } else {
                        for (std::size_t w = 0; w < windows.size(); ++w)
                            finals[w] = {windows[w].ref, (*base)[w]};
                    }
                    outcome.results.push_back(run_config(finals, pairs, config, warnings));
                } catch (const Error& e) {
                    outcome.errors.push_back({config, e.what()});
                }
            }
        }
    }

    std::sort(outcome.results.begin(), outcome.results.end(), eval_detail::sort_key_less);
    if (!outcome.results.empty()) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < outcome.results.size(); ++r)
            if (eval_detail::better(outcome.results[r], outcome.results[best])) best = r;
        outcome.argmax = best;
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// report emission

namespace eval_detail {

inline std::string format_double(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace eval_detail

/// CSV rows in grid-sorted order; rho fixed to 6 decimals, p-value in
/// scientific notation with 6 decimals so tiny values stay meaningful.
inline std::string report_csv(const std::vector<GridResult>& results) {
    if (results.empty()) throw Error(Errc::empty_results, "no grid results to report");
    std::string out = "weighting,sn,layer_avg,natsv_k,rho,p_value,pairs\n";
    for (const auto& r : results) {
        out += weighting_name(r.config.weighting);
        out += r.config.sn ? ",1," : ",0,";
        out += std::to_string(r.config.layer_avg);
        out += ',';
        out += std::to_string(r.config.natsv_k);
        out += ',';
        out += eval_detail::format_double("%.6f", r.rho);
        out += ',';
        out += eval_detail::format_double("%.6e", r.p_value);
        out += ',';
        out += std::to_string(r.pair_count);
        out += '\n';
    }
    return out;
}

inline nlohmann::json grid_result_json(const GridResult& r) {
    return {{"weighting", weighting_name(r.config.weighting)},
            {"sn", r.config.sn},
            {"layer_avg", r.config.layer_avg},
            {"natsv_k", r.config.natsv_k},
            {"rho", r.rho},
            {"p_value", r.p_value},
            {"pairs", r.pair_count}};
}

inline std::string summary_json(const GridOutcome& outcome) {
    nlohmann::json j;
    j["config_count"] = outcome.results.size() + outcome.errors.size();
    j["result_count"] = outcome.results.size();
    j["error_count"] = outcome.errors.size();
    if (outcome.argmax) j["argmax"] = grid_result_json(outcome.results[*outcome.argmax]);
    auto& errors = j["errors"] = nlohmann::json::array();
    for (const auto& e : outcome.errors)
        errors.push_back({{"weighting", weighting_name(e.config.weighting)},
                          {"sn", e.config.sn},
                          {"layer_avg", e.config.layer_avg},
                          {"natsv_k", e.config.natsv_k},
                          {"message", e.message}});
    return j.dump(2) + "\n";
}

/// Line chart of rho against layer_avg for one weighting mode, one series
/// per (sn, natsv_k). Plain hand-built SVG, deterministic text output.
inline std::string report_svg(const std::vector<GridResult>& results, Weighting weighting) {
    struct SeriesKey {
        bool sn;
        int k;
        auto operator<=>(const SeriesKey&) const = default;
    };
    std::map<SeriesKey, std::vector<std::pair<int, double>>> series;
    double min_rho = 1.0, max_rho = -1.0;
    int max_layer = 1;
    for (const auto& r : results) {
        if (r.config.weighting != weighting) continue;
        series[{r.config.sn, r.config.natsv_k}].emplace_back(r.config.layer_avg, r.rho);
        min_rho = std::min(min_rho, r.rho);
        max_rho = std::max(max_rho, r.rho);
        max_layer = std::max(max_layer, r.config.layer_avg);
    }
    if (series.empty()) throw Error(Errc::empty_results, "no results for this weighting");
    min_rho = std::floor(min_rho * 10.0) / 10.0 - 0.05;
    max_rho = std::ceil(max_rho * 10.0) / 10.0 + 0.05;

    const double width = 640, height = 400, ml = 60, mr = 160, mt = 30, mb = 40;
    auto sx = [&](double layer) { return ml + (width - ml - mr) * layer / max_layer; };
    auto sy = [&](double rho) {
        return mt + (height - mt - mb) * (max_rho - rho) / (max_rho - min_rho);
    };
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    auto num = [](double v) { return eval_detail::format_double("%.2f", v); };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                      "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += "<text x=\"12\" y=\"18\">rho vs layer_avg (" + std::string(weighting_name(weighting)) +
           " weighting)</text>\n";
    svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(width - mr) +
           "\" y2=\"" + num(height - mb) + "\" stroke=\"#333\"/>\n";
    svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
           num(height - mb) + "\" stroke=\"#333\"/>\n";
    for (int l = 0; l <= max_layer; ++l) {
        svg += "<text x=\"" + num(sx(l) - 3) + "\" y=\"" + num(height - mb + 14) + "\">" +
               std::to_string(l) + "</text>\n";
    }
    for (double r = min_rho; r <= max_rho + 1e-9; r += (max_rho - min_rho) / 4.0) {
        svg += "<text x=\"" + num(ml - 40) + "\" y=\"" + num(sy(r) + 4) + "\">" +
               eval_detail::format_double("%.3f", r) + "</text>\n";
    }
    std::size_t color = 0;
    for (const auto& [key, points] : series) {
        auto sorted = points;
        std::sort(sorted.begin(), sorted.end());
        std::string path;
        for (const auto& [layer, rho] : sorted) {
            path += path.empty() ? "M" : " L";
            path += num(sx(layer)) + "," + num(sy(rho));
        }
        const char* c = palette[color % 8];
        svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + c + "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + num(width - mr + 10) + "\" y=\"" + num(mt + 16.0 * (color + 1)) +
               "\" fill=\"" + c + "\">sn=" + (key.sn ? "1" : "0") + " k=" + std::to_string(key.k) +
               "</text>\n";
        ++color;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace musim
