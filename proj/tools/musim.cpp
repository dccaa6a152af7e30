// musim: end-to-end pipeline driver.
//
//   vocab     build an aggregated vocabulary from a corpus manifest
//   tokenize  encode corpus pieces as token-id lines using a vocabulary
//   embed     run the transformer over sliding windows, write .mact files
//   pairs     sample composer-labeled window pairs
//   grid      score every calibration combination and write reports
//   all       the whole pipeline, plus an artifact manifest with hashes
//
// Options can come from an INI config file (--config, or MUSIM_CONFIG);
// sections map to dotted option groups, e.g. [sampler] positives=1000.
// Logs go to stderr, data only to files.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "musim/musim.hpp"

namespace fs = std::filesystem;
using namespace musim;

namespace {

struct Options {
    std::string manifest;
    std::string out = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned jobs = 1;

    TokenizerConfig tokenizer;

    std::uint64_t vocab_target = 2000;
    std::uint64_t vocab_max_word_events = 8;

    ModelShape model;  // defaults L=12 T=1024 H=512 heads=8; vocab set from data
    std::uint32_t model_vocab_override = 0;
    std::uint64_t weights_seed = 1;
    std::string weights_file;
    std::string save_weights;
    bool no_final_norm = false;

    std::uint32_t window = 0;  // 0: use model context
    std::uint32_t stride = 0;  // 0: window / 2
    std::uint64_t positives = 1000;
    std::uint64_t negatives = 1000;
    std::uint64_t pairs_seed = 2;
    std::string policy = "none";

    std::string grid_layer_avg;  // comma list; empty: 0..layers
    std::string grid_natsv = "0,1,2";
    std::string grid_sn = "both";
    std::string grid_weightings = "uniform,linear,inverse_linear";
    bool no_svg = false;
    bool dump_embeddings = false;

    std::string vocab_file;
    std::string tokens_file;
    std::string activations_dir;
    std::string pairs_file;
};

void log_line(const std::string& message) { std::cerr << "musim: " << message << "\n"; }

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(Errc::io_failure, "write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_hex(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_failure, "cannot hash " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

void apply_seed_overrides(Options& opt) {
    if (!opt.seed_set) return;
    opt.weights_seed = derive_seed(opt.seed, "weights");
    opt.pairs_seed = derive_seed(opt.seed, "pairs");
}

SamplerConfig sampler_config(const Options& opt) {
    SamplerConfig config;
    config.window = opt.window ? opt.window : opt.model.max_context;
    if (opt.stride) {
        config.stride = opt.stride;
    } else {
        if (config.window % 2 != 0)
            throw Error(Errc::bad_config, "default stride is window/2; give --stride for odd windows");
        config.stride = config.window / 2;
    }
    config.positives = opt.positives;
    config.negatives = opt.negatives;
    config.seed = opt.pairs_seed;
    config.policy = exclusion_policy_from_name(opt.policy);
    config.validate();
    return config;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        std::string part = text.substr(start, comma - start);
        while (!part.empty() && part.front() == ' ') part.erase(part.begin());
        while (!part.empty() && part.back() == ' ') part.pop_back();
        if (!part.empty()) parts.push_back(part);
        start = comma + 1;
    }
    return parts;
}

std::vector<int> int_list(const std::string& text, const char* what) {
    std::vector<int> values;
    for (const auto& part : split_list(text)) {
        try {
            values.push_back(std::stoi(part));
        } catch (const std::exception&) {
            throw Error(Errc::bad_config, std::string(what) + ": bad integer '" + part + "'");
        }
    }
    return values;
}

GridSpec grid_spec(const Options& opt, std::uint32_t layers) {
    GridSpec spec;
    spec.layer_avg_values = int_list(opt.grid_layer_avg, "grid layer-avg");
    if (spec.layer_avg_values.empty())
        for (std::uint32_t v = 0; v <= layers; ++v) spec.layer_avg_values.push_back(static_cast<int>(v));
    spec.natsv_values = int_list(opt.grid_natsv, "grid natsv");
    if (opt.grid_sn == "both") spec.sn_values = {false, true};
    else if (opt.grid_sn == "on") spec.sn_values = {true};
    else if (opt.grid_sn == "off") spec.sn_values = {false};
    else throw Error(Errc::bad_config, "grid sn must be both, on or off");
    spec.weightings.clear();
    for (const auto& name : split_list(opt.grid_weightings))
        spec.weightings.push_back(weighting_from_name(name));
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// pipeline stages (shared between the individual subcommands and `all`)

std::vector<std::vector<PerformanceEvent>> corpus_events(const std::vector<Piece>& pieces,
                                                         const TokenizerConfig& config) {
    std::vector<std::vector<PerformanceEvent>> events;
    events.reserve(pieces.size());
    for (const auto& piece : pieces) events.push_back(events_from_notes(piece, config));
    return events;
}

Vocabulary stage_vocab(const Options& opt, const std::vector<Piece>& pieces) {
    const auto events = corpus_events(pieces, opt.tokenizer);
    Vocabulary vocab = build_vocabulary(events, opt.tokenizer, opt.vocab_target,
                                        opt.vocab_max_word_events);
    log_line("vocabulary: " + std::to_string(vocab.size()) + " words (" +
             std::to_string(vocab.merge_rules.size()) + " merges)");
    return vocab;
}

std::vector<TokenizedPiece> stage_tokenize(const Options& opt, const std::vector<Piece>& pieces,
                                           const Vocabulary& vocab) {
    std::vector<TokenizedPiece> tokens;
    tokens.reserve(pieces.size());
    for (const auto& piece : pieces) {
        TokenizedPiece t;
        t.piece_id = piece.piece_id;
        t.composer_id = piece.composer_id;
        t.ids = tokenize(events_from_notes(piece, opt.tokenizer), vocab);
        tokens.push_back(std::move(t));
    }
    return tokens;
}

ModelWeights stage_weights(const Options& opt, std::uint32_t vocab_size) {
    if (!opt.weights_file.empty()) {
        ModelWeights w = read_weights_file(opt.weights_file);
        if (w.shape.vocab < vocab_size)
            throw Error(Errc::id_out_of_range,
                        "weights vocabulary " + std::to_string(w.shape.vocab) +
                            " smaller than token vocabulary " + std::to_string(vocab_size));
        return w;
    }
    ModelShape shape = opt.model;
    shape.vocab = opt.model_vocab_override ? opt.model_vocab_override : vocab_size;
    if (shape.vocab < vocab_size)
        throw Error(Errc::bad_config, "model.vocab smaller than the token vocabulary");
    shape.validate();
    log_line("random weights: L=" + std::to_string(shape.layers) + " T=" +
             std::to_string(shape.max_context) + " H=" + std::to_string(shape.hidden) +
             " V=" + std::to_string(shape.vocab) + " seed=" + std::to_string(opt.weights_seed));
    return random_weights(shape, opt.weights_seed);
}

std::string mact_name(const WindowRef& ref) {
    return ref.piece_id + "_" + std::to_string(ref.window_index) + ".mact";
}

WindowRef ref_from_mact_name(const std::string& stem) {
    const auto sep = stem.rfind('_');
    if (sep == std::string::npos)
        throw Error(Errc::bad_field, "activation filename without window index: " + stem);
    try {
        return {stem.substr(0, sep), static_cast<std::uint32_t>(std::stoul(stem.substr(sep + 1)))};
    } catch (const std::exception&) {
        throw Error(Errc::bad_field, "bad window index in activation filename: " + stem);
    }
}

void stage_embed(const Options& opt, const std::vector<Window>& windows, const ModelWeights& weights,
                 const fs::path& dir) {
    fs::create_directories(dir);
    const ForwardOptions fopts{!opt.no_final_norm};
    const unsigned jobs = std::max(1u, opt.jobs);
    std::vector<std::exception_ptr> failures(jobs);
    auto work = [&](unsigned worker) {
        try {
            for (std::size_t i = worker; i < windows.size(); i += jobs) {
                const Window& w = windows[i];
                LayerActivations acts = forward(w.ids, weights, fopts);
                write_activations_file(acts, dir / mact_name(w.ref()));
            }
        } catch (...) {
            failures[worker] = std::current_exception();
        }
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(work, j);
        for (auto& t : threads) t.join();
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    log_line("embedded " + std::to_string(windows.size()) + " windows -> " + dir.string());
}

std::vector<WindowActivations> load_activations_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(Errc::io_failure, "not a directory: " + dir.string());
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".mact") names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    std::vector<WindowActivations> out;
    out.reserve(names.size());
    for (const auto& name : names) {
        WindowActivations wa;
        wa.ref = ref_from_mact_name(name.substr(0, name.size() - 5));
        wa.acts = read_activations_file(dir / name);
        out.push_back(std::move(wa));
    }
    return out;
}

int stage_grid(const Options& opt, const std::vector<WindowActivations>& activations,
               const std::vector<LabeledPair>& pairs, const fs::path& out_dir) {
    if (pairs.empty())
        throw Error(Errc::insufficient_pairs, "pairs file contains no pairs");
    const GridSpec spec = grid_spec(opt, activations.empty() ? 0 : activations.front().acts.layers);
    WarningSink warnings;
    const GridOutcome outcome = grid_search(activations, pairs, spec, &warnings);
    for (const auto& w : warnings) log_line("warning: " + w);

    fs::create_directories(out_dir);
    write_text_file(out_dir / "report.csv", report_csv(outcome.results));
    write_text_file(out_dir / "summary.json", summary_json(outcome));
    if (!opt.no_svg) {
        for (Weighting w : spec.weightings) {
            bool has_rows = false;
            for (const auto& r : outcome.results) has_rows |= r.config.weighting == w;
            if (has_rows)
                write_text_file(out_dir / (std::string("report_") + weighting_name(w) + ".svg"),
                                report_svg(outcome.results, w));
        }
    }
    if (opt.dump_embeddings && outcome.argmax) {
        // re-derive the argmax config's calibrated embeddings and dump them
        const CalibrationConfig best = outcome.results[*outcome.argmax].config;
        std::vector<std::vector<double>> raws;
        raws.reserve(activations.size());
        for (const auto& wa : activations)
            raws.push_back(raw_embedding(wa.acts, best.layer_avg, best.weighting));
        const std::vector<std::vector<double>>* base = &raws;
        std::vector<std::vector<double>> normalized;
        NormalizationStats stats;
        if (best.sn) {
            stats = fit_sn(raws);
            for (const auto& r : raws) normalized.push_back(apply_sn(r, stats));
            base = &normalized;
        }
        PrincipalDirections dirs;
        std::vector<std::vector<double>> finals = *base;
        if (best.natsv_k > 0) {
            dirs = fit_natsv(*base, best.natsv_k);
            for (auto& v : finals) v = apply_natsv(v, dirs);
        }
        std::ofstream memb(out_dir / "embeddings.memb", std::ios::binary);
        write_embedding_dump(finals, memb);
        nlohmann::json sidecar;
        sidecar["config"] = grid_result_json(outcome.results[*outcome.argmax]);
        sidecar["windows"] = nlohmann::json::array();
        for (const auto& wa : activations)
            sidecar["windows"].push_back(wa.ref.piece_id + "_" + std::to_string(wa.ref.window_index));
        if (best.sn) {
            sidecar["sn"] = {{"mu", stats.mu}, {"sigma", stats.sigma}};
        }
        if (best.natsv_k > 0) {
            sidecar["natsv"] = {{"mean", dirs.mean}, {"components", dirs.components}};
        }
        write_text_file(out_dir / "embeddings.json", sidecar.dump(2) + "\n");
    }
    if (outcome.argmax) {
        const GridResult& best = outcome.results[*outcome.argmax];
        log_line("argmax: weighting=" + std::string(weighting_name(best.config.weighting)) +
                 " sn=" + (best.config.sn ? "1" : "0") +
                 " layer_avg=" + std::to_string(best.config.layer_avg) +
                 " natsv_k=" + std::to_string(best.config.natsv_k) +
                 " rho=" + std::to_string(best.rho));
    }
    if (!outcome.errors.empty()) {
        for (const auto& e : outcome.errors)
            log_line("config error: layer_avg=" + std::to_string(e.config.layer_avg) + " sn=" +
                     (e.config.sn ? "1" : "0") + " natsv_k=" + std::to_string(e.config.natsv_k) +
                     ": " + e.message);
        return 1;
    }
    return 0;
}

// join composer ids from the manifest onto a token file
void join_composers(std::vector<TokenizedPiece>& tokens, const CorpusManifest& manifest) {
    std::map<std::string, std::string> composer_of;
    for (const auto& e : manifest.entries) composer_of[e.piece_id] = e.composer_id;
    for (auto& t : tokens) {
        auto it = composer_of.find(t.piece_id);
        if (it == composer_of.end())
            throw Error(Errc::bad_manifest, "piece " + t.piece_id + " missing from manifest");
        t.composer_id = it->second;
    }
}

// ---------------------------------------------------------------------------
// subcommand drivers

int cmd_vocab(const Options& opt) {
    const auto manifest = read_manifest(opt.manifest);
    WarningSink warnings;
    const auto pieces = load_corpus(manifest, fs::path(opt.manifest).parent_path(), &warnings);
    for (const auto& w : warnings) log_line("warning: " + w);
    const Vocabulary vocab = stage_vocab(opt, pieces);
    const fs::path out = opt.vocab_file.empty() ? fs::path(opt.out) / "vocab.json" : fs::path(opt.vocab_file);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    write_text_file(out, vocabulary_to_json(vocab));
    log_line("wrote " + out.string());
    return 0;
}

int cmd_tokenize(const Options& opt) {
    const auto manifest = read_manifest(opt.manifest);
    WarningSink warnings;
    const auto pieces = load_corpus(manifest, fs::path(opt.manifest).parent_path(), &warnings);
    for (const auto& w : warnings) log_line("warning: " + w);
    const Vocabulary vocab = vocabulary_from_json(read_text_file(opt.vocab_file));
    const auto tokens = stage_tokenize(opt, pieces, vocab);
    const fs::path out = opt.tokens_file.empty() ? fs::path(opt.out) / "tokens.jsonl" : fs::path(opt.tokens_file);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    write_text_file(out, token_lines_to_string(tokens));
    log_line("wrote " + out.string());
    return 0;
}

int cmd_embed(Options opt) {
    apply_seed_overrides(opt);
    auto tokens = token_lines_from_string(read_text_file(opt.tokens_file));
    std::uint32_t max_id = 0;
    for (const auto& t : tokens)
        for (auto id : t.ids) max_id = std::max(max_id, id);
    std::uint32_t vocab_size = max_id + 1;
    if (!opt.vocab_file.empty())
        vocab_size = static_cast<std::uint32_t>(
            vocabulary_from_json(read_text_file(opt.vocab_file)).size());
    const ModelWeights weights = stage_weights(opt, vocab_size);
    if (!opt.save_weights.empty()) write_weights_file(weights, opt.save_weights);

    Options windowed = opt;
    windowed.model = weights.shape;
    const SamplerConfig sampler = sampler_config(windowed);
    if (sampler.window > weights.shape.max_context)
        throw Error(Errc::sequence_too_long, "window exceeds the model's max context");
    const auto windows = make_windows(tokens, sampler);
    stage_embed(opt, windows, weights, fs::path(opt.out) / "activations");
    return 0;
}

int cmd_pairs(Options opt) {
    apply_seed_overrides(opt);
    auto tokens = token_lines_from_string(read_text_file(opt.tokens_file));
    join_composers(tokens, read_manifest(opt.manifest));
    const SamplerConfig sampler = sampler_config(opt);
    const auto windows = make_windows(tokens, sampler);
    const auto pairs = sample_pairs(windows, sampler);
    fs::create_directories(opt.out);
    const fs::path out = opt.pairs_file.empty() ? fs::path(opt.out) / "pairs.csv" : fs::path(opt.pairs_file);
    std::ofstream os(out, std::ios::binary);
    if (!os) throw Error(Errc::io_failure, "cannot write " + out.string());
    write_pairs_csv(pairs, os);
    write_text_file(out.string() + ".json", sampler_sidecar_json(sampler));
    log_line("wrote " + out.string() + " (" + std::to_string(pairs.size()) + " pairs)");
    return 0;
}

int cmd_grid(const Options& opt) {
    const auto activations = load_activations_dir(opt.activations_dir);
    std::ifstream is(opt.pairs_file);
    if (!is) throw Error(Errc::io_failure, "cannot open " + opt.pairs_file);
    const auto pairs = read_pairs_csv(is);
    return stage_grid(opt, activations, pairs, opt.out);
}

int cmd_all(Options opt) {
    apply_seed_overrides(opt);
    const fs::path out_dir(opt.out);
    fs::create_directories(out_dir);

    const auto manifest = read_manifest(opt.manifest);
    WarningSink warnings;
    const auto pieces = load_corpus(manifest, fs::path(opt.manifest).parent_path(), &warnings);
    for (const auto& w : warnings) log_line("warning: " + w);

    const Vocabulary vocab = stage_vocab(opt, pieces);
    write_text_file(out_dir / "vocab.json", vocabulary_to_json(vocab));

    auto tokens = stage_tokenize(opt, pieces, vocab);
    write_text_file(out_dir / "tokens.jsonl", token_lines_to_string(tokens));

    const ModelWeights weights = stage_weights(opt, static_cast<std::uint32_t>(vocab.size()));
    write_weights_file(weights, out_dir / "weights.mwts");

    Options windowed = opt;
    windowed.model = weights.shape;
    const SamplerConfig sampler = sampler_config(windowed);
    if (sampler.window > weights.shape.max_context)
        throw Error(Errc::sequence_too_long, "window exceeds the model's max context");
    const auto windows = make_windows(tokens, sampler);
    stage_embed(opt, windows, weights, out_dir / "activations");

    const auto pairs = sample_pairs(windows, sampler);
    {
        std::ofstream os(out_dir / "pairs.csv", std::ios::binary);
        if (!os) throw Error(Errc::io_failure, "cannot write pairs.csv");
        write_pairs_csv(pairs, os);
    }
    write_text_file(out_dir / "pairs.csv.json", sampler_sidecar_json(sampler));

    std::vector<WindowActivations> activations;
    activations.reserve(windows.size());
    for (const auto& w : windows) {
        WindowActivations wa;
        wa.ref = w.ref();
        wa.acts = read_activations_file(out_dir / "activations" / mact_name(w.ref()));
        activations.push_back(std::move(wa));
    }
    const int grid_status = stage_grid(opt, activations, pairs, out_dir);

    // artifact manifest with content hashes, deterministic path order
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir))
        if (entry.is_regular_file() && entry.path().filename() != "artifacts.json")
            files.push_back(fs::relative(entry.path(), out_dir));
    std::sort(files.begin(), files.end());
    nlohmann::json artifacts = nlohmann::json::array();
    for (const auto& f : files)
        artifacts.push_back({{"path", f.generic_string()},
                             {"sha256", sha256_hex(out_dir / f)},
                             {"bytes", fs::file_size(out_dir / f)}});
    nlohmann::json j;
    j["artifacts"] = artifacts;
    write_text_file(out_dir / "artifacts.json", j.dump(2) + "\n");
    log_line("wrote " + (out_dir / "artifacts.json").string());
    return grid_status;
}

// Minimal INI reader: `[section]` plus `key=value` becomes the synthetic
// flag `--section-key value`. Returned args are fed to CLI11 before the real
// command line, so explicit flags override file values.
std::vector<std::string> config_file_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_failure, "cannot open config " + path);
    std::vector<std::string> args;
    std::string line, section;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error(Errc::bad_config, path + ":" + std::to_string(line_no) + ": unclosed section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::bad_config, path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos)
            value = trim(value.substr(0, hash));
        if (key.empty())
            throw Error(Errc::bad_config, path + ":" + std::to_string(line_no) + ": empty key");
        const std::string name = section.empty() ? key : section + "-" + key;
        static const std::set<std::string> kFlags = {"model-no-final-norm", "grid-no-svg",
                                                     "grid-dump-embeddings"};
        if (kFlags.count(name)) {
            if (value == "true" || value == "1" || value == "yes") args.push_back("--" + name);
            else if (value != "false" && value != "0" && value != "no")
                throw Error(Errc::bad_config, path + ":" + std::to_string(line_no) + ": flag wants a boolean");
        } else {
            args.push_back("--" + name);
            args.push_back(value);
        }
    }
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"symbolic-music similarity: embedding calibration evaluation pipeline"};
    app.require_subcommand(1);
    Options opt;

    std::string config_path;
    if (const char* env = std::getenv("MUSIM_CONFIG")) config_path = env;
    app.add_option("--config", config_path,
                   "INI config file ([section] key=value; flags override it); "
                   "default from MUSIM_CONFIG");

    auto add = [&](const std::string& name, auto& target, const std::string& desc = "") {
        return app.add_option(name, target, desc)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    };

    add("--manifest", opt.manifest, "corpus manifest CSV (path,piece_id,composer_id)");
    add("--out", opt.out, "output directory")->capture_default_str();
    auto* seed_opt = add("--seed", opt.seed, "master seed; derives every stage seed");
    add("--jobs", opt.jobs, "worker threads for embedding")->capture_default_str();

    add("--tokenizer-time-shift-ms", opt.tokenizer.time_shift_bin_ms)->capture_default_str();
    add("--tokenizer-max-time-shift-bins", opt.tokenizer.max_time_shift_bins)->capture_default_str();
    add("--tokenizer-velocity-bins", opt.tokenizer.velocity_bins)->capture_default_str();

    add("--vocab-target-size", opt.vocab_target)->capture_default_str();
    add("--vocab-max-word-events", opt.vocab_max_word_events)->capture_default_str();
    add("--vocab-file", opt.vocab_file, "vocabulary JSON path");

    add("--model-layers", opt.model.layers)->capture_default_str();
    add("--model-context", opt.model.max_context)->capture_default_str();
    add("--model-hidden", opt.model.hidden)->capture_default_str();
    add("--model-heads", opt.model.heads)->capture_default_str();
    add("--model-vocab", opt.model_vocab_override, "0: size of the token vocabulary");
    add("--model-weights-seed", opt.weights_seed)->capture_default_str();
    add("--model-weights", opt.weights_file, "load weights from an MWTS file");
    add("--model-save-weights", opt.save_weights, "also write the weights used");
    app.add_flag("--model-no-final-norm", opt.no_final_norm,
                 "store the last layer without the final layer norm");

    add("--sampler-window", opt.window, "0: model context")->capture_default_str();
    add("--sampler-stride", opt.stride, "0: window/2")->capture_default_str();
    add("--sampler-positives", opt.positives)->capture_default_str();
    add("--sampler-negatives", opt.negatives)->capture_default_str();
    add("--sampler-seed", opt.pairs_seed)->capture_default_str();
    add("--sampler-policy", opt.policy, "none | same_piece | overlapping_windows")
        ->capture_default_str();

    add("--grid-layer-avg", opt.grid_layer_avg, "comma list; empty: 0..layers");
    add("--grid-natsv", opt.grid_natsv)->capture_default_str();
    add("--grid-sn", opt.grid_sn, "both | on | off")->capture_default_str();
    add("--grid-weightings", opt.grid_weightings)->capture_default_str();
    app.add_flag("--grid-no-svg", opt.no_svg, "skip the SVG charts");
    app.add_flag("--grid-dump-embeddings", opt.dump_embeddings,
                 "dump the argmax config's calibrated embeddings (MEMB + sidecar)");

    add("--tokens", opt.tokens_file, "token JSONL path");
    add("--activations", opt.activations_dir, "directory of .mact files");
    add("--pairs", opt.pairs_file, "pairs CSV path");

    auto* vocab_cmd = app.add_subcommand("vocab", "build an aggregated vocabulary");
    auto* tokenize_cmd = app.add_subcommand("tokenize", "encode the corpus as token ids");
    auto* embed_cmd = app.add_subcommand("embed", "write per-window activation files");
    auto* pairs_cmd = app.add_subcommand("pairs", "sample composer-labeled window pairs");
    auto* grid_cmd = app.add_subcommand("grid", "score all calibration combinations");
    auto* all_cmd = app.add_subcommand("all", "full pipeline with artifact manifest");
    for (auto* sub : {vocab_cmd, tokenize_cmd, embed_cmd, pairs_cmd, grid_cmd, all_cmd})
        sub->fallthrough();

    // pre-scan for --config so file values parse before (and lose to) flags
    std::vector<std::string> raw(argv + 1, argv + argc);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == "--config" && i + 1 < raw.size()) config_path = raw[i + 1];
        else if (raw[i].rfind("--config=", 0) == 0) config_path = raw[i].substr(9);
    }
    std::vector<std::string> args;
    try {
        if (!config_path.empty()) args = config_file_args(config_path);
    } catch (const Error& e) {
        std::cerr << "musim: error: " << e.what() << "\n";
        return 1;
    }
    args.insert(args.end(), raw.begin(), raw.end());

    try {
        // CLI11 wants reversed argument order for the vector overload
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    opt.seed_set = seed_opt->count() > 0;

    try {
        if (vocab_cmd->parsed()) return cmd_vocab(opt);
        if (tokenize_cmd->parsed()) return cmd_tokenize(opt);
        if (embed_cmd->parsed()) return cmd_embed(opt);
        if (pairs_cmd->parsed()) return cmd_pairs(opt);
        if (grid_cmd->parsed()) return cmd_grid(opt);
        if (all_cmd->parsed()) return cmd_all(opt);
    } catch (const Error& e) {
        std::cerr << "musim: error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "musim: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
