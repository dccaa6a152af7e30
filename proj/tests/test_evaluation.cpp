#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "musim/evaluation.hpp"
#include "musim/spearman.hpp"
#include "support/planted.hpp"

using namespace musim;

TEST(Cosine, BasicIdentities) {
    const std::vector<double> a = {1.0, 2.0, -3.0};
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    EXPECT_EQ(cosine_similarity({1.0, 0.0}, {0.0, 5.0}), 0.0);
    std::vector<double> doubled = a;
    for (auto& x : doubled) x *= 2.0;
    EXPECT_NEAR(cosine_similarity(a, doubled), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(a, [&] {
                    auto neg = a;
                    for (auto& x : neg) x = -x;
                    return neg;
                }()),
                -1.0, 1e-12);
}

TEST(Cosine, ZeroVectorWarnsAndReturnsZero) {
    WarningSink warnings;
    EXPECT_EQ(cosine_similarity({0.0, 0.0}, {1.0, 2.0}, &warnings), 0.0);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("zero vector"), std::string::npos);
    EXPECT_THROW(cosine_similarity({1.0}, {1.0, 2.0}), Error);
}

TEST(Spearman, MonotoneAndAntitone) {
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}).rho, 1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {30, 20, 10}).rho, -1.0);
}

TEST(Spearman, HandComputedPermutation) {
    // d^2 = 1+1+1+1: rho = 1 - 6*4 / (4*15) = 0.6; p follows from
    // I_x(1, 1/2) = 1 - sqrt(1-x), which gives exactly 0.4 here
    const SpearmanResult r = spearman({1, 2, 3, 4}, {2, 1, 4, 3});
    EXPECT_DOUBLE_EQ(r.rho, 0.6);
    EXPECT_NEAR(r.p_value, 0.4, 1e-12);
}

TEST(Spearman, TiedCaseMatchesFrozenReference) {
    // reference values computed with an independent statistics package
    const std::vector<double> x = {3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3, 5.8, 9.7, 9.3};
    const std::vector<double> y = {1.0, 2.0, 2.0, 4.4, 5.5, 6.1, 0.3, 0.2, 4.4, 8.0};
    const SpearmanResult r = spearman(x, y);
    EXPECT_NEAR(r.rho, 0.1768325556625402, 1e-12);
    EXPECT_NEAR(r.p_value, 0.6250493381834632, 1e-9);
}

TEST(Spearman, Errors) {
    try {
        spearman({1, 2}, {1, 2, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::length_mismatch);
    }
    try {
        spearman({1, 2}, {1, 2});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::too_short);
    }
    try {
        spearman({5, 5, 5}, {1, 2, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::constant_input);
    }
}

TEST(Spearman, AgreesWithBruteForceOracle) {
    Rng rng(300);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 3 + rng.below(198);
        std::vector<double> x(n), y(n);
        const bool with_ties = trial % 2 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = with_ties ? static_cast<double>(rng.below(8)) : rng.uniform();
            y[i] = with_ties ? static_cast<double>(rng.below(8)) : rng.uniform();
        }
        double expected;
        try {
            expected = testsupport::spearman_bruteforce(x, y);
        } catch (...) {
            continue;
        }
        try {
            EXPECT_NEAR(spearman(x, y).rho, expected, 1e-12) << "trial " << trial;
        } catch (const Error& e) {
            // brute force has no constant-input guard; only accept that case
            EXPECT_EQ(e.code(), Errc::constant_input);
        }
    }
}

TEST(Spearman, InvariantUnderStrictlyIncreasingTransform) {
    Rng rng(301);
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        x[i] = rng.uniform() * 4.0 - 2.0;
        y[i] = rng.uniform();
    }
    std::vector<double> tx = x;
    for (auto& v : tx) v = std::exp(0.7 * v) + 3.0;  // strictly increasing
    EXPECT_DOUBLE_EQ(spearman(x, y).rho, spearman(tx, y).rho);
}

TEST(Spearman, PValueMatchesBoostStudentsT) {
    for (double rho : {0.05, 0.2, 0.5, 0.9}) {
        for (std::size_t n : {5u, 10u, 50u, 2000u}) {
            const double dof = static_cast<double>(n) - 2.0;
            const double t = rho * std::sqrt(dof / (1.0 - rho * rho));
            boost::math::students_t_distribution<double> dist(dof);
            const double expected = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
            if (expected == 0.0) {
                // reference itself underflowed; ours must agree it is negligible
                EXPECT_LT(student_t_two_sided_p(t, dof), 1e-300);
            } else {
                EXPECT_NEAR(student_t_two_sided_p(t, dof) / expected, 1.0, 1e-10)
                    << "rho=" << rho << " n=" << n;
            }
        }
    }
    EXPECT_DOUBLE_EQ(student_t_two_sided_p(0.0, 10.0), 1.0);
}

namespace {

std::vector<WindowEmbedding> cluster_embeddings(int per_composer, double cross_angle) {
    // two composers at an angle: same-composer cosine 1, cross cosine known
    std::vector<WindowEmbedding> embeddings;
    for (int i = 0; i < per_composer; ++i) {
        embeddings.push_back({{"a" + std::to_string(i), 0}, {1.0, 0.0}});
        embeddings.push_back(
            {{"b" + std::to_string(i), 0}, {std::cos(cross_angle), std::sin(cross_angle)}});
    }
    return embeddings;
}

std::vector<LabeledPair> all_pairs_for(const std::vector<WindowEmbedding>& embeddings) {
    std::vector<LabeledPair> pairs;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            const bool same = embeddings[i].ref.piece_id[0] == embeddings[j].ref.piece_id[0];
            pairs.push_back({embeddings[i].ref, embeddings[j].ref, same ? 1 : 0});
        }
    return pairs;
}

}  // namespace

TEST(RunConfig, PerfectSeparationGivesRhoOne) {
    // binary similarities aligned with binary labels tie-rank to rho = 1,
    // confirmed by the brute-force tie-corrected oracle
    const auto embeddings = cluster_embeddings(4, 1.2);
    const auto pairs = all_pairs_for(embeddings);
    const GridResult result = run_config(embeddings, pairs, {1, false, 0, Weighting::uniform});
    std::vector<double> sims, labels;
    for (const auto& p : pairs) {
        const auto& a = embeddings[p.a.piece_id[0] == 'a' ? 0 : 1];  // placeholder, recomputed below
        (void)a;
        labels.push_back(p.label);
    }
    sims.clear();
    for (const auto& p : pairs) {
        auto find = [&](const WindowRef& r) {
            for (const auto& e : embeddings)
                if (e.ref == r) return e.vector;
            return std::vector<double>{};
        };
        sims.push_back(cosine_similarity(find(p.a), find(p.b)));
    }
    EXPECT_NEAR(result.rho, testsupport::spearman_bruteforce(sims, labels), 1e-12);
    EXPECT_GT(result.rho, 0.99);
    EXPECT_NEAR(result.rho, 1.0, 1e-12);
    EXPECT_LT(result.p_value, 1e-4);
    EXPECT_EQ(result.pair_count, pairs.size());
}

TEST(RunConfig, ShuffledLabelsAverageToZero) {
    Rng rng(400);
    const std::size_t n = 200;
    std::vector<double> sims(n);
    for (auto& s : sims) s = rng.uniform();
    std::vector<double> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 1.0 : 0.0;
    double sum_rho = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(labels[i], labels[rng.below(i + 1)]);
        sum_rho += spearman(sims, labels).rho;
    }
    EXPECT_LT(std::abs(sum_rho / 1000.0), 0.05);
}

TEST(RunConfig, ConstantSimilaritiesSurfaceError) {
    std::vector<WindowEmbedding> embeddings = {{{"a", 0}, {1.0, 0.0}},
                                               {{"a", 1}, {1.0, 0.0}},
                                               {{"b", 0}, {1.0, 0.0}},
                                               {{"b", 1}, {1.0, 0.0}}};
    std::vector<LabeledPair> pairs = {{{"a", 0}, {"a", 1}, 1},
                                      {{"a", 0}, {"b", 0}, 0},
                                      {{"a", 1}, {"b", 1}, 0}};
    try {
        run_config(embeddings, pairs, {1, false, 0, Weighting::uniform});
        FAIL() << "expected ConstantInput";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::constant_input);
    }
}

TEST(RunConfig, MissingEmbeddingNamesWindow) {
    std::vector<WindowEmbedding> embeddings = {{{"a", 0}, {1.0, 0.0}}, {{"b", 0}, {0.0, 1.0}}};
    std::vector<LabeledPair> pairs = {{{"a", 0}, {"ghost", 3}, 0}};
    try {
        run_config(embeddings, pairs, {1, false, 0, Weighting::uniform});
        FAIL() << "expected MissingEmbedding";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::missing_embedding);
        EXPECT_NE(std::string(e.what()).find("ghost[3]"), std::string::npos);
    }
}

TEST(EnumerateGrid, FullGridRowCountAgainstOracle) {
    // independent enumeration oracle for L = 12: layer_avg 1..12 pair with
    // all 3 weightings, layer_avg 0 only with uniform; x sn x natsv
    std::size_t expected = 0;
    for (int layer = 0; layer <= 12; ++layer)
        for (int w = 0; w < 3; ++w) {
            if (layer == 0 && w != 0) continue;
            expected += 2 * 3;  // sn x natsv
        }
    EXPECT_EQ(expected, 222u);
    const auto configs = enumerate_grid(default_grid_spec(12));
    EXPECT_EQ(configs.size(), expected);
    // set parity: no duplicates, layer 0 rows uniform only
    std::set<std::tuple<int, bool, int, int>> seen;
    for (const auto& c : configs) {
        EXPECT_TRUE(seen.insert({static_cast<int>(c.weighting), c.sn, c.layer_avg, c.natsv_k}).second);
        if (c.layer_avg == 0) EXPECT_EQ(c.weighting, Weighting::uniform);
    }
}

TEST(EnumerateGrid, SortedByWeightingSnLayerNatsv) {
    const auto configs = enumerate_grid(default_grid_spec(3));
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const auto key = [](const CalibrationConfig& c) {
            return std::make_tuple(static_cast<int>(c.weighting), c.sn, c.layer_avg, c.natsv_k);
        };
        EXPECT_LT(key(configs[i - 1]), key(configs[i]));
    }
}

TEST(GridSearch, SingleConfigMatchesRunConfig) {
    auto corpus = testsupport::planted_corpus(17, 2, 3, 2);
    SamplerConfig sampler;
    sampler.window = 4;
    sampler.stride = 2;
    sampler.positives = 10;
    sampler.negatives = 10;
    sampler.seed = 3;
    const auto pairs = sample_pairs(corpus.windows, sampler);

    GridSpec spec;
    spec.layer_avg_values = {1};
    spec.sn_values = {false};
    spec.natsv_values = {0};
    spec.weightings = {Weighting::uniform};
    const GridOutcome outcome = grid_search(corpus.activations, pairs, spec);
    ASSERT_EQ(outcome.results.size(), 1u);
    ASSERT_TRUE(outcome.errors.empty());

    std::vector<WindowEmbedding> embeddings;
    for (const auto& wa : corpus.activations)
        embeddings.push_back({wa.ref, raw_embedding(wa.acts, 1, Weighting::uniform)});
    const GridResult direct = run_config(embeddings, pairs, {1, false, 0, Weighting::uniform});
    EXPECT_DOUBLE_EQ(outcome.results[0].rho, direct.rho);
    EXPECT_DOUBLE_EQ(outcome.results[0].p_value, direct.p_value);
}

TEST(GridSearch, PlantedStructureRecovery) {
    // smaller sibling of the acceptance experiment
    auto corpus = testsupport::planted_corpus(2025);
    SamplerConfig sampler;
    sampler.window = 4;
    sampler.stride = 2;
    sampler.positives = 300;
    sampler.negatives = 300;
    sampler.seed = 8;
    const auto pairs = sample_pairs(corpus.windows, sampler);

    GridSpec spec = default_grid_spec(2);
    const GridOutcome outcome = grid_search(corpus.activations, pairs, spec);
    EXPECT_TRUE(outcome.errors.empty());
    ASSERT_TRUE(outcome.argmax.has_value());
    const GridResult& best = outcome.results[*outcome.argmax];
    EXPECT_TRUE(best.config.sn);

    auto rho_of = [&](bool sn, int k, int layer_avg, Weighting w) {
        for (const auto& r : outcome.results)
            if (r.config.sn == sn && r.config.natsv_k == k && r.config.layer_avg == layer_avg &&
                r.config.weighting == w)
                return r.rho;
        throw std::runtime_error("config not found");
    };
    // nulling the top direction helps when sn is off
    EXPECT_GT(rho_of(false, 1, 2, Weighting::uniform), rho_of(false, 0, 2, Weighting::uniform));
    // sn beats no-sn at matched layer_avg
    EXPECT_GT(rho_of(true, 0, 2, Weighting::uniform), rho_of(false, 0, 2, Weighting::uniform));
    EXPECT_GT(best.rho, 0.5);
    EXPECT_LT(best.p_value, 1e-4);
}

TEST(GridSearch, ScaleInvarianceOfWholeGrid) {
    auto corpus = testsupport::planted_corpus(31, 2, 4, 2);
    SamplerConfig sampler;
    sampler.window = 4;
    sampler.stride = 2;
    sampler.positives = 30;
    sampler.negatives = 30;
    sampler.seed = 12;
    const auto pairs = sample_pairs(corpus.windows, sampler);
    GridSpec spec = default_grid_spec(2);

    const GridOutcome base = grid_search(corpus.activations, pairs, spec);
    for (auto& wa : corpus.activations)
        for (auto& x : wa.acts.data) x *= 4.0f;  // exact scaling
    const GridOutcome scaled = grid_search(corpus.activations, pairs, spec);
    ASSERT_EQ(base.results.size(), scaled.results.size());
    for (std::size_t i = 0; i < base.results.size(); ++i)
        EXPECT_NEAR(base.results[i].rho, scaled.results[i].rho, 1e-9);
}

TEST(GridSearch, AntiMonotoneSimilaritiesGiveNegativeRho) {
    // composers whose cross-pair cosine exceeds their same-pair cosine
    std::vector<WindowEmbedding> embeddings;
    std::vector<LabeledPair> pairs;
    // composer a: two orthogonal vectors; composer b: two orthogonal vectors,
    // each nearly parallel to one of a's
    embeddings.push_back({{"a0", 0}, {1.0, 0.0, 0.0}});
    embeddings.push_back({{"a1", 0}, {0.0, 1.0, 0.0}});
    embeddings.push_back({{"b0", 0}, {0.99, 0.1, 0.0}});
    embeddings.push_back({{"b1", 0}, {0.1, 0.99, 0.0}});
    pairs.push_back({{"a0", 0}, {"a1", 0}, 1});
    pairs.push_back({{"b0", 0}, {"b1", 0}, 1});
    pairs.push_back({{"a0", 0}, {"b0", 0}, 0});
    pairs.push_back({{"a1", 0}, {"b1", 0}, 0});
    const GridResult r = run_config(embeddings, pairs, {1, false, 0, Weighting::uniform});
    EXPECT_LT(r.rho, 0.0);
}

TEST(Report, SingleResultTwoLineCsv) {
    GridResult r;
    r.config = {8, true, 0, Weighting::uniform};
    r.rho = 0.223;
    r.p_value = 2.5e-9;
    r.pair_count = 2000;
    const std::string csv = report_csv({r});
    EXPECT_EQ(csv,
              "weighting,sn,layer_avg,natsv_k,rho,p_value,pairs\n"
              "uniform,1,8,0,0.223000,2.500000e-09,2000\n");
}

TEST(Report, DeterministicBytes) {
    auto corpus = testsupport::planted_corpus(55, 2, 3, 2);
    SamplerConfig sampler;
    sampler.window = 4;
    sampler.stride = 2;
    sampler.positives = 20;
    sampler.negatives = 20;
    sampler.seed = 2;
    const auto pairs = sample_pairs(corpus.windows, sampler);
    const GridSpec spec = default_grid_spec(2);
    const GridOutcome a = grid_search(corpus.activations, pairs, spec);
    const GridOutcome b = grid_search(corpus.activations, pairs, spec);
    EXPECT_EQ(report_csv(a.results), report_csv(b.results));
    EXPECT_EQ(summary_json(a), summary_json(b));
    EXPECT_EQ(report_svg(a.results, Weighting::uniform), report_svg(b.results, Weighting::uniform));
}

TEST(Report, EmptyResultsRejected) {
    EXPECT_THROW(report_csv({}), Error);
    EXPECT_THROW(report_svg({}, Weighting::uniform), Error);
}

TEST(Report, SummaryCarriesArgmax) {
    auto corpus = testsupport::planted_corpus(56, 2, 3, 2);
    SamplerConfig sampler;
    sampler.window = 4;
    sampler.stride = 2;
    sampler.positives = 15;
    sampler.negatives = 15;
    sampler.seed = 4;
    const auto pairs = sample_pairs(corpus.windows, sampler);
    const GridOutcome outcome = grid_search(corpus.activations, pairs, default_grid_spec(2));
    const std::string summary = summary_json(outcome);
    EXPECT_NE(summary.find("\"argmax\""), std::string::npos);
    EXPECT_NE(summary.find("\"rho\""), std::string::npos);
    const std::string svg = report_svg(outcome.results, Weighting::linear);
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("sn=1 k=2"), std::string::npos);
}

TEST(Argmax, StableUnderResultPermutation) {
    auto corpus = testsupport::planted_corpus(57, 3, 3, 2);
    SamplerConfig sampler;
    sampler.window = 4;
    sampler.stride = 2;
    sampler.positives = 40;
    sampler.negatives = 40;
    sampler.seed = 6;
    const auto pairs = sample_pairs(corpus.windows, sampler);
    const GridOutcome outcome = grid_search(corpus.activations, pairs, default_grid_spec(2));
    ASSERT_TRUE(outcome.argmax.has_value());
    const GridResult best = outcome.results[*outcome.argmax];

    // recompute the argmax over a reversed copy using the same tie-break
    auto reversed = outcome.results;
    std::reverse(reversed.begin(), reversed.end());
    std::size_t best_idx = 0;
    for (std::size_t i = 1; i < reversed.size(); ++i) {
        const auto& a = reversed[i];
        const auto& b = reversed[best_idx];
        const auto key = [](const GridResult& r) {
            return std::make_tuple(-r.rho, r.config.layer_avg, r.config.natsv_k, r.config.sn,
                                   static_cast<int>(r.config.weighting));
        };
        if (key(a) < key(b)) best_idx = i;
    }
    EXPECT_EQ(reversed[best_idx].config, best.config);
}
