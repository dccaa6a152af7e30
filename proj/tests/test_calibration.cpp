#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "musim/calibration.hpp"
#include "musim/linalg.hpp"
#include "musim/prng.hpp"

using namespace musim;

namespace {

LayerActivations make_acts(std::uint32_t layers, std::uint32_t n, std::uint32_t hidden) {
    LayerActivations acts;
    acts.layers = layers;
    acts.max_context = n;
    acts.seq_len = n;
    acts.hidden = hidden;
    acts.data.assign(static_cast<std::size_t>(layers) * n * hidden, 0.0f);
    return acts;
}

LayerActivations random_acts(Rng& rng, std::uint32_t layers, std::uint32_t n, std::uint32_t hidden) {
    LayerActivations acts = make_acts(layers, n, hidden);
    for (auto& x : acts.data) x = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    return acts;
}

std::vector<std::vector<double>> random_vectors(Rng& rng, std::size_t count, std::size_t dim) {
    std::vector<std::vector<double>> out(count, std::vector<double>(dim));
    for (auto& v : out)
        for (auto& x : v) x = rng.uniform() * 4.0 - 2.0;
    return out;
}

}  // namespace

TEST(JacobiEigen, TwoByTwoHandComputed) {
    // [[2,1],[1,2]]: eigenvalues 3 and 1, eigenvectors (1,1)/sqrt2, (1,-1)/sqrt2
    SymmetricEigen e = jacobi_eigen({2.0, 1.0, 1.0, 2.0}, 2);
    EXPECT_NEAR(e.values[0], 3.0, 1e-12);
    EXPECT_NEAR(e.values[1], 1.0, 1e-12);
    EXPECT_NEAR(std::abs(e.vectors[0][0]), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(std::abs(e.vectors[0][1]), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(PoolLayer, SingleTokenReturnsThatToken) {
    LayerActivations acts = make_acts(2, 1, 3);
    acts.at(1, 0, 0) = 0.25f;
    acts.at(1, 0, 1) = -2.0f;
    acts.at(1, 0, 2) = 7.5f;
    for (Weighting w : {Weighting::uniform, Weighting::linear, Weighting::inverse_linear}) {
        const auto pooled = pool_layer(acts, 1, w);
        EXPECT_EQ(pooled, (std::vector<double>{0.25, -2.0, 7.5})) << weighting_name(w);
    }
}

TEST(PoolLayer, TwoTokenHandComputedWeights) {
    // h1 = (1, 0), h2 = (0, 1)
    LayerActivations acts = make_acts(1, 2, 2);
    acts.at(0, 0, 0) = 1.0f;
    acts.at(0, 1, 1) = 1.0f;
    const auto linear = pool_layer(acts, 0, Weighting::linear);
    EXPECT_DOUBLE_EQ(linear[0], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(linear[1], 2.0 / 3.0);
    const auto inverse = pool_layer(acts, 0, Weighting::inverse_linear);
    EXPECT_DOUBLE_EQ(inverse[0], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(inverse[1], 1.0 / 3.0);
    const auto uniform = pool_layer(acts, 0, Weighting::uniform);
    EXPECT_DOUBLE_EQ(uniform[0], 0.5);
    EXPECT_DOUBLE_EQ(uniform[1], 0.5);
}

TEST(PoolLayer, ThreeTokenHandComputedWeights) {
    // positions carry 10, 20, 30 in one dimension
    LayerActivations acts = make_acts(1, 3, 1);
    acts.at(0, 0, 0) = 10.0f;
    acts.at(0, 1, 0) = 20.0f;
    acts.at(0, 2, 0) = 30.0f;
    // linear: (1*10 + 2*20 + 3*30) / 6 = 140/6; inverse: (3*10 + 2*20 + 1*30) / 6 = 100/6
    EXPECT_DOUBLE_EQ(pool_layer(acts, 0, Weighting::linear)[0], 140.0 / 6.0);
    EXPECT_DOUBLE_EQ(pool_layer(acts, 0, Weighting::inverse_linear)[0], 100.0 / 6.0);
    EXPECT_DOUBLE_EQ(pool_layer(acts, 0, Weighting::uniform)[0], 20.0);
}

TEST(PositionWeights, SumToOneUpTo1024) {
    for (std::size_t n : {1u, 2u, 3u, 7u, 64u, 1000u, 1024u}) {
        for (Weighting w : {Weighting::uniform, Weighting::linear, Weighting::inverse_linear}) {
            const auto weights = position_weights(w, n);
            double sum = 0.0;
            for (double x : weights) sum += x;
            EXPECT_NEAR(sum, 1.0, 1e-12) << weighting_name(w) << " n=" << n;
        }
    }
}

TEST(PoolLayer, ConstantSequencePoolsToTheConstant) {
    LayerActivations acts = make_acts(1, 17, 4);
    for (std::uint32_t t = 0; t < 17; ++t)
        for (std::uint32_t d = 0; d < 4; ++d) acts.at(0, t, d) = 0.5f + 0.25f * d;
    for (Weighting w : {Weighting::uniform, Weighting::linear, Weighting::inverse_linear}) {
        const auto pooled = pool_layer(acts, 0, w);
        for (std::uint32_t d = 0; d < 4; ++d)
            EXPECT_NEAR(pooled[d], 0.5 + 0.25 * d, 1e-12) << weighting_name(w);
    }
}

TEST(PoolLayer, LayerOutOfRange) {
    LayerActivations acts = make_acts(2, 3, 2);
    EXPECT_THROW(pool_layer(acts, 2, Weighting::uniform), Error);
}

TEST(RawEmbedding, LayerAvgOneIsLastLayerMean) {
    Rng rng(31);
    LayerActivations acts = random_acts(rng, 3, 5, 8);
    EXPECT_EQ(raw_embedding(acts, 1, Weighting::uniform), pool_layer(acts, 2, Weighting::uniform));
}

TEST(RawEmbedding, IdenticalLayersMakeAveragingIdempotent) {
    Rng rng(32);
    LayerActivations acts = random_acts(rng, 4, 6, 8);
    for (std::uint32_t l = 1; l < 4; ++l)
        for (std::uint32_t t = 0; t < 6; ++t)
            for (std::uint32_t d = 0; d < 8; ++d) acts.at(l, t, d) = acts.at(0, t, d);
    const auto all = raw_embedding(acts, 4, Weighting::uniform);
    const auto one = raw_embedding(acts, 1, Weighting::uniform);
    for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(all[d], one[d], 1e-12);
}

TEST(RawEmbedding, LayerAvgZeroIsLastTokenBitwise) {
    Rng rng(33);
    LayerActivations acts = random_acts(rng, 3, 3, 8);
    const auto v = raw_embedding(acts, 0, Weighting::uniform);
    for (std::uint32_t d = 0; d < 8; ++d)
        EXPECT_EQ(v[d], static_cast<double>(acts.at(2, 2, d)));
}

TEST(RawEmbedding, LayerAvgOutOfRange) {
    Rng rng(34);
    LayerActivations acts = random_acts(rng, 3, 3, 4);
    EXPECT_THROW(raw_embedding(acts, 4, Weighting::uniform), Error);
    EXPECT_THROW(raw_embedding(acts, -1, Weighting::uniform), Error);
}

TEST(StandardNorm, TwoPointHandComputed) {
    const std::vector<std::vector<double>> embeddings = {{1.0, 2.0}, {3.0, 4.0}};
    const NormalizationStats stats = fit_sn(embeddings);
    EXPECT_EQ(stats.mu, (std::vector<double>{2.0, 3.0}));
    EXPECT_EQ(stats.sigma, (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(apply_sn(embeddings[0], stats), (std::vector<double>{-1.0, -1.0}));
    EXPECT_EQ(apply_sn(embeddings[1], stats), (std::vector<double>{1.0, 1.0}));
}

TEST(StandardNorm, DegenerateDimensionClamped) {
    const std::vector<std::vector<double>> embeddings = {{5.0, 1.0}, {5.0, 3.0}, {5.0, 5.0}};
    const NormalizationStats stats = fit_sn(embeddings);
    EXPECT_EQ(stats.sigma[0], kSigmaFloor);
    EXPECT_GT(stats.sigma[1], 1.0);
}

TEST(StandardNorm, MuMapsToZeroAndIdentityStats) {
    const std::vector<std::vector<double>> embeddings = {{1.0, 2.0}, {3.0, 4.0}};
    const NormalizationStats stats = fit_sn(embeddings);
    EXPECT_EQ(apply_sn(stats.mu, stats), (std::vector<double>{0.0, 0.0}));
    NormalizationStats identity{{0.0, 0.0}, {1.0, 1.0}};
    EXPECT_EQ(apply_sn({7.0, -2.5}, identity), (std::vector<double>{7.0, -2.5}));
}

TEST(StandardNorm, FitApplyPropertyOnRandomSet) {
    Rng rng(41);
    const auto embeddings = random_vectors(rng, 1000, 16);
    const NormalizationStats stats = fit_sn(embeddings);
    std::vector<std::vector<double>> normalized;
    normalized.reserve(embeddings.size());
    for (const auto& e : embeddings) normalized.push_back(apply_sn(e, stats));
    // direct recomputation of per-dimension moments
    for (std::size_t d = 0; d < 16; ++d) {
        double mean = 0.0;
        for (const auto& v : normalized) mean += v[d];
        mean /= static_cast<double>(normalized.size());
        double var = 0.0;
        for (const auto& v : normalized) var += (v[d] - mean) * (v[d] - mean);
        var /= static_cast<double>(normalized.size());
        EXPECT_LT(std::abs(mean), 1e-6);
        EXPECT_NEAR(std::sqrt(var), 1.0, 1e-6);
    }
}

TEST(StandardNorm, Errors) {
    EXPECT_THROW(fit_sn({{1.0, 2.0}}), Error);
    const NormalizationStats stats = fit_sn({{1.0, 2.0}, {3.0, 4.0}});
    EXPECT_THROW(apply_sn({1.0, 2.0, 3.0}, stats), Error);
}

TEST(Natsv, ZeroComponentsStillCentres) {
    const std::vector<std::vector<double>> embeddings = {{1.0, 4.0}, {3.0, 8.0}};
    const PrincipalDirections dirs = fit_natsv(embeddings, 0);
    EXPECT_TRUE(dirs.components.empty());
    EXPECT_EQ(dirs.mean, (std::vector<double>{2.0, 6.0}));
    EXPECT_EQ(apply_natsv({1.0, 4.0}, dirs), (std::vector<double>{-1.0, -2.0}));
}

TEST(Natsv, CollinearPointsGiveAxisComponent) {
    // {(1,0),(2,0),(3,0)}: the only spread is along x, sign fixed positive
    const std::vector<std::vector<double>> embeddings = {{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}};
    const PrincipalDirections dirs = fit_natsv(embeddings, 1);
    ASSERT_EQ(dirs.components.size(), 1u);
    EXPECT_NEAR(dirs.components[0][0], 1.0, 1e-12);
    EXPECT_NEAR(dirs.components[0][1], 0.0, 1e-12);
}

TEST(Natsv, RankTooLowReturnsAvailableWithWarning) {
    const std::vector<std::vector<double>> embeddings = {{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}};
    WarningSink warnings;
    const PrincipalDirections dirs = fit_natsv(embeddings, 2, &warnings);
    EXPECT_EQ(dirs.components.size(), 1u);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("rank too low"), std::string::npos);
}

TEST(Natsv, ComponentsOrthonormalAgainstGramCheck) {
    Rng rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        const auto embeddings = random_vectors(rng, 40, 10);
        const PrincipalDirections dirs = fit_natsv(embeddings, 3);
        ASSERT_EQ(dirs.components.size(), 3u);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                double g = 0.0;
                for (std::size_t d = 0; d < 10; ++d) g += dirs.components[i][d] * dirs.components[j][d];
                EXPECT_NEAR(g, i == j ? 1.0 : 0.0, 1e-6) << "trial " << trial;
            }
        }
    }
}

TEST(Natsv, FullRemovalOfSpannedVector) {
    Rng rng(53);
    const auto embeddings = random_vectors(rng, 30, 6);
    const PrincipalDirections dirs = fit_natsv(embeddings, 1);
    ASSERT_EQ(dirs.components.size(), 1u);
    std::vector<double> v(6);
    for (std::size_t d = 0; d < 6; ++d) v[d] = dirs.mean[d] + 3.7 * dirs.components[0][d];
    const auto out = apply_natsv(v, dirs);
    for (double x : out) EXPECT_NEAR(x, 0.0, 1e-9);
}

TEST(Natsv, ResidualProjectionsVanishForAnyInput) {
    Rng rng(54);
    const auto embeddings = random_vectors(rng, 50, 8);
    const PrincipalDirections dirs = fit_natsv(embeddings, 2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(8);
        for (auto& x : v) x = rng.uniform() * 10.0 - 5.0;  // not from the fitting set
        const auto out = apply_natsv(v, dirs);
        for (const auto& u : dirs.components) {
            double proj = 0.0;
            for (std::size_t d = 0; d < 8; ++d) proj += u[d] * out[d];
            EXPECT_LT(std::abs(proj), 1e-6);
        }
    }
    for (const auto& e : embeddings) {
        const auto out = apply_natsv(e, dirs);
        for (const auto& u : dirs.components) {
            double proj = 0.0;
            for (std::size_t d = 0; d < 8; ++d) proj += u[d] * out[d];
            EXPECT_LT(std::abs(proj), 1e-6);
        }
    }
}

TEST(Calibrate, BaselinePipelines) {
    Rng rng(61);
    LayerActivations acts = random_acts(rng, 4, 7, 8);
    // L = 1, uniform, no sn, no natsv: plain last-layer mean, bitwise
    const SentenceEmbedding mean_cfg = calibrate(acts, {1, false, 0, Weighting::uniform});
    EXPECT_EQ(mean_cfg.vector, pool_layer(acts, 3, Weighting::uniform));
    // L = 0: the last-token vector, bitwise
    const SentenceEmbedding last_tok = calibrate(acts, {0, false, 0, Weighting::uniform});
    for (std::uint32_t d = 0; d < 8; ++d)
        EXPECT_EQ(last_tok.vector[d], static_cast<double>(acts.at(3, 6, d)));
}

TEST(Calibrate, CompositionMatchesManualPipeline) {
    Rng rng(62);
    const std::uint32_t kWindows = 12;
    std::vector<LayerActivations> acts;
    for (std::uint32_t i = 0; i < kWindows; ++i) acts.push_back(random_acts(rng, 8, 5, 6));

    std::vector<std::vector<double>> raws;
    for (const auto& a : acts) raws.push_back(raw_embedding(a, 8, Weighting::uniform));
    const NormalizationStats stats = fit_sn(raws);

    const CalibrationConfig config{8, true, 0, Weighting::uniform};
    for (std::uint32_t i = 0; i < kWindows; ++i) {
        const SentenceEmbedding got = calibrate(acts[i], config, &stats);
        EXPECT_EQ(got.vector, apply_sn(raws[i], stats));
    }
}

TEST(Calibrate, SnThenNatsvOrder) {
    Rng rng(63);
    std::vector<LayerActivations> acts;
    for (int i = 0; i < 10; ++i) acts.push_back(random_acts(rng, 2, 4, 5));
    std::vector<std::vector<double>> raws;
    for (const auto& a : acts) raws.push_back(raw_embedding(a, 2, Weighting::linear));
    const NormalizationStats stats = fit_sn(raws);
    std::vector<std::vector<double>> normalized;
    for (const auto& r : raws) normalized.push_back(apply_sn(r, stats));
    const PrincipalDirections dirs = fit_natsv(normalized, 1);

    const CalibrationConfig config{2, true, 1, Weighting::linear};
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const auto got = calibrate(acts[i], config, &stats, &dirs);
        EXPECT_EQ(got.vector, apply_natsv(normalized[i], dirs));
    }
}

TEST(Calibrate, MissingFitArtifacts) {
    Rng rng(64);
    LayerActivations acts = random_acts(rng, 2, 3, 4);
    try {
        calibrate(acts, {1, true, 0, Weighting::uniform});
        FAIL() << "expected MissingStats";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::missing_stats);
    }
    try {
        calibrate(acts, {1, false, 1, Weighting::uniform});
        FAIL() << "expected MissingDirections";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::missing_directions);
    }
    EXPECT_THROW(calibrate(acts, {0, false, 0, Weighting::linear}), Error);
}

TEST(Calibrate, PureFunctionBitwiseRepeatable) {
    Rng rng(65);
    LayerActivations acts = random_acts(rng, 3, 6, 8);
    const CalibrationConfig config{2, false, 0, Weighting::inverse_linear};
    EXPECT_EQ(calibrate(acts, config).vector, calibrate(acts, config).vector);
}

TEST(Calibrate, GlobalScalingInvarianceUnderSn) {
    Rng rng(66);
    std::vector<LayerActivations> acts;
    for (int i = 0; i < 15; ++i) acts.push_back(random_acts(rng, 3, 5, 6));
    std::vector<LayerActivations> scaled = acts;
    for (auto& a : scaled)
        for (auto& x : a.data) x *= 8.0f;  // exact in binary floating point

    std::vector<std::vector<double>> raws, scaled_raws;
    for (const auto& a : acts) raws.push_back(raw_embedding(a, 3, Weighting::uniform));
    for (const auto& a : scaled) scaled_raws.push_back(raw_embedding(a, 3, Weighting::uniform));
    for (std::size_t i = 0; i < raws.size(); ++i)
        for (std::size_t d = 0; d < raws[i].size(); ++d)
            EXPECT_NEAR(scaled_raws[i][d], 8.0 * raws[i][d], 1e-12);

    const NormalizationStats stats = fit_sn(raws);
    const NormalizationStats scaled_stats = fit_sn(scaled_raws);
    for (std::size_t i = 0; i < raws.size(); ++i) {
        const auto a = apply_sn(raws[i], stats);
        const auto b = apply_sn(scaled_raws[i], scaled_stats);
        for (std::size_t d = 0; d < a.size(); ++d) EXPECT_NEAR(a[d], b[d], 1e-6);
    }
}
