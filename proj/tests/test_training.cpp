#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "snapnav/common.hpp"
#include "snapnav/training.hpp"
#include "support.hpp"

using namespace snapnav;
using namespace snapnav::testing;
namespace fs = std::filesystem;

namespace {

TrainingConfig with_weights(Variant v, LossWeights w) {
    TrainingConfig c = small_training(v);
    c.weights = w;
    return c;
}

PolicyParams small_params(Variant v, std::uint64_t seed = 21) {
    auto dims = small_dims();
    return PolicyParams::initialize(dims, v, seed);
}

void expect_grad_near(const PolicyParams& a, const PolicyParams& b, double tol) {
    const auto ba = a.blocks();
    const auto bb = b.blocks();
    for (std::size_t i = 0; i < ba.size(); ++i) {
        const double scale = std::max(1.0, ba[i].value->cwiseAbs().maxCoeff());
        EXPECT_LE((*ba[i].value - *bb[i].value).cwiseAbs().maxCoeff(), tol * scale) << ba[i].name;
    }
}

struct GradCase {
    Variant variant;
    const char* term;
};

class GradientFidelity : public ::testing::TestWithParam<GradCase> {};

}  // namespace

TEST_P(GradientFidelity, MatchesCentralDifferences) {
    const auto c = GetParam();
    const auto data = small_dataset();
    const auto& ep = data.split(Split::train)[3];
    const auto params = small_params(c.variant);
    const auto checks = gradient_check(params, data.scene(ep.scene_id), ep, with_weights(c.variant, only_term(c.term)), 20, 9);
    for (const auto& chk : checks) EXPECT_LT(chk.worst_relative_error, 1e-4) << chk.block;
}

INSTANTIATE_TEST_SUITE_P(Training, GradientFidelity,
                         ::testing::Values(GradCase{Variant::original, "il"}, GradCase{Variant::original, "rl"},
                                           GradCase{Variant::past_action_aware, "il"},
                                           GradCase{Variant::past_action_aware, "rl"},
                                           GradCase{Variant::past_action_aware, "attention"}),
                         [](const auto& info) {
                             return to_string(info.param.variant) + "_" + info.param.term;
                         });

TEST(EpisodeLoss, GradientIsLinearInLossWeights) {
    const auto data = small_dataset();
    const auto& ep = data.split(Split::train)[5];
    const auto& scene = data.scene(ep.scene_id);
    const auto params = small_params(Variant::past_action_aware);
    std::mt19937_64 rng(4);
    EpisodeTrace trace;
    episode_loss(params, scene, ep, small_training(Variant::past_action_aware), trace, &rng, nullptr);

    auto grad = [&](LossWeights w) { return backward(params, scene, ep, with_weights(Variant::past_action_aware, w), trace); };
    const auto il = grad(only_term("il"));
    const auto rl = grad(only_term("rl"));
    const auto attn = grad(only_term("attention"));
    const auto full = grad(LossWeights{0.5, 0.5, 1.0});
    PolicyParams combo = il.zeros_like();
    auto cb = combo.blocks();
    const auto bi = il.blocks(), br = rl.blocks(), ba = attn.blocks();
    for (std::size_t i = 0; i < cb.size(); ++i) *cb[i].value = 0.5 * *bi[i].value + *br[i].value + 0.5 * *ba[i].value;
    expect_grad_near(full, combo, 1e-12);

    // Zeroed weights contribute nothing at all.
    const auto none = grad(LossWeights{0.0, 0.0, 0.0});
    for (const auto& b : none.blocks()) EXPECT_TRUE(b.value->isZero()) << b.name;
    // lambda = 0 leaves the pure RL gradient.
    expect_grad_near(grad(LossWeights{0.0, 0.0, 1.0}), rl, 0.0);
}

TEST(EpisodeLoss, OriginalVariantIgnoresAttentionWeight) {
    const auto data = small_dataset();
    const auto& ep = data.split(Split::train)[1];
    const auto& scene = data.scene(ep.scene_id);
    const auto params = small_params(Variant::original);
    std::mt19937_64 rng(4);
    EpisodeTrace trace;
    const auto base = episode_loss(params, scene, ep, small_training(Variant::original), trace, &rng, nullptr);
    EXPECT_GT(base.attention, 0.0);
    const auto a = backward(params, scene, ep, with_weights(Variant::original, LossWeights{0.5, 0.0, 1.0}), trace);
    const auto b = backward(params, scene, ep, with_weights(Variant::original, LossWeights{0.5, 5.0, 1.0}), trace);
    expect_grad_near(a, b, 0.0);
}

TEST(EpisodeLoss, ReplayReproducesRecordedLoss) {
    const auto data = small_dataset();
    const auto& ep = data.split(Split::train)[2];
    const auto& scene = data.scene(ep.scene_id);
    const auto params = small_params(Variant::past_action_aware);
    const auto config = small_training(Variant::past_action_aware);
    std::mt19937_64 rng(8);
    EpisodeTrace trace;
    const auto first = episode_loss(params, scene, ep, config, trace, &rng, nullptr);
    ASSERT_FALSE(trace.rl_actions.empty());
    ASSERT_LE(trace.rl_actions.size(), 15u);
    EpisodeTrace replay = trace;
    const auto again = episode_loss(params, scene, ep, config, replay, nullptr, nullptr);
    EXPECT_EQ(first.total, again.total);
    EXPECT_EQ(first.il, again.il);
    EXPECT_EQ(first.attention, again.attention);
    EXPECT_GT(first.attention, 0.0);
    EXPECT_NEAR(first.total, 0.5 * first.il + first.rl + 0.5 * first.attention, 1e-12);

    EpisodeTrace bad = trace;
    bad.rl_advantages.pop_back();
    EXPECT_THROW(episode_loss(params, scene, ep, config, bad, nullptr, nullptr), Error);
    EXPECT_THROW(backward(params, scene, ep, config, EpisodeTrace{}), Error);
}

TEST(Training, ImitationLossDecreasesOnFrozenBatch) {
    const auto data = small_dataset();
    TrainingConfig config = small_training(Variant::original);
    config.weights = only_term("il");
    PolicyParams params = small_params(Variant::original, 2);
    const std::vector<Episode> batch(data.split(Split::train).begin(), data.split(Split::train).begin() + 4);
    const double lr = 0.003;
    std::vector<double> losses;
    std::mt19937_64 rng(1);
    for (int it = 0; it < 200; ++it) {
        PolicyParams grad = params.zeros_like();
        double il = 0.0;
        for (const auto& ep : batch) {
            EpisodeTrace trace;
            il += episode_loss(params, data.scene(ep.scene_id), ep, config, trace, &rng, &grad).il;
        }
        losses.push_back(il);
        auto pb = params.blocks();
        const auto gb = grad.blocks();
        for (std::size_t b = 0; b < pb.size(); ++b) *pb[b].value -= lr * *gb[b].value;
    }
    int decreasing = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) decreasing += losses[i] < losses[i - 1] ? 1 : 0;
    EXPECT_GE(decreasing, static_cast<int>(0.9 * (losses.size() - 1))) << losses.front() << " -> " << losses.back();
    EXPECT_LT(losses.back(), 0.5 * losses.front());
}

TEST(Training, SnapshotAndCurveCounts) {
    const auto data = small_dataset();
    TrainingConfig config = small_training(Variant::past_action_aware);
    config.extra_periods = {2, 4};
    int calls = 0;
    const auto result = train(config, data, [&](int, const LossCurveRow&) { ++calls; });
    EXPECT_EQ(calls, config.total_iterations);
    ASSERT_EQ(result.snapshots.size(), 4u);
    EXPECT_EQ(result.loss_curve.size(), 40u);
    EXPECT_EQ(result.sr_curve.size(), 40u / 10u);
    ASSERT_EQ(result.extra_snapshots.size(), 1u);  // 4 equals the main period count
    ASSERT_EQ(result.extra_snapshots.at(2).size(), 2u);
    for (std::size_t p = 0; p < result.snapshots.size(); ++p) {
        const auto& s = result.snapshots[p];
        EXPECT_EQ(s.period_index, static_cast<int>(p));
        EXPECT_EQ(s.snapshot_id, snapshot_id(Variant::past_action_aware, 4, static_cast<int>(p)));
        EXPECT_GT(s.iteration, static_cast<std::int64_t>(p) * 10);
        EXPECT_LE(s.iteration, static_cast<std::int64_t>(p + 1) * 10);
        EXPECT_EQ(s.config_fingerprint, config.fingerprint());
    }
    // Each half-run snapshot is the best (earliest on ties) of its two quarter snapshots.
    for (int half = 0; half < 2; ++half) {
        const auto& a = result.snapshots[2 * half];
        const auto& b = result.snapshots[2 * half + 1];
        const auto& want = b.validation_sr > a.validation_sr ? b : a;
        EXPECT_EQ(result.extra_snapshots.at(2)[half].iteration, want.iteration);
        EXPECT_TRUE(bitwise_equal(result.extra_snapshots.at(2)[half].params, want.params));
    }
    const auto dir = fs::path(::testing::TempDir()) / "snapnav_curves";
    write_loss_curve(result.loss_curve, dir / "curves_loss.csv");
    write_sr_curve(result.sr_curve, dir / "curves_sr.csv");
    std::ifstream in(dir / "curves_sr.csv");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 1 + 4);
}

TEST(Training, PeriodBestPicksHighestSrEarliestOnTies) {
    const auto data = small_dataset();
    TrainingConfig config = small_training(Variant::original);
    config.total_iterations = 60;
    config.periods = 2;
    config.validation_cadence = 10;
    const auto result = train(config, data);
    ASSERT_EQ(result.sr_curve.size(), 6u);
    for (int p = 0; p < 2; ++p) {
        const SrCurveRow* best = nullptr;
        for (int k = 0; k < 3; ++k) {
            const auto& row = result.sr_curve[static_cast<std::size_t>(3 * p + k)];
            if (!best || row.sr > best->sr) best = &row;
        }
        EXPECT_EQ(result.snapshots[p].iteration, best->iteration);
        EXPECT_EQ(result.snapshots[p].validation_sr, best->sr);
    }
}

TEST(Training, DeterministicAndRecordedSrIsReproducible) {
    const auto data = small_dataset();
    const auto config = small_training(Variant::past_action_aware);
    const auto a = train(config, data);
    const auto b = train(config, data);
    ASSERT_EQ(a.snapshots.size(), b.snapshots.size());
    std::vector<Episode> val = data.split(Split::val_unseen);
    val.resize(static_cast<std::size_t>(config.validation_episodes));
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
        EXPECT_EQ(encode_snapshot(a.snapshots[i]), encode_snapshot(b.snapshots[i]));
        EXPECT_EQ(success_rate(greedy_results(a.snapshots[i].params, data, val, config.env)), a.snapshots[i].validation_sr);
        // The snapshot file round trip keeps the recorded SR reproducible.
        const auto loaded = decode_snapshot(encode_snapshot(a.snapshots[i]));
        EXPECT_EQ(success_rate(greedy_results(loaded.params, data, val, config.env)), a.snapshots[i].validation_sr);
    }
    EXPECT_TRUE(bitwise_equal(a.final_params, b.final_params));
    auto other = config;
    other.seed = 6;
    EXPECT_FALSE(bitwise_equal(train(other, data).final_params, a.final_params));
}

TEST(Training, NonFiniteLossAbortsWithDiagnostic) {
    const auto data = small_dataset();
    auto config = small_training(Variant::original);
    config.adam.learning_rate = 1e300;
    try {
        train(config, data);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos) << e.what();
    }
}

TEST(TrainingConfig, ValidationAndJson) {
    auto c = small_training(Variant::original);
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.periods = 3;  // 40 not divisible by 3
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.validation_cadence = 4;  // does not divide 10
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.weights.alpha = -1;
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.extra_periods = {7};
    EXPECT_THROW(bad.validate(), Error);

    const auto j = training_config_to_json(c);
    const auto back = training_config_from_json(j);
    EXPECT_EQ(training_config_to_json(back), j);
    EXPECT_EQ(back.fingerprint(), c.fingerprint());
    auto changed = c;
    changed.weights.lambda = 0.25;
    EXPECT_NE(changed.fingerprint(), c.fingerprint());
    EXPECT_THROW(training_config_from_json({{"learning_rat", 1.0}}), Error);

    const auto data = small_dataset();
    auto mismatch = c;
    mismatch.dims.d_view = 5;
    EXPECT_THROW(train(mismatch, data), Error);
}

TEST(Rollout, ArgmaxTiesGoToLowestIndex) {
    EXPECT_EQ(argmax({1.0, 3.0, 3.0, 2.0}), 1u);
    EXPECT_EQ(argmax({-1.0}), 0u);
}
