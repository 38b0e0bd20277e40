#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "snapnav/common.hpp"
#include "snapnav/losses.hpp"
#include "support.hpp"

using namespace snapnav;
using namespace snapnav::testing;

namespace {

// Target rows built by scanning token ranges directly, for an agent that
// stays on the ground-truth path.
Mat scan_target(const Episode& ep, const std::vector<std::size_t>& path_positions) {
    const auto L = static_cast<Eigen::Index>(ep.instruction.size());
    Mat g(static_cast<Eigen::Index>(path_positions.size()), L);
    for (std::size_t i = 0; i < path_positions.size(); ++i) {
        const ViewpointId v = ep.path[path_positions[i]];
        std::size_t first = ep.sub_instructions.size();
        for (std::size_t s = 0; s < ep.sub_instructions.size() && first == ep.sub_instructions.size(); ++s) {
            for (ViewpointId a : ep.sub_instructions[s].viewpoints)
                if (a == v) first = s;
        }
        for (Eigen::Index j = 0; j < L; ++j) {
            const auto& cur = ep.sub_instructions[first];
            double value = -1.0;
            if (j >= cur.token_begin && j < cur.token_end) {
                value = 1.0;
            } else if (first + 1 < ep.sub_instructions.size()) {
                const auto& nxt = ep.sub_instructions[first + 1];
                if (j >= nxt.token_begin && j < nxt.token_end) value = 0.5;
            }
            g(static_cast<Eigen::Index>(i), j) = value;
        }
    }
    return g;
}

}  // namespace

TEST(ImitationLoss, UniformScoresGiveLnN) {
    const std::size_t teacher[] = {2};
    EXPECT_NEAR(imitation_loss({{0.3, 0.3, 0.3, 0.3}}, teacher), std::log(4.0), 1e-12);
    const std::size_t two[] = {0, 3};
    EXPECT_NEAR(imitation_loss({{0, 0, 0, 0}, {-1, -1, -1, -1}}, two), 2 * std::log(4.0), 1e-12);
}

TEST(ImitationLoss, ConfidentTeacherLogitApproachesZero) {
    const std::size_t teacher[] = {1};
    double prev = imitation_loss({{0, 1, 0}}, teacher);
    for (double logit : {5.0, 20.0, 60.0}) {
        const double loss = imitation_loss({{0, logit, 0}}, teacher);
        EXPECT_LT(loss, prev);
        prev = loss;
    }
    EXPECT_LT(prev, 1e-20);
    EXPECT_GE(prev, 0.0);
}

TEST(ImitationLoss, StepCountMismatchThrows) {
    const std::size_t teacher[] = {0, 1};
    EXPECT_THROW(imitation_loss({{0, 0}}, teacher), Error);
}

TEST(AttentionLoss, HandEvaluatedExample) {
    AttentionTarget g;
    g.rows.resize(1, 2);
    g.rows << 1, -1;
    EXPECT_NEAR(attention_loss(Mat::Zero(1, 2), g), 1.0, 1e-12);
}

TEST(AttentionLoss, RowsAreAveraged) {
    AttentionTarget one, two;
    one.rows.resize(1, 3);
    one.rows << 1, 0.5, -1;
    two.rows.resize(2, 3);
    two.rows << 1, 0.5, -1, 1, 0.5, -1;
    Mat x1(1, 3), x2(2, 3);
    x1 << 0.2, -0.4, 0.9;
    x2 << 0.2, -0.4, 0.9, 0.2, -0.4, 0.9;
    EXPECT_NEAR(attention_loss(x1, one), attention_loss(x2, two), 1e-15);
    const double direct = (std::pow(std::tanh(0.2) - 1, 2) + std::pow(std::tanh(-0.4) - 0.5, 2) + std::pow(std::tanh(0.9) + 1, 2)) / 3;
    EXPECT_NEAR(attention_loss(x1, one), direct, 1e-15);
}

TEST(AttentionLoss, NearZeroAtClampedArctanhOfTarget) {
    AttentionTarget g;
    g.rows.resize(2, 3);
    g.rows << 1, 0.5, -1, -1, -1, 0.5;
    Mat x(2, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::atanh(std::clamp(g.rows.data()[i], -1 + 1e-9, 1 - 1e-9));
    EXPECT_LT(attention_loss(x, g), 1e-17);
    EXPECT_THROW(attention_loss(Mat::Zero(1, 3), g), Error);
}

TEST(AttentionTarget, PiecewiseValuesOnPath) {
    const auto s = make_scene("line", {{0, 0}, {2, 0}, {4, 0}, {6, 0}}, {{0, 1}, {1, 2}, {2, 3}});
    const auto ep = make_episode("e", s, {0, 1, 2, 3});
    const ViewpointId visited[] = {0, 1, 2, 3};
    const auto t = build_attention_target(ep, visited, s);
    Mat want(4, 6);
    want << 1, 1, 0.5, 0.5, -1, -1,  //
        -1, -1, 1, 1, 0.5, 0.5,      //
        -1, -1, -1, -1, 1, 1,        //
        -1, -1, -1, -1, 1, 1;        // goal maps to the last sub-instruction: no 0.5 entries
    EXPECT_TRUE(bitwise_equal(t.rows, want)) << t.rows;
}

TEST(AttentionTarget, OffPathViewpointUsesNearestPathViewpoint) {
    // 4 hangs off viewpoint 2.
    const auto s = make_scene("spur", {{0, 0}, {2, 0}, {4, 0}, {6, 0}, {4, 2}}, {{0, 1}, {1, 2}, {2, 3}, {2, 4}});
    const auto ep = make_episode("e", s, {0, 1, 2, 3});
    const ViewpointId off[] = {4};
    const ViewpointId on[] = {2};
    EXPECT_TRUE(bitwise_equal(build_attention_target(ep, off, s).rows, build_attention_target(ep, on, s).rows));
}

TEST(AttentionTarget, MatchesRangeScanningOracleOnGeneratedEpisodes) {
    const auto data = small_dataset(5);
    for (const auto& ep : data.split(Split::train)) {
        const auto& scene = data.scene(ep.scene_id);
        std::vector<std::size_t> positions(ep.path.size());
        for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
        const auto t = build_attention_target(ep, ep.path, scene);
        EXPECT_TRUE(bitwise_equal(t.rows, scan_target(ep, positions))) << ep.episode_id;
        for (Eigen::Index i = 0; i < t.rows.size(); ++i) {
            const double v = t.rows.data()[i];
            EXPECT_TRUE(v == 1.0 || v == 0.5 || v == -1.0);
        }
    }
}

TEST(RlLoss, SingleStepHalfProbability) {
    // p(a) = 0.5, return 1, value 0, so A = 1.
    const std::size_t actions[] = {0};
    const double rewards[] = {1.0};
    const double values[] = {0.0};
    const auto l = rl_loss({{0.0, 0.0}}, actions, rewards, values, 0.9);
    EXPECT_NEAR(l.policy, -std::log(0.5), 1e-15);
    EXPECT_NEAR(l.critic, 1.0, 1e-15);
    EXPECT_NEAR(l.total(), -std::log(0.5) + 0.5, 1e-15);
}

TEST(RlLoss, ZeroAdvantageAndPerfectCritic) {
    const std::size_t actions[] = {1, 0, 2};
    const double rewards[] = {0.5, -0.25, 2.0};
    const auto returns = discounted_returns(rewards, 0.9);
    const auto l = rl_loss({{0.1, 0.7, -0.2}, {1, 2, 3}, {0, 0, 0}}, actions, rewards, returns, 0.9);
    EXPECT_EQ(l.policy, 0.0);
    EXPECT_EQ(l.critic, 0.0);
}

TEST(RlLoss, DiscountedReturns) {
    const double rewards[] = {1.0, 0.0, 2.0};
    const auto r = discounted_returns(rewards, 0.9);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_NEAR(r[2], 2.0, 1e-15);
    EXPECT_NEAR(r[1], 1.8, 1e-15);
    EXPECT_NEAR(r[0], 1.0 + 0.9 * 1.8, 1e-15);
    const std::size_t a[] = {0};
    EXPECT_THROW(rl_loss({{0, 0}}, a, rewards, rewards, 0.9), Error);
}

TEST(TotalLoss, Arithmetic) {
    LossWeights w;
    EXPECT_EQ(w.lambda, 0.5);
    EXPECT_EQ(w.alpha, 0.5);
    EXPECT_EQ(total_loss(2.0, 1.0, 4.0, w, Variant::past_action_aware), 4.0);
    EXPECT_EQ(total_loss(2.0, 1.0, 0.0, w, Variant::original), total_loss(2.0, 1.0, 100.0, w, Variant::original));
    LossWeights no_attn = w;
    no_attn.alpha = 0.0;
    EXPECT_EQ(total_loss(2.0, 1.0, 4.0, no_attn, Variant::past_action_aware), total_loss(2.0, 1.0, 4.0, w, Variant::original));
}

TEST(TotalLoss, RandomizedLinearity) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 100; ++i) {
        LossWeights w{u(rng), u(rng), u(rng)};
        const double il = u(rng), rl = u(rng), attn = u(rng);
        EXPECT_NEAR(total_loss(il, rl, attn, w, Variant::past_action_aware), w.lambda * il + w.rl_weight * rl + w.alpha * attn, 1e-12);
        EXPECT_NEAR(total_loss(il, rl, attn, w, Variant::original), w.lambda * il + w.rl_weight * rl, 1e-12);
    }
}
