#pragma once

#include <span>
#include <vector>

#include "snapnav/navsim.hpp"
#include "snapnav/policy.hpp"

namespace snapnav {

// Target values for tanh-normalized cls->word attention.
inline constexpr double kTargetCurrent = 1.0;
inline constexpr double kTargetNext = 0.5;
inline constexpr double kTargetOther = -1.0;

/// One row per step i = 1..t, one column per instruction word.
struct AttentionTarget {
    Mat rows;
};

/// Row i is built from the viewpoint the agent stood on at step i
/// (visited[i - 1]): words of the mapped sub-instruction get 1, words of the
/// following sub-instruction 0.5, all others -1.
AttentionTarget build_attention_target(const Episode& episode, std::span<const ViewpointId> visited,
                                       const SceneGraph& scene);

/// (1/t) * sum_i MSE(tanh(X_i), G_i). Throws snapnav::Error on shape mismatch.
double attention_loss(const Mat& attention_rows, const AttentionTarget& target);

/// Summed cross-entropy of softmax(scores_t) against the teacher index.
double imitation_loss(const std::vector<std::vector<double>>& step_scores, std::span<const std::size_t> teacher);

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

struct RlLoss {
    double policy = 0.0;  // -sum_t A_t log p(a_t)
    double critic = 0.0;  // sum_t (V_t - R_t)^2
    static constexpr double kCriticWeight = 0.5;
    double total() const { return policy + kCriticWeight * critic; }
};

/// Advantage actor-critic loss with A_t = R_t - V_t and discount gamma.
RlLoss rl_loss(const std::vector<std::vector<double>>& step_scores, std::span<const std::size_t> actions,
               std::span<const double> rewards, std::span<const double> values, double gamma);

struct LossWeights {
    double lambda = 0.5;     // imitation weight
    double alpha = 0.5;      // attention regularization weight (past_action_aware only)
    double rl_weight = 1.0;  // 0 disables the actor-critic term
};

/// lambda * il + rl_weight * rl, plus alpha * attn_sum for past_action_aware.
double total_loss(double il, double rl, double attn_sum, const LossWeights& w, Variant variant);

}  // namespace snapnav
