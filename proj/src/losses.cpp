#include "snapnav/losses.hpp"

#include <cmath>

#include "snapnav/common.hpp"

namespace snapnav {

AttentionTarget build_attention_target(const Episode& episode, std::span<const ViewpointId> visited,
                                       const SceneGraph& scene) {
    const auto length = static_cast<Eigen::Index>(episode.instruction.size());
    AttentionTarget target;
    target.rows = Mat::Constant(static_cast<Eigen::Index>(visited.size()), length, kTargetOther);
    const auto& subs = episode.sub_instructions;
    for (std::size_t i = 0; i < visited.size(); ++i) {
        const std::size_t current = map_viewpoint_to_subinstruction(episode, visited[i], scene);
        const auto row = static_cast<Eigen::Index>(i);
        for (int j = subs[current].token_begin; j < subs[current].token_end; ++j) target.rows(row, j) = kTargetCurrent;
        if (current + 1 < subs.size()) {
            for (int j = subs[current + 1].token_begin; j < subs[current + 1].token_end; ++j)
                target.rows(row, j) = kTargetNext;
        }
    }
    return target;
}

double attention_loss(const Mat& attention_rows, const AttentionTarget& target) {
    if (attention_rows.rows() != target.rows.rows() || attention_rows.cols() != target.rows.cols())
        throw Error("attention_loss: attention rows " + std::to_string(attention_rows.rows()) + "x" +
                    std::to_string(attention_rows.cols()) + " vs target " + std::to_string(target.rows.rows()) + "x" +
                    std::to_string(target.rows.cols()));
    if (attention_rows.size() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < attention_rows.rows(); ++i) {
        const double mse =
            (attention_rows.row(i).array().tanh() - target.rows.row(i).array()).square().sum() / attention_rows.cols();
        sum += mse;
    }
    return sum / static_cast<double>(attention_rows.rows());
}

namespace {

double log_softmax(const std::vector<double>& z, std::size_t index) {
    double m = z.front();
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return z[index] - m - std::log(s);
}

}  // namespace

double imitation_loss(const std::vector<std::vector<double>>& step_scores, std::span<const std::size_t> teacher) {
    if (step_scores.size() != teacher.size()) throw Error("imitation_loss: step count mismatch");
    double loss = 0.0;
    for (std::size_t t = 0; t < teacher.size(); ++t) loss -= log_softmax(step_scores[t], teacher[t]);
    return loss;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
    std::vector<double> out(rewards.size());
    double running = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        running = rewards[i] + gamma * running;
        out[i] = running;
    }
    return out;
}

RlLoss rl_loss(const std::vector<std::vector<double>>& step_scores, std::span<const std::size_t> actions,
               std::span<const double> rewards, std::span<const double> values, double gamma) {
    const std::size_t n = step_scores.size();
    if (actions.size() != n || rewards.size() != n || values.size() != n) throw Error("rl_loss: step count mismatch");
    const auto returns = discounted_returns(rewards, gamma);
    RlLoss out;
    for (std::size_t t = 0; t < n; ++t) {
        const double advantage = returns[t] - values[t];
        out.policy -= advantage * log_softmax(step_scores[t], actions[t]);
        out.critic += (values[t] - returns[t]) * (values[t] - returns[t]);
    }
    return out;
}

double total_loss(double il, double rl, double attn_sum, const LossWeights& w, Variant variant) {
    double total = w.lambda * il + w.rl_weight * rl;
    if (variant == Variant::past_action_aware) total += w.alpha * attn_sum;
    return total;
}

}  // namespace snapnav
