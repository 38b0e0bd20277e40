#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "snapnav/navsim.hpp"
#include "snapnav/training.hpp"

namespace snapnav::testing {

// A handful of scenes and episodes; generates in a few milliseconds.
inline GeneratorConfig small_generator() {
    GeneratorConfig g;
    g.train_scenes = 4;
    g.val_unseen_scenes = 2;
    g.test_scenes = 2;
    g.train_episodes = 40;
    g.val_seen_episodes = 10;
    g.val_unseen_episodes = 20;
    g.test_episodes = 20;
    return g;
}

inline Dataset small_dataset(std::uint64_t seed = 1) { return generate_dataset(small_generator(), seed); }

// Narrow network so finite differences and short training runs stay fast.
inline PolicyDims small_dims() {
    PolicyDims d;
    d.d_emb = 8;
    d.d_model = 8;
    d.d_ff = 12;
    return d;
}

inline TrainingConfig small_training(Variant v) {
    TrainingConfig c;
    c.variant = v;
    c.dims = small_dims();
    c.total_iterations = 40;
    c.periods = 4;
    c.validation_cadence = 10;
    c.batch_size = 2;
    c.validation_episodes = 10;
    c.seed = 5;
    return c;
}

// Scene from explicit positions and edges. Candidate feature of a->b is
// [b, a, 1] scaled down, padded to `dim`.
inline SceneGraph make_scene(const std::string& id, const std::vector<std::pair<double, double>>& positions,
                             const std::vector<std::pair<int, int>>& edges, int dim = 3) {
    std::vector<Viewpoint> vps(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        vps[i].id = static_cast<ViewpointId>(i);
        vps[i].position = Eigen::Vector2d(positions[i].first, positions[i].second);
    }
    std::set<std::pair<ViewpointId, ViewpointId>> edge_set;
    for (auto [a, b] : edges) {
        edge_set.insert({a, b});
        for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            std::vector<double> f(static_cast<std::size_t>(dim), 0.0);
            f[0] = 0.1 * to;
            f[1] = 0.1 * from;
            f[2] = 1.0;
            vps[static_cast<std::size_t>(from)].candidate_features[to] = f;
        }
    }
    return SceneGraph(id, std::move(vps), std::move(edge_set));
}

// Episode along `path` with one two-token sub-instruction per segment.
inline Episode make_episode(const std::string& id, const SceneGraph& scene, std::vector<ViewpointId> path) {
    Episode ep;
    ep.episode_id = id;
    ep.scene_id = scene.scene_id();
    ep.path = std::move(path);
    const int segments = static_cast<int>(ep.path.size()) - 1;
    for (int i = 0; i < segments; ++i) {
        SubInstruction sub;
        sub.token_begin = 2 * i;
        sub.token_end = 2 * i + 2;
        sub.viewpoints = {ep.path[static_cast<std::size_t>(i)]};
        if (i == segments - 1) sub.viewpoints.push_back(ep.path.back());
        ep.sub_instructions.push_back(sub);
        ep.instruction.push_back(kFirstDirectionWord + i);
        ep.instruction.push_back(kFirstDirectionWord + 20 + i);
    }
    return ep;
}

inline bool bitwise_equal(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
    }
    return true;
}

inline bool bitwise_equal(const PolicyParams& a, const PolicyParams& b) {
    auto ba = a.blocks();
    auto bb = b.blocks();
    if (ba.size() != bb.size() || a.variant != b.variant || !(a.dims == b.dims)) return false;
    for (std::size_t i = 0; i < ba.size(); ++i) {
        if (!bitwise_equal(*ba[i].value, *bb[i].value)) return false;
    }
    return true;
}

struct BlockGradientCheck {
    std::string block;
    int coordinates = 0;
    double worst_relative_error = 0.0;
};

// Central differences of episode_loss(...).total against the analytic
// gradient for up to `per_block` random coordinates of every block. The RL
// actions and advantages are recorded once and replayed for every
// evaluation. Relative error is |a - f| / max(|a|, |f|, floor), where the
// floor is at least the smallest gradient central differences can resolve
// to `tolerance`: their roundoff is about eps * |loss| / h.
inline std::vector<BlockGradientCheck> gradient_check(const PolicyParams& params, const SceneGraph& scene,
                                                      const Episode& episode, const TrainingConfig& config,
                                                      int per_block, std::uint64_t seed, double h = 1e-5,
                                                      double tolerance = 1e-4) {
    std::mt19937_64 rng(seed);
    EpisodeTrace trace;
    const double loss = episode_loss(params, scene, episode, config, trace, &rng, nullptr).total;
    const double floor =
        std::max(1e-6, std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / (h * tolerance));
    const PolicyParams analytic = backward(params, scene, episode, config, trace);

    PolicyParams probe = params;
    auto loss_at = [&]() {
        EpisodeTrace replay = trace;
        return episode_loss(probe, scene, episode, config, replay, nullptr, nullptr).total;
    };
    std::vector<BlockGradientCheck> out;
    auto blocks = probe.blocks();
    const auto grads = analytic.blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Mat& value = *blocks[b].value;
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(value.size()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(per_block)));
        BlockGradientCheck check{blocks[b].name, static_cast<int>(idx.size()), 0.0};
        for (Eigen::Index i : idx) {
            const double x = value.data()[i];
            value.data()[i] = x + h;
            const double up = loss_at();
            value.data()[i] = x - h;
            const double down = loss_at();
            value.data()[i] = x;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads[b].value->data()[i];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
            check.worst_relative_error = std::max(check.worst_relative_error, rel);
        }
        out.push_back(check);
    }
    return out;
}

// Loss weights that isolate one term: "il", "rl" or "attention".
inline LossWeights only_term(const std::string& term) {
    LossWeights w;
    w.lambda = term == "il" ? 1.0 : 0.0;
    w.rl_weight = term == "rl" ? 1.0 : 0.0;
    w.alpha = term == "attention" ? 1.0 : 0.0;
    return w;
}

}  // namespace snapnav::testing
