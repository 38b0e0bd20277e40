#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapnav/losses.hpp"
#include "snapnav/navsim.hpp"
#include "snapnav/policy.hpp"
#include "snapnav/snapshot.hpp"

namespace snapnav {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainingConfig {
    Variant variant = Variant::original;
    PolicyDims dims;
    int total_iterations = 30000;
    int periods = 10;
    // Additional period counts whose period-best snapshots are retained in
    // the same run (ablation over M without retraining).
    std::vector<int> extra_periods;
    LossWeights weights;
    double gamma = 0.9;
    double terminal_bonus = 2.0;
    AdamConfig adam;
    int batch_size = 2;
    int validation_cadence = 250;
    // 0 evaluates every val_unseen episode.
    int validation_episodes = 0;
    std::uint64_t seed = 0;
    EnvConfig env;

    /// Throws snapnav::Error when an invariant (N divisible by M, cadence
    /// dividing the period length, non-negative weights, ...) is violated.
    void validate() const;
    std::uint64_t fingerprint() const;
};

nlohmann::json training_config_to_json(const TrainingConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});

// ---------------------------------------------------------------------------
// Rollouts

enum class ActionChoice { teacher, sample, greedy, replay };

struct RolloutStep {
    ActionScores scores;
    std::size_t action = 0;
    std::size_t teacher = 0;
    ViewpointId viewpoint = 0;
    double reward = 0.0;
    std::optional<ad::Var> value;
};

struct Rollout {
    std::vector<RolloutStep> steps;
    TerminalResult result;
    // Viewpoint occupied at each step, v_1 first.
    std::vector<ViewpointId> visited() const;
};

/// Runs one episode from an encoded initial state. `replay` supplies the
/// actions for ActionChoice::replay; `rng` is required for sample.
Rollout run_rollout(PolicyGraph& graph, const PolicyState& initial, NavEnv& env, ActionChoice choice,
                    std::mt19937_64* rng = nullptr, const std::vector<std::size_t>* replay = nullptr,
                    bool with_values = false, double terminal_bonus = 2.0);

/// Index of the highest score; ties go to the lowest index.
std::size_t argmax(const std::vector<double>& scores);

/// Actions and frozen advantages of one training episode, enough to replay
/// its loss exactly.
struct EpisodeTrace {
    std::string episode_id;
    std::vector<std::size_t> rl_actions;
    std::vector<double> rl_advantages;
};

struct LossBreakdown {
    double il = 0.0;         // summed cross-entropy of the teacher-forced rollout
    double rl = 0.0;         // policy + 0.5 * critic of the sampled rollout
    double rl_policy = 0.0;
    double rl_critic = 0.0;
    double attention = 0.0;  // sum over steps of both rollouts (past_action_aware)
    double total = 0.0;
};

/// Builds both rollouts of one episode on a fresh tape and, when `grad` is
/// non-null, adds grad_scale * d(total)/d(params) into it.
///
/// With an empty trace.rl_actions the RL rollout samples from `rng` and
/// records its actions and advantages into `trace`; otherwise it replays
/// them with the advantages held fixed.
LossBreakdown episode_loss(const PolicyParams& params, const SceneGraph& scene, const Episode& episode,
                           const TrainingConfig& config, EpisodeTrace& trace, std::mt19937_64* rng,
                           PolicyParams* grad, double grad_scale = 1.0);

/// Gradient of a recorded episode. Throws snapnav::Error naming the
/// offending parameter block if any entry is NaN/Inf.
PolicyParams backward(const PolicyParams& params, const SceneGraph& scene, const Episode& episode,
                      const TrainingConfig& config, const EpisodeTrace& trace);

/// Greedy single-model rollout result for each episode.
std::vector<TerminalResult> greedy_results(const PolicyParams& params, const Dataset& data,
                                           const std::vector<Episode>& episodes, const EnvConfig& env);
double success_rate(const std::vector<TerminalResult>& results);

class AdamOptimizer {
   public:
    AdamOptimizer(const PolicyParams& like, AdamConfig config);
    void step(PolicyParams& params, const PolicyParams& grad);

   private:
    AdamConfig config_;
    PolicyParams m_, v_;
    long step_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct LossCurveRow {
    int iteration = 0;
    double il = 0.0, rl = 0.0, attn = 0.0;
};

struct SrCurveRow {
    int iteration = 0;
    double sr = 0.0;
};

struct TrainingResult {
    std::vector<Snapshot> snapshots;                      // one per period, period order
    std::map<int, std::vector<Snapshot>> extra_snapshots;  // keyed by period count
    std::vector<LossCurveRow> loss_curve;
    std::vector<SrCurveRow> sr_curve;
    PolicyParams final_params;
};

using ProgressFn = std::function<void(int iteration, const LossCurveRow&)>;

/// Mixed IL/RL training with period-best snapshot retention. Throws
/// snapnav::Error on invalid config or a non-finite loss.
TrainingResult train(const TrainingConfig& config, const Dataset& data, const ProgressFn& progress = {});

std::string snapshot_id(Variant variant, int periods, int period_index);

void write_loss_curve(const std::vector<LossCurveRow>& rows, const std::filesystem::path& path);
void write_sr_curve(const std::vector<SrCurveRow>& rows, const std::filesystem::path& path);

}  // namespace snapnav
