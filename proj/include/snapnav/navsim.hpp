#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace snapnav {

using ViewpointId = int;
using TokenId = int;

// Reserved vocabulary entries. Generated instructions never contain the
// first two; the policy wraps every instruction with them.
inline constexpr TokenId kClsToken = 0;
inline constexpr TokenId kSepToken = 1;
inline constexpr TokenId kStopWord = 2;
inline constexpr TokenId kFirstDirectionWord = 3;

enum class Split { train, val_seen, val_unseen, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);
inline constexpr Split kAllSplits[] = {Split::train, Split::val_seen, Split::val_unseen, Split::test};

struct Viewpoint {
    ViewpointId id = 0;
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    // Generator metadata: which landmark stands at this viewpoint.
    int landmark = 0;
    // Keyed by neighbor id; keys must equal the neighbor set.
    std::map<ViewpointId, std::vector<double>> candidate_features;
};

/// Navigability graph of one scene. Viewpoint ids are dense indices
/// 0..n-1. All-pairs geodesic distances are computed on construction.
class SceneGraph {
   public:
    SceneGraph() = default;
    /// Throws snapnav::Error if any structural invariant is violated.
    SceneGraph(std::string scene_id, std::vector<Viewpoint> viewpoints,
               std::set<std::pair<ViewpointId, ViewpointId>> edges);

    const std::string& scene_id() const { return scene_id_; }
    const std::vector<Viewpoint>& viewpoints() const { return viewpoints_; }
    const Viewpoint& viewpoint(ViewpointId id) const;
    std::size_t size() const { return viewpoints_.size(); }
    bool contains(ViewpointId id) const { return id >= 0 && static_cast<std::size_t>(id) < viewpoints_.size(); }

    /// Unordered pairs stored with first < second.
    const std::set<std::pair<ViewpointId, ViewpointId>>& edges() const { return edges_; }
    /// Ascending neighbor ids.
    const std::vector<ViewpointId>& neighbors(ViewpointId id) const;
    bool adjacent(ViewpointId a, ViewpointId b) const;
    double edge_length(ViewpointId a, ViewpointId b) const;
    /// Geodesic distance in meters.
    double distance(ViewpointId a, ViewpointId b) const;
    int feature_dim() const { return feature_dim_; }

   private:
    std::string scene_id_;
    std::vector<Viewpoint> viewpoints_;
    std::set<std::pair<ViewpointId, ViewpointId>> edges_;
    std::vector<std::vector<ViewpointId>> adjacency_;
    std::vector<double> distances_;
    int feature_dim_ = 0;
};

/// Geodesic (shortest-path) distance between two viewpoints of a scene.
double shortest_path_distance(const SceneGraph& scene, ViewpointId a, ViewpointId b);

/// Minimum-length viewpoint sequence from a to b (inclusive).
std::vector<ViewpointId> shortest_path(const SceneGraph& scene, ViewpointId a, ViewpointId b);

struct SubInstruction {
    // Half-open token range [token_begin, token_end) into Episode::instruction.
    int token_begin = 0;
    int token_end = 0;
    std::vector<ViewpointId> viewpoints;
};

struct Episode {
    std::string episode_id;
    std::string scene_id;
    std::vector<TokenId> instruction;
    std::vector<SubInstruction> sub_instructions;
    std::vector<ViewpointId> path;
    Split split = Split::train;

    ViewpointId start() const { return path.front(); }
    ViewpointId goal() const { return path.back(); }
};

/// Throws snapnav::Error describing the first violated Episode invariant.
void validate_episode(const Episode& episode, const SceneGraph& scene);

struct Dataset {
    std::vector<SceneGraph> scenes;
    std::map<Split, std::vector<Episode>> episodes;
    int vocab_size = 0;

    const SceneGraph& scene(const std::string& scene_id) const;
    const std::vector<Episode>& split(Split s) const;
    const Episode& episode(const std::string& episode_id) const;
};

struct GeneratorConfig {
    int train_scenes = 30;
    int val_unseen_scenes = 6;
    int test_scenes = 6;
    int train_episodes = 1500;
    int val_seen_episodes = 100;
    int val_unseen_episodes = 200;
    int test_episodes = 200;
    int viewpoints_per_scene = 24;
    int grid_columns = 6;
    double spacing = 2.0;
    double jitter = 0.3;
    double mean_degree = 3.0;
    int min_path_edges = 5;
    int max_path_edges = 7;
    int landmark_count = 16;
    int direction_words = 8;
    int vocab_size = 64;
    int tokens_per_sub_instruction = 4;
    int feature_dim = 16;
    double feature_noise = 0.1;
    int max_retries = 200;

    /// Throws snapnav::Error when the parameters cannot produce a valid dataset.
    void validate() const;
    int first_landmark_word() const { return kFirstDirectionWord + direction_words; }
    int first_filler_word() const { return first_landmark_word() + landmark_count; }
};

Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed);

struct EnvConfig {
    int action_limit = 15;
    double success_radius = 3.0;
};

struct CandidateAction {
    // Target viewpoint; std::nullopt for the stop action.
    std::optional<ViewpointId> target;
    std::vector<double> feature;
    bool is_stop() const { return !target.has_value(); }
};

struct Observation {
    ViewpointId current_viewpoint = 0;
    // Neighbors in ascending id order, then the stop action.
    std::vector<CandidateAction> candidates;
    int steps_taken = 0;
};

struct TerminalResult {
    std::vector<ViewpointId> trajectory;
    // Actions taken, including the final stop when the agent chose it.
    int action_count = 0;
    bool success = false;
    bool forced_stop = false;
    double final_distance = 0.0;
    double path_length = 0.0;
};

/// Single-run environment for one episode.
class NavEnv {
   public:
    NavEnv(const SceneGraph& scene, const Episode& episode, EnvConfig config = {});

    Observation reset();
    /// Throws std::out_of_range for an invalid action index.
    std::variant<Observation, TerminalResult> step(std::size_t action_index);

    const Observation& observation() const { return obs_; }
    const std::vector<ViewpointId>& trajectory() const { return trajectory_; }
    const SceneGraph& scene() const { return *scene_; }
    const Episode& episode() const { return *episode_; }
    const EnvConfig& config() const { return config_; }

   private:
    Observation observe(ViewpointId v, int steps) const;
    TerminalResult finish(bool forced) const;

    const SceneGraph* scene_;
    const Episode* episode_;
    EnvConfig config_;
    Observation obs_;
    std::vector<ViewpointId> trajectory_;
    int actions_ = 0;
    bool done_ = false;
};

/// Convenience overload resolving the episode's scene in a dataset.
NavEnv make_env(const Dataset& data, const Episode& episode, EnvConfig config = {});

/// Index of the candidate that the geodesic teacher would take: the next
/// hop of a shortest path to the goal, or stop when the agent is within the
/// success radius and no neighbor is closer.
std::size_t teacher_action(const SceneGraph& scene, const Episode& episode, const Observation& obs,
                           double success_radius);

/// 0-based index of the first sub-instruction aligned with v. Off-path
/// viewpoints are first replaced by the geodesically nearest path
/// viewpoint (ties go to the earliest path position).
std::size_t map_viewpoint_to_subinstruction(const Episode& episode, ViewpointId v, const SceneGraph& scene);

}  // namespace snapnav
