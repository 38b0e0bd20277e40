#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapnav/metrics.hpp"
#include "snapnav/navsim.hpp"
#include "snapnav/policy.hpp"
#include "snapnav/snapshot.hpp"

namespace snapnav {

/// Snapshots keyed by id.
class SnapshotRegistry {
   public:
    SnapshotRegistry() = default;
    explicit SnapshotRegistry(std::vector<Snapshot> snapshots);

    /// Throws snapnav::Error on a duplicate id.
    void add(Snapshot s);
    bool contains(const std::string& id) const { return snapshots_.count(id) > 0; }
    /// Throws snapnav::Error for an unknown id.
    const Snapshot& get(const std::string& id) const;
    std::vector<std::string> ids() const;  // sorted
    std::size_t size() const { return snapshots_.size(); }

   private:
    std::map<std::string, Snapshot> snapshots_;
};

/// Anything that scores candidate actions and keeps its own recurrent state.
class Agent {
   public:
    virtual ~Agent() = default;
    virtual const std::string& id() const = 0;
    virtual void begin(const SceneGraph& scene, const Episode& episode) = 0;
    virtual std::vector<double> scores(const Observation& obs) = 0;
    /// Attention logits of the last scores() call, if the agent has any.
    virtual const Mat* attention() const { return nullptr; }
    virtual void update(std::size_t taken_action) = 0;
};

class PolicyAgent : public Agent {
   public:
    PolicyAgent(std::string id, const PolicyParams& params);
    const std::string& id() const override { return id_; }
    void begin(const SceneGraph& scene, const Episode& episode) override;
    std::vector<double> scores(const Observation& obs) override;
    const Mat* attention() const override;
    void update(std::size_t taken_action) override;

   private:
    std::string id_;
    const PolicyParams* params_;
    std::unique_ptr<ad::Tape> tape_;
    std::unique_ptr<PolicyGraph> graph_;
    PolicyState state_;
    std::optional<ActionScores> last_;
};

/// Oracle pseudo-snapshot: score 1 on the teacher action, 0 elsewhere.
class TeacherAgent : public Agent {
   public:
    explicit TeacherAgent(EnvConfig env = {}) : env_(env) {}
    const std::string& id() const override { return id_; }
    void begin(const SceneGraph& scene, const Episode& episode) override;
    std::vector<double> scores(const Observation& obs) override;
    void update(std::size_t) override {}

   private:
    std::string id_ = "teacher";
    EnvConfig env_;
    const SceneGraph* scene_ = nullptr;
    const Episode* episode_ = nullptr;
};

/// Elementwise sum in the given order. Throws snapnav::Error on an empty
/// set or a length mismatch.
std::vector<double> fused_predict(const std::vector<std::vector<double>>& member_scores);

struct RecordOptions {
    bool scores = true;
    bool attention = false;
};

/// Fused greedy rollout: each member scores from its own state, the argmax
/// of the summed scores is executed, and every member updates with it.
RunRecord run_episode(const std::vector<Agent*>& members, const SceneGraph& scene, const Episode& episode,
                      const EnvConfig& env = {}, const RecordOptions& options = {});

struct EnsembleSpec {
    std::vector<std::string> members;  // sorted ids
    int found_at_size = 0;
    double validation_sr = 0.0;
};

nlohmann::json ensemble_spec_to_json(const EnsembleSpec& s);
EnsembleSpec ensemble_spec_from_json(const nlohmann::json& j);

/// Agents for a spec's members, in sorted-id order.
std::vector<std::unique_ptr<Agent>> make_agents(const EnsembleSpec& spec, const SnapshotRegistry& registry);

std::vector<RunRecord> evaluate_records(const EnsembleSpec& spec, const SnapshotRegistry& registry, const Dataset& data,
                                        const std::vector<Episode>& episodes, const EnvConfig& env = {},
                                        const RecordOptions& options = {});
std::vector<RunRecord> evaluate_records(const std::vector<Agent*>& members, const Dataset& data,
                                        const std::vector<Episode>& episodes, const EnvConfig& env = {},
                                        const RecordOptions& options = {});
double evaluate(const EnsembleSpec& spec, const SnapshotRegistry& registry, const Dataset& data,
                const std::vector<Episode>& episodes, const EnvConfig& env = {});

struct SearchConfig {
    int beam_width = 3;  // l
    int max_size = 4;    // k
    bool dedupe = true;
};

struct TraceEntry {
    std::vector<std::size_t> subset;  // sorted candidate indices
    double sr = 0.0;
};

struct SearchTrace {
    std::vector<std::string> candidates;
    std::vector<TraceEntry> entries;  // evaluation order
    std::size_t count() const { return entries.size(); }
};

nlohmann::json search_trace_to_json(const SearchTrace& t);
SearchTrace search_trace_from_json(const nlohmann::json& j);

/// M + l * sum_{j=2..k} (M - j + 1).
std::size_t search_budget(std::size_t m, int beam_width, int max_size);

using SubsetEvaluator = std::function<double(const std::vector<std::size_t>& subset)>;

struct SearchResult {
    std::vector<std::size_t> best;
    double best_sr = 0.0;
    int found_at_size = 0;
    SearchTrace trace;
};

/// Layered beam search over subsets of {0..m-1}. Throws snapnav::Error when
/// k exceeds m or l < 1.
SearchResult beam_search(std::size_t m, const SearchConfig& config, const SubsetEvaluator& evaluate_subset);

/// Beam search over registry snapshots scored by fused greedy SR on `episodes`.
std::pair<EnsembleSpec, SearchTrace> beam_search_select(const SnapshotRegistry& registry,
                                                        const std::vector<std::string>& candidates,
                                                        const SearchConfig& config, const Dataset& data,
                                                        const std::vector<Episode>& episodes,
                                                        const EnvConfig& env = {});

}  // namespace snapnav
