#include "snapnav/ensemble.hpp"

#include <algorithm>
#include <set>

#include "snapnav/common.hpp"
#include "snapnav/losses.hpp"
#include "snapnav/training.hpp"

namespace snapnav {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Registry

SnapshotRegistry::SnapshotRegistry(std::vector<Snapshot> snapshots) {
    for (auto& s : snapshots) add(std::move(s));
}

void SnapshotRegistry::add(Snapshot s) {
    if (contains(s.snapshot_id)) throw Error("duplicate snapshot id '" + s.snapshot_id + "'");
    std::string id = s.snapshot_id;
    snapshots_.emplace(std::move(id), std::move(s));
}

const Snapshot& SnapshotRegistry::get(const std::string& id) const {
    auto it = snapshots_.find(id);
    if (it == snapshots_.end()) throw Error("unknown snapshot id '" + id + "'");
    return it->second;
}

std::vector<std::string> SnapshotRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : snapshots_) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// Agents

PolicyAgent::PolicyAgent(std::string id, const PolicyParams& params) : id_(std::move(id)), params_(&params) {}

void PolicyAgent::begin(const SceneGraph&, const Episode& episode) {
    graph_.reset();
    tape_ = std::make_unique<ad::Tape>(false);
    graph_ = std::make_unique<PolicyGraph>(*params_, *tape_);
    state_ = graph_->encode_instruction(episode.instruction);
    last_.reset();
}

std::vector<double> PolicyAgent::scores(const Observation& obs) {
    if (!graph_) throw Error("PolicyAgent::scores called before begin()");
    last_ = graph_->predict(state_, obs);
    return last_->scores;
}

const Mat* PolicyAgent::attention() const { return last_ ? &last_->attention_rows : nullptr; }

void PolicyAgent::update(std::size_t taken_action) {
    if (!last_) throw Error("PolicyAgent::update called before scores()");
    state_ = graph_->update_state(state_, *last_, taken_action);
}

void TeacherAgent::begin(const SceneGraph& scene, const Episode& episode) {
    scene_ = &scene;
    episode_ = &episode;
}

std::vector<double> TeacherAgent::scores(const Observation& obs) {
    if (!scene_) throw Error("TeacherAgent::scores called before begin()");
    std::vector<double> out(obs.candidates.size(), 0.0);
    out[teacher_action(*scene_, *episode_, obs, env_.success_radius)] = 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Fused inference

std::vector<double> fused_predict(const std::vector<std::vector<double>>& member_scores) {
    if (member_scores.empty()) throw Error("fused_predict: no members");
    std::vector<double> out = member_scores.front();
    for (std::size_t m = 1; m < member_scores.size(); ++m) {
        if (member_scores[m].size() != out.size())
            throw Error("fused_predict: member " + std::to_string(m) + " has " + std::to_string(member_scores[m].size()) +
                        " scores, expected " + std::to_string(out.size()));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += member_scores[m][i];
    }
    return out;
}

RunRecord run_episode(const std::vector<Agent*>& members, const SceneGraph& scene, const Episode& episode,
                      const EnvConfig& env_config, const RecordOptions& options) {
    if (members.empty()) throw Error("run_episode: empty ensemble");
    RunRecord rec;
    rec.episode_id = episode.episode_id;
    rec.scene_id = episode.scene_id;
    for (const Agent* a : members) rec.members.push_back(a->id());
    rec.optimal_length = scene.distance(episode.start(), episode.goal());
    if (options.attention) rec.instruction = episode.instruction;

    for (Agent* a : members) a->begin(scene, episode);
    NavEnv env(scene, episode, env_config);
    Observation obs = env.reset();
    std::vector<ViewpointId> visited;
    while (true) {
        visited.push_back(obs.current_viewpoint);
        std::vector<std::vector<double>> scores;
        scores.reserve(members.size());
        for (Agent* a : members) scores.push_back(a->scores(obs));
        std::vector<double> fused = fused_predict(scores);
        const std::size_t action = argmax(fused);

        if (options.scores || options.attention) {
            StepRecord step;
            step.action = action;
            if (options.attention) {
                for (const Agent* a : members) {
                    if (const Mat* rows = a->attention()) {
                        auto target = build_attention_target(episode, visited, scene);
                        if (rows->rows() < target.rows.rows())
                            target.rows = target.rows.bottomRows(rows->rows()).eval();
                        step.attention = *rows;
                        step.attention_target = std::move(target.rows);
                        break;
                    }
                }
            }
            if (options.scores) {
                step.member_scores = std::move(scores);
                step.fused = fused;
            }
            rec.steps.push_back(std::move(step));
        }

        auto next = env.step(action);
        if (auto* done = std::get_if<TerminalResult>(&next)) {
            rec.trajectory = std::move(done->trajectory);
            rec.action_count = done->action_count;
            rec.success = done->success;
            rec.forced_stop = done->forced_stop;
            rec.final_distance = done->final_distance;
            rec.path_length = done->path_length;
            break;
        }
        for (Agent* a : members) a->update(action);
        obs = std::move(std::get<Observation>(next));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Specs and evaluation

json ensemble_spec_to_json(const EnsembleSpec& s) {
    return {{"members", s.members}, {"found_at_size", s.found_at_size}, {"validation_sr", s.validation_sr}};
}

EnsembleSpec ensemble_spec_from_json(const json& j) {
    EnsembleSpec s;
    s.members = j.at("members").get<std::vector<std::string>>();
    s.found_at_size = j.value("found_at_size", static_cast<int>(s.members.size()));
    s.validation_sr = j.value("validation_sr", 0.0);
    if (s.members.empty()) throw Error("ensemble spec has no members");
    std::sort(s.members.begin(), s.members.end());
    if (std::adjacent_find(s.members.begin(), s.members.end()) != s.members.end())
        throw Error("ensemble spec lists a member twice");
    return s;
}

std::vector<std::unique_ptr<Agent>> make_agents(const EnsembleSpec& spec, const SnapshotRegistry& registry) {
    std::vector<std::string> ids = spec.members;
    std::sort(ids.begin(), ids.end());
    std::vector<std::unique_ptr<Agent>> out;
    for (const auto& id : ids) out.push_back(std::make_unique<PolicyAgent>(id, registry.get(id).params));
    return out;
}

std::vector<RunRecord> evaluate_records(const std::vector<Agent*>& members, const Dataset& data,
                                        const std::vector<Episode>& episodes, const EnvConfig& env,
                                        const RecordOptions& options) {
    std::vector<RunRecord> out;
    out.reserve(episodes.size());
    for (const auto& ep : episodes) out.push_back(run_episode(members, data.scene(ep.scene_id), ep, env, options));
    return out;
}

std::vector<RunRecord> evaluate_records(const EnsembleSpec& spec, const SnapshotRegistry& registry, const Dataset& data,
                                        const std::vector<Episode>& episodes, const EnvConfig& env,
                                        const RecordOptions& options) {
    auto agents = make_agents(spec, registry);
    std::vector<Agent*> members;
    for (auto& a : agents) members.push_back(a.get());
    return evaluate_records(members, data, episodes, env, options);
}

namespace {

double sr_of(const std::vector<RunRecord>& records) {
    if (records.empty()) return 0.0;
    std::size_t wins = 0;
    for (const auto& r : records) wins += r.success ? 1 : 0;
    return 100.0 * static_cast<double>(wins) / static_cast<double>(records.size());
}

}  // namespace

double evaluate(const EnsembleSpec& spec, const SnapshotRegistry& registry, const Dataset& data,
                const std::vector<Episode>& episodes, const EnvConfig& env) {
    return sr_of(evaluate_records(spec, registry, data, episodes, env, RecordOptions{false, false}));
}

// ---------------------------------------------------------------------------
// Beam search

json search_trace_to_json(const SearchTrace& t) {
    json entries = json::array();
    for (const auto& e : t.entries) {
        std::vector<std::string> members;
        for (auto i : e.subset) members.push_back(t.candidates.at(i));
        entries.push_back({{"subset", e.subset}, {"members", members}, {"sr", e.sr}});
    }
    return {{"candidates", t.candidates}, {"count", t.count()}, {"entries", entries}};
}

SearchTrace search_trace_from_json(const json& j) {
    SearchTrace t;
    t.candidates = j.at("candidates").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) t.entries.push_back({e.at("subset").get<std::vector<std::size_t>>(), e.at("sr")});
    return t;
}

std::size_t search_budget(std::size_t m, int beam_width, int max_size) {
    std::size_t total = m;
    for (int j = 2; j <= max_size; ++j) {
        if (static_cast<std::size_t>(j) > m) break;
        total += static_cast<std::size_t>(beam_width) * (m - static_cast<std::size_t>(j) + 1);
    }
    return total;
}

namespace {

// Higher SR first, then lexicographically smaller subset.
bool beam_order(const TraceEntry& a, const TraceEntry& b) {
    if (a.sr != b.sr) return a.sr > b.sr;
    return a.subset < b.subset;
}

}  // namespace

SearchResult beam_search(std::size_t m, const SearchConfig& config, const SubsetEvaluator& evaluate_subset) {
    if (m == 0) throw Error("beam search: no candidates");
    if (config.beam_width < 1) throw Error("beam search: beam width must be at least 1");
    if (config.max_size < 1) throw Error("beam search: max size must be at least 1");
    if (static_cast<std::size_t>(config.max_size) > m)
        throw Error("beam search: k = " + std::to_string(config.max_size) + " exceeds the " + std::to_string(m) +
                    " candidates");

    SearchResult result;
    std::map<std::vector<std::size_t>, double> seen;
    auto score = [&](const std::vector<std::size_t>& subset) {
        if (config.dedupe) {
            if (auto it = seen.find(subset); it != seen.end()) return it->second;
        }
        const double sr = evaluate_subset(subset);
        result.trace.entries.push_back({subset, sr});
        seen[subset] = sr;
        return sr;
    };

    std::vector<TraceEntry> level;
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::size_t> s{i};
        level.push_back({s, score(s)});
    }
    for (int size = 2; size <= config.max_size; ++size) {
        std::sort(level.begin(), level.end(), beam_order);
        if (level.size() > static_cast<std::size_t>(config.beam_width)) level.resize(config.beam_width);
        std::vector<TraceEntry> next;
        std::set<std::vector<std::size_t>> in_next;
        for (const auto& parent : level) {
            for (std::size_t c = 0; c < m; ++c) {
                if (std::binary_search(parent.subset.begin(), parent.subset.end(), c)) continue;
                std::vector<std::size_t> s = parent.subset;
                s.insert(std::upper_bound(s.begin(), s.end(), c), c);
                const double sr = score(s);
                if (in_next.insert(s).second) next.push_back({s, sr});
            }
        }
        level = std::move(next);
    }

    const TraceEntry* best = nullptr;
    for (const auto& e : result.trace.entries) {
        if (!best || e.sr > best->sr ||
            (e.sr == best->sr && (e.subset.size() < best->subset.size() ||
                                  (e.subset.size() == best->subset.size() && e.subset < best->subset))))
            best = &e;
    }
    result.best = best->subset;
    result.best_sr = best->sr;
    result.found_at_size = static_cast<int>(best->subset.size());
    return result;
}

std::pair<EnsembleSpec, SearchTrace> beam_search_select(const SnapshotRegistry& registry,
                                                        const std::vector<std::string>& candidates,
                                                        const SearchConfig& config, const Dataset& data,
                                                        const std::vector<Episode>& episodes, const EnvConfig& env) {
    std::vector<std::string> ids = candidates;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<std::unique_ptr<Agent>> agents;
    for (const auto& id : ids) agents.push_back(std::make_unique<PolicyAgent>(id, registry.get(id).params));

    auto evaluate_subset = [&](const std::vector<std::size_t>& subset) {
        std::vector<Agent*> members;
        for (auto i : subset) members.push_back(agents[i].get());
        return sr_of(evaluate_records(members, data, episodes, env, RecordOptions{false, false}));
    };
    SearchResult r = beam_search(ids.size(), config, evaluate_subset);
    r.trace.candidates = ids;

    EnsembleSpec spec;
    for (auto i : r.best) spec.members.push_back(ids[i]);
    spec.found_at_size = r.found_at_size;
    spec.validation_sr = r.best_sr;
    return {spec, r.trace};
}

}  // namespace snapnav
