#include "snapnav/navsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "snapnav/common.hpp"

namespace snapnav {

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val_seen: return "val_seen";
        case Split::val_unseen: return "val_unseen";
        case Split::test: return "test";
    }
    return "unknown";
}

Split split_from_string(const std::string& name) {
    for (Split s : kAllSplits) {
        if (to_string(s) == name) return s;
    }
    throw Error("unknown split '" + name + "'");
}

// ---------------------------------------------------------------------------
// SceneGraph

SceneGraph::SceneGraph(std::string scene_id, std::vector<Viewpoint> viewpoints,
                       std::set<std::pair<ViewpointId, ViewpointId>> edges)
    : scene_id_(std::move(scene_id)), viewpoints_(std::move(viewpoints)) {
    const auto n = viewpoints_.size();
    if (n == 0) throw Error("scene " + scene_id_ + ": no viewpoints");
    for (std::size_t i = 0; i < n; ++i) {
        if (viewpoints_[i].id != static_cast<ViewpointId>(i))
            throw Error("scene " + scene_id_ + ": viewpoint ids must be dense and ordered");
    }
    adjacency_.assign(n, {});
    for (auto [a, b] : edges) {
        if (a == b) throw Error("scene " + scene_id_ + ": self-edge at " + std::to_string(a));
        if (!contains(a) || !contains(b)) throw Error("scene " + scene_id_ + ": edge endpoint does not exist");
        if (a > b) std::swap(a, b);
        if (!edges_.emplace(a, b).second) continue;
        adjacency_[a].push_back(b);
        adjacency_[b].push_back(a);
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());

    feature_dim_ = -1;
    for (const auto& vp : viewpoints_) {
        const auto& adj = adjacency_[vp.id];
        if (vp.candidate_features.size() != adj.size())
            throw Error("scene " + scene_id_ + ": candidate features of viewpoint " + std::to_string(vp.id) +
                        " do not match its neighbor set");
        for (ViewpointId nb : adj) {
            auto it = vp.candidate_features.find(nb);
            if (it == vp.candidate_features.end())
                throw Error("scene " + scene_id_ + ": missing candidate feature " + std::to_string(vp.id) + "->" +
                            std::to_string(nb));
            const int dim = static_cast<int>(it->second.size());
            if (feature_dim_ < 0) feature_dim_ = dim;
            if (dim != feature_dim_ || dim == 0)
                throw Error("scene " + scene_id_ + ": inconsistent feature dimension");
        }
    }
    if (feature_dim_ < 0) feature_dim_ = 0;

    constexpr double inf = std::numeric_limits<double>::infinity();
    distances_.assign(n * n, inf);
    for (std::size_t i = 0; i < n; ++i) distances_[i * n + i] = 0.0;
    for (auto [a, b] : edges_) {
        const double len = (viewpoints_[a].position - viewpoints_[b].position).norm();
        if (!(len > 0.0)) throw Error("scene " + scene_id_ + ": zero-length edge");
        distances_[a * n + b] = len;
        distances_[b * n + a] = len;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double dik = distances_[i * n + k];
            if (dik == inf) continue;
            for (std::size_t j = 0; j < n; ++j) {
                const double cand = dik + distances_[k * n + j];
                if (cand < distances_[i * n + j]) distances_[i * n + j] = cand;
            }
        }
    for (double d : distances_) {
        if (d == inf) throw Error("scene " + scene_id_ + ": graph is not connected");
    }
}

const Viewpoint& SceneGraph::viewpoint(ViewpointId id) const {
    if (!contains(id)) throw std::out_of_range("unknown viewpoint " + std::to_string(id) + " in " + scene_id_);
    return viewpoints_[id];
}

const std::vector<ViewpointId>& SceneGraph::neighbors(ViewpointId id) const {
    if (!contains(id)) throw std::out_of_range("unknown viewpoint " + std::to_string(id) + " in " + scene_id_);
    return adjacency_[id];
}

bool SceneGraph::adjacent(ViewpointId a, ViewpointId b) const {
    return edges_.count({std::min(a, b), std::max(a, b)}) > 0;
}

double SceneGraph::edge_length(ViewpointId a, ViewpointId b) const {
    if (!adjacent(a, b)) throw Error("no edge " + std::to_string(a) + "-" + std::to_string(b) + " in " + scene_id_);
    return (viewpoint(a).position - viewpoint(b).position).norm();
}

double SceneGraph::distance(ViewpointId a, ViewpointId b) const {
    if (!contains(a) || !contains(b))
        throw std::out_of_range("unknown viewpoint in distance query on " + scene_id_);
    return distances_[static_cast<std::size_t>(a) * size() + static_cast<std::size_t>(b)];
}

double shortest_path_distance(const SceneGraph& scene, ViewpointId a, ViewpointId b) {
    return scene.distance(a, b);
}

std::vector<ViewpointId> shortest_path(const SceneGraph& scene, ViewpointId a, ViewpointId b) {
    std::vector<ViewpointId> path{a};
    ViewpointId cur = a;
    while (cur != b) {
        ViewpointId best = -1;
        double best_cost = std::numeric_limits<double>::infinity();
        for (ViewpointId nb : scene.neighbors(cur)) {
            const double cost = scene.edge_length(cur, nb) + scene.distance(nb, b);
            if (cost < best_cost) {
                best_cost = cost;
                best = nb;
            }
        }
        cur = best;
        path.push_back(cur);
        if (path.size() > scene.size()) throw Error("shortest path reconstruction did not terminate");
    }
    return path;
}

// ---------------------------------------------------------------------------
// Episodes and datasets

void validate_episode(const Episode& episode, const SceneGraph& scene) {
    const std::string where = "episode " + episode.episode_id + ": ";
    if (episode.scene_id != scene.scene_id()) throw Error(where + "scene mismatch");
    if (episode.path.empty()) throw Error(where + "empty path");
    for (ViewpointId v : episode.path) {
        if (!scene.contains(v)) throw Error(where + "path viewpoint " + std::to_string(v) + " not in scene");
    }
    for (std::size_t i = 1; i < episode.path.size(); ++i) {
        if (!scene.adjacent(episode.path[i - 1], episode.path[i]))
            throw Error(where + "path step " + std::to_string(i) + " is not an edge");
    }
    if (episode.sub_instructions.empty()) throw Error(where + "no sub-instructions");
    int expected_begin = 0;
    std::set<ViewpointId> aligned;
    for (const auto& sub : episode.sub_instructions) {
        if (sub.token_begin != expected_begin || sub.token_end <= sub.token_begin)
            throw Error(where + "sub-instruction ranges do not partition the instruction");
        expected_begin = sub.token_end;
        aligned.insert(sub.viewpoints.begin(), sub.viewpoints.end());
    }
    if (expected_begin != static_cast<int>(episode.instruction.size()))
        throw Error(where + "sub-instruction ranges do not cover the instruction");
    const std::set<ViewpointId> on_path(episode.path.begin(), episode.path.end());
    if (aligned != on_path) throw Error(where + "aligned viewpoints do not equal the path");
}

const SceneGraph& Dataset::scene(const std::string& scene_id) const {
    for (const auto& s : scenes) {
        if (s.scene_id() == scene_id) return s;
    }
    throw Error("unknown scene '" + scene_id + "'");
}

const std::vector<Episode>& Dataset::split(Split s) const {
    static const std::vector<Episode> empty;
    auto it = episodes.find(s);
    return it == episodes.end() ? empty : it->second;
}

const Episode& Dataset::episode(const std::string& episode_id) const {
    for (const auto& [split, list] : episodes) {
        for (const auto& ep : list) {
            if (ep.episode_id == episode_id) return ep;
        }
    }
    throw Error("unknown episode '" + episode_id + "'");
}

// ---------------------------------------------------------------------------
// Generation

namespace {

struct GridLayout {
    int columns;
    int n;
    int col(int i) const { return i % columns; }
    int row(int i) const { return i / columns; }
};

std::vector<std::pair<int, int>> allowed_pairs(const GridLayout& grid) {
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < grid.n; ++a) {
        for (int b = a + 1; b < grid.n; ++b) {
            if (std::abs(grid.col(a) - grid.col(b)) <= 1 && std::abs(grid.row(a) - grid.row(b)) <= 1)
                pairs.emplace_back(a, b);
        }
    }
    return pairs;
}

int target_edge_count(const GeneratorConfig& c) {
    return static_cast<int>(std::lround(c.mean_degree * c.viewpoints_per_scene / 2.0));
}

int find_root(std::vector<int>& parent, int x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

double bearing(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
    const Eigen::Vector2d d = to - from;
    return std::atan2(d.y(), d.x());
}

int direction_bucket(double angle, int buckets) {
    const double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(angle, two_pi);
    if (a < 0) a += two_pi;
    const int b = static_cast<int>(std::floor(a / (two_pi / buckets) + 0.5));
    return b % buckets;
}

SceneGraph generate_scene(const GeneratorConfig& c, const std::string& scene_id,
                          const std::vector<std::vector<double>>& landmark_codes, std::mt19937_64& rng) {
    const GridLayout grid{c.grid_columns, c.viewpoints_per_scene};
    std::uniform_real_distribution<double> jitter(-c.jitter, c.jitter);
    std::uniform_int_distribution<int> landmark(0, c.landmark_count - 1);
    std::normal_distribution<double> noise(0.0, c.feature_noise);

    std::vector<Viewpoint> vps(grid.n);
    for (int i = 0; i < grid.n; ++i) {
        vps[i].id = i;
        vps[i].position = Eigen::Vector2d(grid.col(i) * c.spacing + jitter(rng), grid.row(i) * c.spacing + jitter(rng));
        vps[i].landmark = landmark(rng);
    }

    auto pairs = allowed_pairs(grid);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    std::vector<int> parent(grid.n);
    std::iota(parent.begin(), parent.end(), 0);
    std::set<std::pair<ViewpointId, ViewpointId>> edges;
    std::vector<std::pair<int, int>> spare;
    for (auto [a, b] : pairs) {
        const int ra = find_root(parent, a);
        const int rb = find_root(parent, b);
        if (ra != rb) {
            parent[ra] = rb;
            edges.emplace(a, b);
        } else {
            spare.emplace_back(a, b);
        }
    }
    const int target = target_edge_count(c);
    for (auto it = spare.begin(); it != spare.end() && static_cast<int>(edges.size()) < target; ++it)
        edges.insert(*it);

    const int code_dim = c.feature_dim - 2;
    for (auto [a, b] : edges) {
        for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            std::vector<double> f(c.feature_dim);
            const auto& code = landmark_codes[vps[to].landmark];
            for (int k = 0; k < code_dim; ++k) f[k] = code[k] + noise(rng);
            const double theta = bearing(vps[from].position, vps[to].position);
            f[code_dim] = std::cos(theta);
            f[code_dim + 1] = std::sin(theta);
            vps[from].candidate_features[to] = std::move(f);
        }
    }
    return SceneGraph(scene_id, std::move(vps), std::move(edges));
}

bool scene_supports_paths(const SceneGraph& scene, const GeneratorConfig& c) {
    for (ViewpointId a = 0; a < static_cast<ViewpointId>(scene.size()); ++a) {
        for (ViewpointId b = 0; b < static_cast<ViewpointId>(scene.size()); ++b) {
            const int hops = static_cast<int>(shortest_path(scene, a, b).size()) - 1;
            if (hops >= c.min_path_edges && hops <= c.max_path_edges) return true;
        }
    }
    return false;
}

Episode generate_episode(const GeneratorConfig& c, const SceneGraph& scene, Split split, int index,
                         std::mt19937_64& rng) {
    std::uniform_int_distribution<ViewpointId> pick_start(0, static_cast<ViewpointId>(scene.size()) - 1);
    for (int attempt = 0; attempt < c.max_retries; ++attempt) {
        const ViewpointId start = pick_start(rng);
        std::vector<std::vector<ViewpointId>> options;
        for (ViewpointId goal = 0; goal < static_cast<ViewpointId>(scene.size()); ++goal) {
            auto path = shortest_path(scene, start, goal);
            const int hops = static_cast<int>(path.size()) - 1;
            if (hops >= c.min_path_edges && hops <= c.max_path_edges) options.push_back(std::move(path));
        }
        if (options.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
        Episode ep;
        ep.path = options[pick(rng)];
        ep.scene_id = scene.scene_id();
        ep.split = split;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s_%05d", to_string(split).c_str(), index);
        ep.episode_id = buf;

        std::uniform_int_distribution<TokenId> filler(c.first_filler_word(), c.vocab_size - 1);
        const int segments = static_cast<int>(ep.path.size()) - 1;
        for (int s = 0; s < segments; ++s) {
            const auto& from = scene.viewpoint(ep.path[s]);
            const auto& to = scene.viewpoint(ep.path[s + 1]);
            SubInstruction sub;
            sub.token_begin = static_cast<int>(ep.instruction.size());
            std::vector<TokenId> words(c.tokens_per_sub_instruction);
            words[0] = kFirstDirectionWord + direction_bucket(bearing(from.position, to.position), c.direction_words);
            words[1] = c.first_landmark_word() + to.landmark;
            for (int k = 2; k < c.tokens_per_sub_instruction; ++k) words[k] = filler(rng);
            if (s + 1 == segments && c.tokens_per_sub_instruction > 2) words[2] = kStopWord;
            ep.instruction.insert(ep.instruction.end(), words.begin(), words.end());
            sub.token_end = static_cast<int>(ep.instruction.size());
            sub.viewpoints.push_back(from.id);
            if (s + 1 == segments) sub.viewpoints.push_back(to.id);
            ep.sub_instructions.push_back(std::move(sub));
        }
        return ep;
    }
    throw Error("scene " + scene.scene_id() + ": no path with " + std::to_string(c.min_path_edges) + "-" +
                std::to_string(c.max_path_edges) + " edges after " + std::to_string(c.max_retries) + " attempts");
}

}  // namespace

void GeneratorConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error("generator config: " + msg); };
    if (viewpoints_per_scene < 2) fail("need at least 2 viewpoints per scene");
    if (grid_columns < 1) fail("grid_columns must be positive");
    if (spacing <= 0.0) fail("spacing must be positive");
    if (jitter < 0.0 || jitter >= spacing / 2.0) fail("jitter must lie in [0, spacing/2)");
    const int n = viewpoints_per_scene;
    const double min_degree = 2.0 * (n - 1) / n;
    const GridLayout grid{grid_columns, n};
    const auto max_edges = static_cast<int>(allowed_pairs(grid).size());
    if (target_edge_count(*this) < n - 1)
        fail("mean_degree " + std::to_string(mean_degree) + " is below the connected minimum " +
             std::to_string(min_degree));
    if (target_edge_count(*this) > max_edges)
        fail("mean_degree " + std::to_string(mean_degree) + " exceeds what the grid layout admits");
    if (min_path_edges < 1 || max_path_edges < min_path_edges) fail("invalid path length range");
    if (max_path_edges >= n) fail("path length range exceeds the scene size");
    if (train_scenes < 1) fail("need at least one train scene");
    if (val_unseen_scenes < 0 || test_scenes < 0) fail("scene counts must be non-negative");
    if ((val_unseen_episodes > 0 && val_unseen_scenes == 0) || (test_episodes > 0 && test_scenes == 0))
        fail("a split with episodes needs scenes");
    if (train_episodes < 0 || val_seen_episodes < 0 || val_unseen_episodes < 0 || test_episodes < 0)
        fail("episode counts must be non-negative");
    if (landmark_count < 1 || direction_words < 1) fail("need landmarks and direction words");
    if (tokens_per_sub_instruction < 2) fail("tokens_per_sub_instruction must be at least 2");
    if (vocab_size <= first_filler_word()) fail("vocab_size too small for the reserved, direction and landmark words");
    if (feature_dim < 3) fail("feature_dim must be at least 3");
    if (feature_noise < 0.0) fail("feature_noise must be non-negative");
    if (max_retries < 1) fail("max_retries must be positive");
}

Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> codes(config.landmark_count, std::vector<double>(config.feature_dim - 2));
    for (auto& code : codes) {
        double norm = 0.0;
        for (auto& x : code) {
            x = gauss(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : code) x /= norm;
    }

    Dataset data;
    data.vocab_size = config.vocab_size;
    const int total_scenes = config.train_scenes + config.val_unseen_scenes + config.test_scenes;
    for (int s = 0; s < total_scenes; ++s) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "scene_%03d", s);
        bool ok = false;
        for (int attempt = 0; attempt < config.max_retries && !ok; ++attempt) {
            SceneGraph scene = generate_scene(config, buf, codes, rng);
            if (scene_supports_paths(scene, config)) {
                data.scenes.push_back(std::move(scene));
                ok = true;
            }
        }
        if (!ok)
            throw Error(std::string("could not generate ") + buf + " with a path of " +
                        std::to_string(config.min_path_edges) + "+ edges; path lengths exceed the graph diameter");
    }

    auto scene_range = [&](int begin, int count) {
        std::vector<const SceneGraph*> out;
        for (int i = begin; i < begin + count; ++i) out.push_back(&data.scenes[i]);
        return out;
    };
    const auto train = scene_range(0, config.train_scenes);
    const auto val_unseen = scene_range(config.train_scenes, config.val_unseen_scenes);
    const auto test = scene_range(config.train_scenes + config.val_unseen_scenes, config.test_scenes);

    auto fill = [&](Split split, const std::vector<const SceneGraph*>& pool, int count) {
        auto& list = data.episodes[split];
        for (int i = 0; i < count; ++i) {
            const SceneGraph& scene = *pool[static_cast<std::size_t>(i) % pool.size()];
            list.push_back(generate_episode(config, scene, split, i, rng));
        }
    };
    fill(Split::train, train, config.train_episodes);
    fill(Split::val_seen, train, config.val_seen_episodes);
    fill(Split::val_unseen, val_unseen, config.val_unseen_episodes);
    fill(Split::test, test, config.test_episodes);
    return data;
}

// ---------------------------------------------------------------------------
// Environment

NavEnv::NavEnv(const SceneGraph& scene, const Episode& episode, EnvConfig config)
    : scene_(&scene), episode_(&episode), config_(config) {
    if (episode.scene_id != scene.scene_id()) throw Error("episode " + episode.episode_id + " is not in scene " + scene.scene_id());
    reset();
}

NavEnv make_env(const Dataset& data, const Episode& episode, EnvConfig config) {
    return NavEnv(data.scene(episode.scene_id), episode, config);
}

Observation NavEnv::observe(ViewpointId v, int steps) const {
    Observation obs;
    obs.current_viewpoint = v;
    obs.steps_taken = steps;
    const auto& vp = scene_->viewpoint(v);
    for (ViewpointId nb : scene_->neighbors(v)) obs.candidates.push_back({nb, vp.candidate_features.at(nb)});
    obs.candidates.push_back({std::nullopt, std::vector<double>(scene_->feature_dim(), 0.0)});
    return obs;
}

Observation NavEnv::reset() {
    trajectory_ = {episode_->start()};
    actions_ = 0;
    done_ = false;
    obs_ = observe(episode_->start(), 0);
    return obs_;
}

TerminalResult NavEnv::finish(bool forced) const {
    TerminalResult r;
    r.trajectory = trajectory_;
    r.action_count = actions_;
    r.forced_stop = forced;
    r.final_distance = scene_->distance(trajectory_.back(), episode_->goal());
    r.success = r.final_distance <= config_.success_radius;
    for (std::size_t i = 1; i < trajectory_.size(); ++i) r.path_length += scene_->edge_length(trajectory_[i - 1], trajectory_[i]);
    return r;
}

std::variant<Observation, TerminalResult> NavEnv::step(std::size_t action_index) {
    if (done_) throw Error("step() called on a finished episode");
    if (action_index >= obs_.candidates.size())
        throw std::out_of_range("action index " + std::to_string(action_index) + " out of range (" +
                                std::to_string(obs_.candidates.size()) + " candidates)");
    ++actions_;
    const auto& chosen = obs_.candidates[action_index];
    if (chosen.is_stop()) {
        done_ = true;
        return finish(false);
    }
    trajectory_.push_back(*chosen.target);
    const int moves = static_cast<int>(trajectory_.size()) - 1;
    if (moves >= config_.action_limit) {
        done_ = true;
        return finish(true);
    }
    obs_ = observe(*chosen.target, moves);
    return obs_;
}

std::size_t teacher_action(const SceneGraph& scene, const Episode& episode, const Observation& obs,
                           double success_radius) {
    const ViewpointId goal = episode.goal();
    std::size_t best = obs.candidates.size() - 1;
    double best_dist = std::numeric_limits<double>::infinity();
    double best_via = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < obs.candidates.size(); ++i) {
        const auto& c = obs.candidates[i];
        if (c.is_stop()) continue;
        // Next hop of a geodesic path; among equally short routes the
        // endpoint nearest the goal wins.
        const double d = scene.distance(*c.target, goal);
        const double via = scene.edge_length(obs.current_viewpoint, *c.target) + d;
        if (via < best_via - 1e-12 || (via <= best_via + 1e-12 && d < best_dist)) {
            best_via = via;
            best_dist = d;
            best = i;
        }
    }
    const double here = scene.distance(obs.current_viewpoint, goal);
    if (here <= success_radius && here <= best_dist) return obs.candidates.size() - 1;
    return best;
}

std::size_t map_viewpoint_to_subinstruction(const Episode& episode, ViewpointId v, const SceneGraph& scene) {
    ViewpointId anchor = v;
    if (std::find(episode.path.begin(), episode.path.end(), v) == episode.path.end()) {
        double best = std::numeric_limits<double>::infinity();
        for (ViewpointId p : episode.path) {
            const double d = scene.distance(v, p);
            if (d < best) {
                best = d;
                anchor = p;
            }
        }
    }
    for (std::size_t i = 0; i < episode.sub_instructions.size(); ++i) {
        const auto& vps = episode.sub_instructions[i].viewpoints;
        if (std::find(vps.begin(), vps.end(), anchor) != vps.end()) return i;
    }
    throw Error("episode " + episode.episode_id + ": viewpoint " + std::to_string(anchor) +
                " is not aligned with any sub-instruction");
}

}  // namespace snapnav
