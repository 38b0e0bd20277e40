#include "snapnav/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "snapnav/common.hpp"

namespace snapnav {

using ad::Var;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainingConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error("training config: " + msg); };
    dims.validate();
    if (total_iterations < 1) fail("total_iterations must be positive");
    if (batch_size < 1) fail("batch_size must be positive");
    if (validation_cadence < 1) fail("validation_cadence must be positive");
    if (weights.lambda < 0 || weights.alpha < 0 || weights.rl_weight < 0) fail("loss weights must be non-negative");
    if (gamma < 0 || gamma > 1) fail("gamma must lie in [0, 1]");
    if (adam.learning_rate <= 0) fail("learning_rate must be positive");
    std::vector<int> all{periods};
    all.insert(all.end(), extra_periods.begin(), extra_periods.end());
    for (int m : all) {
        if (m < 1) fail("period count must be positive");
        if (total_iterations % m != 0)
            fail("total_iterations " + std::to_string(total_iterations) + " is not divisible by " + std::to_string(m) +
                 " periods");
        if ((total_iterations / m) % validation_cadence != 0)
            fail("validation_cadence " + std::to_string(validation_cadence) + " does not divide the period length " +
                 std::to_string(total_iterations / m));
    }
}

json training_config_to_json(const TrainingConfig& c) {
    return {{"variant", to_string(c.variant)},
            {"dims",
             {{"vocab_size", c.dims.vocab_size},
              {"max_instruction_length", c.dims.max_instruction_length},
              {"d_emb", c.dims.d_emb},
              {"d_model", c.dims.d_model},
              {"d_view", c.dims.d_view},
              {"d_ff", c.dims.d_ff},
              {"self_layers", c.dims.self_layers},
              {"cross_layers", c.dims.cross_layers}}},
            {"total_iterations", c.total_iterations},
            {"periods", c.periods},
            {"extra_periods", c.extra_periods},
            {"lambda", c.weights.lambda},
            {"alpha", c.weights.alpha},
            {"rl_weight", c.weights.rl_weight},
            {"gamma", c.gamma},
            {"terminal_bonus", c.terminal_bonus},
            {"learning_rate", c.adam.learning_rate},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"epsilon", c.adam.epsilon},
            {"batch_size", c.batch_size},
            {"validation_cadence", c.validation_cadence},
            {"validation_episodes", c.validation_episodes},
            {"seed", c.seed},
            {"action_limit", c.env.action_limit},
            {"success_radius", c.env.success_radius}};
}

TrainingConfig training_config_from_json(const json& j, TrainingConfig c) {
    for (const auto& [key, v] : j.items()) {
        if (key == "variant") c.variant = variant_from_string(v.get<std::string>());
        else if (key == "dims") {
            for (const auto& [dk, dv] : v.items()) {
                if (dk == "vocab_size") c.dims.vocab_size = dv.get<int>();
                else if (dk == "max_instruction_length") c.dims.max_instruction_length = dv.get<int>();
                else if (dk == "d_emb") c.dims.d_emb = dv.get<int>();
                else if (dk == "d_model") c.dims.d_model = dv.get<int>();
                else if (dk == "d_view") c.dims.d_view = dv.get<int>();
                else if (dk == "d_ff") c.dims.d_ff = dv.get<int>();
                else if (dk == "self_layers") c.dims.self_layers = dv.get<int>();
                else if (dk == "cross_layers") c.dims.cross_layers = dv.get<int>();
                else throw Error("training config: unknown dims key '" + dk + "'");
            }
        } else if (key == "total_iterations") c.total_iterations = v.get<int>();
        else if (key == "periods") c.periods = v.get<int>();
        else if (key == "extra_periods") c.extra_periods = v.get<std::vector<int>>();
        else if (key == "lambda") c.weights.lambda = v.get<double>();
        else if (key == "alpha") c.weights.alpha = v.get<double>();
        else if (key == "rl_weight") c.weights.rl_weight = v.get<double>();
        else if (key == "gamma") c.gamma = v.get<double>();
        else if (key == "terminal_bonus") c.terminal_bonus = v.get<double>();
        else if (key == "learning_rate") c.adam.learning_rate = v.get<double>();
        else if (key == "beta1") c.adam.beta1 = v.get<double>();
        else if (key == "beta2") c.adam.beta2 = v.get<double>();
        else if (key == "epsilon") c.adam.epsilon = v.get<double>();
        else if (key == "batch_size") c.batch_size = v.get<int>();
        else if (key == "validation_cadence") c.validation_cadence = v.get<int>();
        else if (key == "validation_episodes") c.validation_episodes = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "action_limit") c.env.action_limit = v.get<int>();
        else if (key == "success_radius") c.env.success_radius = v.get<double>();
        else throw Error("training config: unknown key '" + key + "'");
    }
    return c;
}

std::uint64_t TrainingConfig::fingerprint() const {
    const std::string text = training_config_to_json(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Rollouts

std::vector<ViewpointId> Rollout::visited() const {
    std::vector<ViewpointId> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.viewpoint);
    return out;
}

std::size_t argmax(const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

namespace {

std::size_t sample_action(const std::vector<double>& scores, std::mt19937_64& rng) {
    double m = scores.front();
    for (double s : scores) m = std::max(m, s);
    std::vector<double> w(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) w[i] = std::exp(scores[i] - m);
    std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
    return dist(rng);
}

}  // namespace

Rollout run_rollout(PolicyGraph& graph, const PolicyState& initial, NavEnv& env, ActionChoice choice,
                    std::mt19937_64* rng, const std::vector<std::size_t>* replay, bool with_values,
                    double terminal_bonus) {
    if (choice == ActionChoice::sample && !rng) throw Error("sampled rollout needs an rng");
    if (choice == ActionChoice::replay && !replay) throw Error("replay rollout needs recorded actions");
    const SceneGraph& scene = env.scene();
    const ViewpointId goal = env.episode().goal();
    Rollout out;
    Observation obs = env.reset();
    PolicyState state = initial;
    while (true) {
        RolloutStep step;
        step.scores = graph.predict(state, obs);
        step.viewpoint = obs.current_viewpoint;
        step.teacher = teacher_action(scene, env.episode(), obs, env.config().success_radius);
        switch (choice) {
            case ActionChoice::teacher: step.action = step.teacher; break;
            case ActionChoice::greedy: step.action = argmax(step.scores.scores); break;
            case ActionChoice::sample: step.action = sample_action(step.scores.scores, *rng); break;
            case ActionChoice::replay:
                if (out.steps.size() >= replay->size()) throw Error("replayed actions ended before the episode");
                step.action = (*replay)[out.steps.size()];
                break;
        }
        if (with_values) step.value = graph.state_value(step.scores);
        const double before = scene.distance(obs.current_viewpoint, goal);
        auto next = env.step(step.action);
        if (auto* done = std::get_if<TerminalResult>(&next)) {
            step.reward = before - done->final_distance + (done->success ? terminal_bonus : -terminal_bonus);
            out.steps.push_back(std::move(step));
            out.result = std::move(*done);
            break;
        }
        Observation& moved = std::get<Observation>(next);
        step.reward = before - scene.distance(moved.current_viewpoint, goal);
        state = graph.update_state(state, step.scores, step.action);
        out.steps.push_back(std::move(step));
        obs = std::move(moved);
    }
    if (choice == ActionChoice::replay && out.steps.size() != replay->size())
        throw Error("replayed actions outlast the episode");
    return out;
}

// ---------------------------------------------------------------------------
// Episode loss

LossBreakdown episode_loss(const PolicyParams& params, const SceneGraph& scene, const Episode& episode,
                           const TrainingConfig& config, EpisodeTrace& trace, std::mt19937_64* rng,
                           PolicyParams* grad, double grad_scale) {
    ad::Tape tape(grad != nullptr);
    PolicyGraph graph(params, tape, grad);
    const PolicyState start = graph.encode_instruction(episode.instruction);
    NavEnv env(scene, episode, config.env);
    const LossWeights& w = config.weights;
    const bool regularize = params.variant == Variant::past_action_aware && w.alpha > 0.0;

    std::vector<Var> terms;
    std::vector<double> term_weights;
    LossBreakdown out;

    auto add_attention = [&](const Rollout& r) {
        const auto visited = r.visited();
        for (std::size_t k = 0; k < r.steps.size(); ++k) {
            auto target = build_attention_target(episode, std::span<const ViewpointId>(visited.data(), k + 1), scene);
            // The original variant exposes only the current cls row.
            const Mat& rows = r.steps[k].scores.attention_rows;
            if (rows.rows() < target.rows.rows()) target.rows = target.rows.bottomRows(rows.rows()).eval();
            out.attention += attention_loss(rows, target);
            if (regularize) {
                terms.push_back(tape.mean_squared_error(tape.tanh(r.steps[k].scores.attention_node), target.rows));
                term_weights.push_back(w.alpha);
            }
        }
    };

    // Teacher-forced rollout: imitation loss.
    const Rollout il = run_rollout(graph, start, env, ActionChoice::teacher);
    for (const auto& s : il.steps) {
        Var logp = tape.log_softmax_at(s.scores.score_node, static_cast<int>(s.action));
        out.il -= tape.scalar(logp);
        if (w.lambda > 0.0) {
            terms.push_back(logp);
            term_weights.push_back(-w.lambda);
        }
    }
    add_attention(il);

    // Sampled (or replayed) rollout: advantage actor-critic.
    const bool record = trace.rl_actions.empty();
    trace.episode_id = episode.episode_id;
    const Rollout rl = record ? run_rollout(graph, start, env, ActionChoice::sample, rng, nullptr, true, config.terminal_bonus)
                              : run_rollout(graph, start, env, ActionChoice::replay, nullptr, &trace.rl_actions, true,
                                            config.terminal_bonus);
    std::vector<double> rewards;
    for (const auto& s : rl.steps) rewards.push_back(s.reward);
    const auto returns = discounted_returns(rewards, config.gamma);
    if (record) {
        trace.rl_actions.clear();
        trace.rl_advantages.clear();
        for (std::size_t k = 0; k < rl.steps.size(); ++k) {
            trace.rl_actions.push_back(rl.steps[k].action);
            trace.rl_advantages.push_back(returns[k] - tape.scalar(*rl.steps[k].value));
        }
    } else if (trace.rl_advantages.size() != rl.steps.size()) {
        throw Error("episode trace: advantage count does not match the replayed actions");
    }
    for (std::size_t k = 0; k < rl.steps.size(); ++k) {
        const auto& s = rl.steps[k];
        Var logp = tape.log_softmax_at(s.scores.score_node, static_cast<int>(s.action));
        const double advantage = trace.rl_advantages[k];
        out.rl_policy -= advantage * tape.scalar(logp);
        Mat target(1, 1);
        target(0, 0) = returns[k];
        Var sq = tape.mean_squared_error(*s.value, target);
        out.rl_critic += tape.scalar(sq);
        if (w.rl_weight > 0.0) {
            terms.push_back(logp);
            term_weights.push_back(-w.rl_weight * advantage);
            terms.push_back(sq);
            term_weights.push_back(w.rl_weight * RlLoss::kCriticWeight);
        }
    }
    out.rl = out.rl_policy + RlLoss::kCriticWeight * out.rl_critic;
    add_attention(rl);
    out.total = total_loss(out.il, out.rl, out.attention, w, params.variant);

    if (grad && !terms.empty()) {
        Var root = tape.scale(tape.weighted_sum(terms, term_weights), grad_scale);
        tape.backward(root);
    }
    return out;
}

PolicyParams backward(const PolicyParams& params, const SceneGraph& scene, const Episode& episode,
                      const TrainingConfig& config, const EpisodeTrace& trace) {
    if (trace.rl_actions.empty()) throw Error("backward() needs a recorded episode trace");
    PolicyParams grad = params.zeros_like();
    EpisodeTrace replay = trace;
    episode_loss(params, scene, episode, config, replay, nullptr, &grad);
    grad.check_finite("gradient");
    return grad;
}

std::vector<TerminalResult> greedy_results(const PolicyParams& params, const Dataset& data,
                                           const std::vector<Episode>& episodes, const EnvConfig& env_config) {
    std::vector<TerminalResult> out;
    out.reserve(episodes.size());
    for (const auto& ep : episodes) {
        ad::Tape tape(false);
        PolicyGraph graph(params, tape);
        const PolicyState start = graph.encode_instruction(ep.instruction);
        NavEnv env = make_env(data, ep, env_config);
        out.push_back(run_rollout(graph, start, env, ActionChoice::greedy).result);
    }
    return out;
}

double success_rate(const std::vector<TerminalResult>& results) {
    if (results.empty()) return 0.0;
    std::size_t wins = 0;
    for (const auto& r : results) wins += r.success ? 1 : 0;
    return 100.0 * static_cast<double>(wins) / static_cast<double>(results.size());
}

// ---------------------------------------------------------------------------
// Optimizer

AdamOptimizer::AdamOptimizer(const PolicyParams& like, AdamConfig config)
    : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {}

void AdamOptimizer::step(PolicyParams& params, const PolicyParams& grad) {
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    auto p = params.blocks();
    auto g = grad.blocks();
    auto m = m_.blocks();
    auto v = v_.blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
        auto& pm = *p[b].value;
        const auto& gm = *g[b].value;
        auto& mm = *m[b].value;
        auto& vm = *v[b].value;
        mm = config_.beta1 * mm + (1.0 - config_.beta1) * gm;
        vm = config_.beta2 * vm + (1.0 - config_.beta2) * gm.cwiseProduct(gm);
        pm.array() -= config_.learning_rate * (mm.array() / c1) / ((vm.array() / c2).sqrt() + config_.epsilon);
    }
}

// ---------------------------------------------------------------------------
// Training loop

std::string snapshot_id(Variant variant, int periods, int period_index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s.m%02d.p%02d", to_string(variant).c_str(), periods, period_index);
    return buf;
}

namespace {

void check_compatible(const TrainingConfig& config, const Dataset& data) {
    if (config.dims.vocab_size != data.vocab_size)
        throw Error("policy vocab_size " + std::to_string(config.dims.vocab_size) + " does not match the dataset's " +
                    std::to_string(data.vocab_size));
    for (const auto& scene : data.scenes) {
        if (scene.feature_dim() != config.dims.d_view)
            throw Error("policy d_view " + std::to_string(config.dims.d_view) + " does not match scene feature dimension " +
                        std::to_string(scene.feature_dim()));
    }
    for (const auto& [split, eps] : data.episodes) {
        for (const auto& ep : eps) {
            if (static_cast<int>(ep.instruction.size()) > config.dims.max_instruction_length)
                throw Error("episode " + ep.episode_id + " exceeds max_instruction_length");
        }
    }
    if (data.split(Split::train).empty()) throw Error("dataset has no train episodes");
    if (data.split(Split::val_unseen).empty()) throw Error("dataset has no val_unseen episodes");
}

}  // namespace

TrainingResult train(const TrainingConfig& config, const Dataset& data, const ProgressFn& progress) {
    config.validate();
    check_compatible(config, data);

    std::mt19937_64 rng(derive_seed(config.seed, "train/" + to_string(config.variant)));
    PolicyParams params =
        PolicyParams::initialize(config.dims, config.variant, derive_seed(config.seed, "init/" + to_string(config.variant)));
    AdamOptimizer optimizer(params, config.adam);
    PolicyParams grad = params.zeros_like();

    const auto& train_eps = data.split(Split::train);
    std::vector<Episode> val_eps = data.split(Split::val_unseen);
    if (config.validation_episodes > 0 && static_cast<std::size_t>(config.validation_episodes) < val_eps.size())
        val_eps.resize(static_cast<std::size_t>(config.validation_episodes));
    std::uniform_int_distribution<std::size_t> pick(0, train_eps.size() - 1);

    std::vector<int> period_counts{config.periods};
    for (int m : config.extra_periods) {
        if (m != config.periods) period_counts.push_back(m);
    }
    std::map<int, std::vector<std::optional<Snapshot>>> best;
    for (int m : period_counts) best[m].resize(static_cast<std::size_t>(m));

    const std::uint64_t fingerprint = config.fingerprint();
    TrainingResult result;
    result.loss_curve.reserve(static_cast<std::size_t>(config.total_iterations));
    const double scale = 1.0 / config.batch_size;

    for (int it = 1; it <= config.total_iterations; ++it) {
        for (auto& b : grad.blocks()) b.value->setZero();
        LossCurveRow row{it, 0.0, 0.0, 0.0};
        double total = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const Episode& ep = train_eps[pick(rng)];
            EpisodeTrace trace;
            const LossBreakdown br = episode_loss(params, data.scene(ep.scene_id), ep, config, trace, &rng, &grad, scale);
            row.il += br.il * scale;
            row.rl += br.rl * scale;
            row.attn += br.attention * scale;
            total += br.total * scale;
        }
        if (!std::isfinite(total))
            throw Error("non-finite loss at iteration " + std::to_string(it) + " (il " + std::to_string(row.il) + ", rl " +
                        std::to_string(row.rl) + ", attn " + std::to_string(row.attn) + ")");
        grad.check_finite("gradient at iteration " + std::to_string(it));
        optimizer.step(params, grad);
        result.loss_curve.push_back(row);
        if (progress) progress(it, row);

        if (it % config.validation_cadence == 0) {
            PolicyParams frozen = params;
            frozen.round_to_float();
            const double sr = success_rate(greedy_results(frozen, data, val_eps, config.env));
            result.sr_curve.push_back({it, sr});
            for (int m : period_counts) {
                const int period = (it - 1) / (config.total_iterations / m);
                auto& slot = best[m][static_cast<std::size_t>(period)];
                if (!slot || sr > slot->validation_sr) {
                    Snapshot s;
                    s.snapshot_id = snapshot_id(config.variant, m, period);
                    s.params = frozen;
                    s.period_index = period;
                    s.periods = m;
                    s.iteration = it;
                    s.validation_sr = sr;
                    s.config_fingerprint = fingerprint;
                    slot = std::move(s);
                }
            }
        }
    }

    for (int m : period_counts) {
        std::vector<Snapshot> list;
        for (auto& slot : best[m]) {
            if (!slot) throw Error("period without a validation point");
            list.push_back(std::move(*slot));
        }
        if (m == config.periods) result.snapshots = std::move(list);
        else result.extra_snapshots[m] = std::move(list);
    }
    result.final_params = std::move(params);
    return result;
}

void write_loss_curve(const std::vector<LossCurveRow>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "iteration,il,rl,attn\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g\n", r.iteration, r.il, r.rl, r.attn);
        out << buf;
    }
}

void write_sr_curve(const std::vector<SrCurveRow>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "iteration,sr\n";
    char buf[80];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g\n", r.iteration, r.sr);
        out << buf;
    }
}

}  // namespace snapnav
