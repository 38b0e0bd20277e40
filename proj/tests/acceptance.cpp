// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Criteria 1-4, 7, 9 and 10 reuse the snapshots and records of a
// fresh desk-scale pipeline run (criterion 8).
//
//   acceptance --work DIR [--reuse]
//
// Without --reuse the work directory's pipeline output is deleted first so
// that criterion 8 times a run from scratch.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "snapnav/common.hpp"
#include "snapnav/dataset_io.hpp"
#include "snapnav/ensemble.hpp"
#include "snapnav/losses.hpp"
#include "snapnav/metrics.hpp"
#include "snapnav/pipeline.hpp"
#include "snapnav/training.hpp"
#include "support.hpp"

using namespace snapnav;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> failures;
    std::vector<std::string> notes;
    double seconds = 0.0;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (failures.size() < 8) failures.push_back(what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

// Shared state built from the desk pipeline output.
struct Desk {
    ExperimentConfig config;
    ArtifactPaths paths;
    double pipeline_seconds = -1.0;  // negative when reused
    int pipeline_status = 1;
    Dataset data;
    SnapshotRegistry original, past_action_aware, all;
    json report;
};

std::vector<Episode> head(const std::vector<Episode>& v, std::size_t n) {
    return {v.begin(), v.begin() + static_cast<long>(std::min(n, v.size()))};
}

// Best trace entry: highest SR, then smaller subset, then lexicographic.
const TraceEntry& trace_maximum(const SearchTrace& t) {
    const TraceEntry* best = &t.entries.front();
    for (const auto& e : t.entries) {
        if (e.sr > best->sr || (e.sr == best->sr && (e.subset.size() < best->subset.size() ||
                                                     (e.subset.size() == best->subset.size() && e.subset < best->subset))))
            best = &e;
    }
    return *best;
}

// -- criteria ------------------------------------------------------------------

Outcome singleton_faithfulness(const Desk& d) {
    Outcome o;
    const auto episodes = head(d.data.split(d.config.selection_split), 100);
    const EnvConfig env = d.config.original.env;
    for (const auto& id : d.all.ids()) {
        const auto direct = greedy_results(d.all.get(id).params, d.data, episodes, env);
        const auto records = evaluate_records(EnsembleSpec{{id}, 1, 0}, d.all, d.data, episodes, env);
        o.require(records.size() == direct.size(), id + ": record count");
        for (std::size_t i = 0; i < std::min(records.size(), direct.size()); ++i) {
            const auto& r = records[i];
            o.require(r.trajectory == direct[i].trajectory && r.action_count == direct[i].action_count &&
                          r.success == direct[i].success && r.final_distance == direct[i].final_distance &&
                          r.path_length == direct[i].path_length,
                      id + " " + r.episode_id + ": differs from the direct rollout");
            for (const auto& s : r.steps) o.require(s.fused == s.member_scores.at(0), id + ": fused != member");
        }
    }
    o.note(std::to_string(d.all.size()) + " snapshots x " + std::to_string(episodes.size()) + " episodes");
    return o;
}

Outcome duplicate_invariance(const Desk& d) {
    Outcome o;
    const auto episodes = head(d.data.split(d.config.selection_split), 100);
    const EnvConfig env = d.config.original.env;
    for (const auto& id : d.all.ids()) {
        PolicyAgent a(id, d.all.get(id).params), b(id, d.all.get(id).params);
        for (const auto& ep : episodes) {
            const auto& scene = d.data.scene(ep.scene_id);
            const RunRecord one = run_episode({&a}, scene, ep, env);
            const RunRecord two = run_episode({&a, &b}, scene, ep, env);
            o.require(one.trajectory == two.trajectory && one.action_count == two.action_count,
                      id + " " + ep.episode_id + ": trajectory changed");
            if (one.steps.size() != two.steps.size()) continue;
            for (std::size_t t = 0; t < one.steps.size(); ++t) {
                for (std::size_t j = 0; j < one.steps[t].fused.size(); ++j)
                    o.require(two.steps[t].fused[j] == 2.0 * one.steps[t].fused[j], id + ": score not doubled");
            }
        }
    }
    o.note(std::to_string(d.all.size()) + " snapshots x " + std::to_string(episodes.size()) + " episodes");
    return o;
}

Outcome beam_dominance(const Desk& d) {
    Outcome o;
    const auto& episodes = d.data.split(d.config.selection_split);
    const EnvConfig env = d.config.original.env;
    const SearchConfig search{3, 4, true};
    for (const SnapshotRegistry* reg : {&d.original, &d.past_action_aware}) {
        const auto ids = reg->ids();
        o.require(ids.size() == 10, "pool has " + std::to_string(ids.size()) + " snapshots, want 10");
        auto [spec, trace] = beam_search_select(*reg, ids, search, d.data, episodes, env);
        double best_single = 0.0;
        for (const auto& id : ids) best_single = std::max(best_single, evaluate(EnsembleSpec{{id}, 1, 0}, *reg, d.data, episodes, env));
        const std::string v = to_string(reg->get(ids.front()).variant());
        o.require(spec.validation_sr >= best_single, v + ": ensemble SR below best single");
        o.require(trace.count() <= 82 && search_budget(10, 3, 4) == 82, v + ": trace exceeds 82 evaluations");
        o.require(evaluate(spec, *reg, d.data, episodes, env) == spec.validation_sr, v + ": SR not reproducible");
        o.note(v + " SR " + fmt("%.2f", spec.validation_sr) + " vs best single " + fmt("%.2f", best_single) + ", " +
               std::to_string(trace.count()) + "/82 evaluations");
    }
    return o;
}

Outcome exhaustive_oracle(const Desk& d) {
    Outcome o;
    const auto episodes = head(d.data.split(d.config.selection_split), 100);
    const EnvConfig env = d.config.original.env;
    auto ids = d.original.ids();
    ids.resize(6);
    SnapshotRegistry six;
    for (const auto& id : ids) six.add(d.original.get(id));

    // Every subset of size 1..3 of six candidates, evaluated independently.
    std::map<std::vector<std::size_t>, double> oracle;
    for (std::size_t a = 0; a < 6; ++a) {
        oracle[{a}] = 0;
        for (std::size_t b = a + 1; b < 6; ++b) {
            oracle[{a, b}] = 0;
            for (std::size_t c = b + 1; c < 6; ++c) oracle[{a, b, c}] = 0;
        }
    }
    o.require(oracle.size() == 41, "enumerated " + std::to_string(oracle.size()) + " subsets");
    for (auto& [subset, sr] : oracle) {
        std::vector<std::unique_ptr<PolicyAgent>> agents;
        std::vector<Agent*> members;
        for (std::size_t i : subset) {
            agents.push_back(std::make_unique<PolicyAgent>(ids[i], six.get(ids[i]).params));
            members.push_back(agents.back().get());
        }
        sr = compute_metrics(evaluate_records(members, d.data, episodes, env, RecordOptions{false, false})).sr;
    }

    auto [spec, trace] = beam_search_select(six, ids, SearchConfig{3, 3, true}, d.data, episodes, env);
    o.require(trace.candidates == ids, "trace candidates differ");
    for (const auto& e : trace.entries) {
        const auto it = oracle.find(e.subset);
        o.require(it != oracle.end() && it->second == e.sr, "subset SR differs from the enumerator");
    }
    const TraceEntry& best = trace_maximum(trace);
    std::vector<std::string> best_ids;
    for (std::size_t i : best.subset) best_ids.push_back(ids[i]);
    o.require(spec.members == best_ids && spec.validation_sr == best.sr, "returned subset is not the trace maximum");
    double exhaustive_best = 0.0;
    for (const auto& [s, sr] : oracle) exhaustive_best = std::max(exhaustive_best, sr);
    o.note(std::to_string(trace.count()) + " beam evaluations; beam best " + fmt("%.2f", spec.validation_sr) +
           ", exhaustive best " + fmt("%.2f", exhaustive_best));
    return o;
}

Outcome gradient_fidelity(const Desk& d) {
    Outcome o;
    double worst = 0.0;
    int coords = 0;
    const auto& train_eps = d.data.split(Split::train);
    std::uint64_t seed = 1;
    for (Variant v : {Variant::original, Variant::past_action_aware}) {
        TrainingConfig cfg = d.config.training(v);
        const PolicyParams init = PolicyParams::initialize(cfg.dims, v, 17);
        const std::vector<std::string> terms =
            v == Variant::original ? std::vector<std::string>{"il", "rl"} : std::vector<std::string>{"il", "rl", "attention"};
        for (const auto& term : terms) {
            cfg.weights = testing::only_term(term);
            const Episode& ep = train_eps[seed * 37 % train_eps.size()];
            const auto checks = testing::gradient_check(init, d.data.scene(ep.scene_id), ep, cfg, 20, seed++);
            for (const auto& c : checks) {
                coords += c.coordinates;
                worst = std::max(worst, c.worst_relative_error);
                o.require(c.worst_relative_error < 1e-4, to_string(v) + "/" + term + "/" + c.block + ": relative error " +
                                                             fmt("%.3g", c.worst_relative_error));
            }
        }
    }
    o.note(std::to_string(coords) + " coordinates, worst relative error " + fmt("%.3g", worst));
    return o;
}

Outcome loss_unit_values() {
    Outcome o;
    const std::size_t teacher[] = {0};
    const double il = imitation_loss({{0.0, 0.0, 0.0, 0.0}}, teacher);
    o.require(std::abs(il - std::log(4.0)) <= 1e-12, "imitation loss " + fmt("%.17g", il));
    AttentionTarget g;
    g.rows.resize(1, 2);
    g.rows << 1, -1;
    const double attn = attention_loss(Mat::Zero(1, 2), g);
    o.require(std::abs(attn - 1.0) <= 1e-12, "attention loss " + fmt("%.17g", attn));
    LossWeights w;
    o.require(w.lambda == 0.5 && w.alpha == 0.5, "default weights are not 0.5");
    const double total = total_loss(2.0, 1.0, 4.0, w, Variant::past_action_aware);
    o.require(total == 4.0, "total loss " + fmt("%.17g", total));
    o.note("ln4 " + fmt("%.15f", il) + ", mse " + fmt("%.15f", attn) + ", total " + fmt("%.1f", total));
    return o;
}

Outcome metric_identities(const Desk& d) {
    Outcome o;
    TeacherAgent teacher(d.config.original.env);
    for (Split s : kAllSplits) {
        const auto records = evaluate_records({&teacher}, d.data, d.data.split(s), d.config.original.env);
        const auto m = compute_metrics(records);
        o.require(m.sr == 100.0 && m.ne == 0.0 && m.spl == 100.0,
                  "teacher on " + to_string(s) + ": SR " + fmt("%.2f", m.sr) + " NE " + fmt("%.3g", m.ne) + " SPL " +
                      fmt("%.2f", m.spl));
    }

    int files = 0, runs = 0;
    std::map<std::string, std::vector<RunRecord>> sel_singles;
    for (const auto& entry : fs::recursive_directory_iterator(d.paths.eval())) {
        if (entry.path().extension() != ".jsonl") continue;
        const auto records = read_records_jsonl(entry.path());
        const auto m = compute_metrics(records);
        ++files;
        runs += static_cast<int>(records.size());
        o.require(m.spl <= m.sr + 1e-9, entry.path().filename().string() + ": SPL > SR");
        for (const auto& r : records) {
            o.require(r.action_count <= 15 && r.trajectory.size() <= 16, r.episode_id + ": more than 15 actions");
        }
        if (entry.path().parent_path().filename() == "singles" &&
            entry.path().string().find("." + to_string(d.config.selection_split) + ".") != std::string::npos)
            sel_singles[entry.path().filename().string()] = records;
    }

    // Partitions recounted by hand over every trio / pair of single runs.
    std::vector<const std::vector<RunRecord>*> runs_list;
    for (const auto& [name, recs] : sel_singles) runs_list.push_back(&recs);
    const std::size_t n = d.data.split(d.config.selection_split).size();
    for (std::size_t i = 0; i + 2 < runs_list.size(); i += 3) {
        const auto &a = *runs_list[i], &b = *runs_list[i + 1], &c = *runs_list[i + 2];
        const VennCounts v = venn3(a, b, c);
        std::array<int, 8> want{};
        for (std::size_t e = 0; e < a.size(); ++e)
            ++want[(!a[e].success ? 1 : 0) | (!b[e].success ? 2 : 0) | (!c[e].success ? 4 : 0)];
        o.require(v.regions == want && v.total() == static_cast<int>(n), "Venn partition");
        const DisagreementCounts dc = disagreement(a, b);
        o.require(dc.total() == static_cast<int>(n), "disagreement partition");
    }
    const json& dis = d.report.at("disagreement");
    o.require(dis["both_succeed"].get<int>() + dis["only_a"].get<int>() + dis["only_b"].get<int>() +
                      dis["both_fail"].get<int>() ==
                  static_cast<int>(n),
              "report disagreement partition");
    for (const char* key : {"regions", "regions_with_ensemble"}) {
        int sum = 0;
        for (const auto& x : d.report.at("venn").at(key)) sum += x.get<int>();
        o.require(sum == static_cast<int>(n), std::string("report Venn ") + key);
    }
    o.note("teacher on 4 splits; " + std::to_string(files) + " record files, " + std::to_string(runs) + " runs");
    return o;
}

Outcome desk_pipeline(const Desk& d) {
    Outcome o;
    o.require(d.pipeline_status == 0, "pipeline exited with status " + std::to_string(d.pipeline_status));
    if (d.pipeline_status != 0) return o;
    if (d.pipeline_seconds >= 0) {
        o.require(d.pipeline_seconds <= 3600.0, "pipeline took " + fmt("%.0f", d.pipeline_seconds) + " s");
        o.note("pipeline " + fmt("%.0f", d.pipeline_seconds) + " s");
    } else {
        o.note("pipeline reused, runtime not measured");
    }
    const auto& g = d.config.generator;
    o.note(std::to_string(g.train_scenes) + " train scenes, " +
           std::to_string(g.train_episodes + g.val_seen_episodes + g.val_unseen_episodes + g.test_episodes) +
           " episodes, N=" + std::to_string(d.config.original.total_iterations) +
           ", M=" + std::to_string(d.config.original.periods) + ", k=" + std::to_string(d.config.search.max_size));
    const json& r = d.report;
    const int m = d.config.original.periods;
    o.require(d.config.past_action_aware.periods == m, "variants use different M");
    o.require(r["ensembles"].size() == 3, "ensemble reports: " + std::to_string(r["ensembles"].size()));
    for (const auto& [name, e] : r["ensembles"].items()) {
        if (name.find("mixed") != std::string::npos)
            o.require(e["pool_size"].get<int>() == 2 * m, "mixed pool " + std::to_string(e["pool_size"].get<int>()));
        // Dominance recomputed from the stored single-snapshot records.
        double pool_best = 0.0;
        for (const auto& entry : fs::directory_iterator(d.paths.eval() / "singles")) {
            const std::string f = entry.path().filename().string();
            if (!f.ends_with("." + to_string(d.config.selection_split) + ".jsonl")) continue;
            const std::string id = f.substr(0, f.size() - ("." + to_string(d.config.selection_split) + ".jsonl").size());
            const bool in_pool = name == "mixed-ensemble" ||
                                 (d.all.contains(id) && (d.all.get(id).variant() == Variant::original) ==
                                                            (name == "original-ensemble"));
            if (in_pool) pool_best = std::max(pool_best, compute_metrics(read_records_jsonl(entry.path())).sr);
        }
        o.require(pool_best > 0.0 || e["validation_sr"].get<double>() == 0.0, name + ": no pool records found");
        o.require(e["validation_sr"].get<double>() >= pool_best, name + ": val SR below best pool snapshot");
        o.note(name + " val SR " + fmt("%.2f", e["validation_sr"].get<double>()) + " (pool best " + fmt("%.2f", pool_best) + ")");
    }
    o.require(r["checks"]["mixed_pool_is_2M"].get<bool>(), "report check mixed_pool_is_2M");
    o.require(r["checks"]["ensembles_dominate_pool_best_single"].get<bool>(), "report check dominance");

    // Qualitative expectations, reported only.
    const json& dis = r["disagreement"];
    o.note("[reported] top-two disagreement " + fmt("%.2f", dis["different_pct"].get<double>()) + "% vs SR gap " +
           fmt("%.2f", dis["sr_gap"].get<double>()) +
           (dis["different_pct"].get<double>() > dis["sr_gap"].get<double>() ? " (exceeds)" : " (does not exceed)"));
    const std::string sel = to_string(d.config.selection_split), test = to_string(d.config.eval_split);
    auto row = [&](const std::string& name) -> const json& {
        for (const auto& x : r["rows"])
            if (x["name"] == name) return x;
        throw Error("report has no row " + name);
    };
    for (const std::string split : {sel, test}) {
        const int ln_ens = row("mixed-ensemble")["long_nav_" + split]["count"];
        const int ln_best = row("best-single")["long_nav_" + split]["count"];
        o.note("[reported] " + split + " LN mixed ensemble " + std::to_string(ln_ens) + " vs best single " +
               std::to_string(ln_best) + (ln_ens <= ln_best ? " (<=)" : " (>)"));
    }
    const double ens_test = row("mixed-ensemble")[test]["sr"], best_test = row("best-single")[test]["sr"];
    o.note("[reported] " + test + " SR mixed ensemble " + fmt("%.2f", ens_test) + " vs best single " + fmt("%.2f", best_test) +
           (ens_test >= best_test ? " (>=)" : " (<)"));
    return o;
}

Outcome attention_direction(const Desk& d) {
    Outcome o;
    o.require(d.report.contains("attention"), "report has no attention summary");
    if (!o.pass) return o;
    const json& a = d.report["attention"];
    const double cur = a["mean_current"], other = a["mean_other"], next = a["mean_next"];
    o.require(a["count_current"].get<int>() > 0 && a["count_other"].get<int>() > 0, "empty attention classes");
    o.require(cur - other > 0.0, "mean tanh attention current " + fmt("%.4f", cur) + " <= other " + fmt("%.4f", other));
    o.note("current " + fmt("%.4f", cur) + ", next " + fmt("%.4f", next) + ", other " + fmt("%.4f", other) +
           ", margin " + fmt("%.4f", cur - other));
    return o;
}

Outcome ablation(const Desk& d) {
    Outcome o;
    ExperimentConfig cfg = d.config;
    cfg.ablation.m_values = {5, 10, 15};
    cfg.ablation.k_values = {3, 4, 5};
    const auto t0 = Clock::now();
    PipelineOptions opts;
    opts.log = &std::cerr;
    const int status = cmd_ablate(cfg, opts);
    const double secs = seconds_since(t0);
    o.require(status == 0, "ablate exited with status " + std::to_string(status));
    if (status != 0) return o;
    const json j = read_json_file(d.paths.ablation() / "ablation.json");
    std::set<std::pair<int, int>> seen;
    for (const auto& c : j["cells"]) {
        const int m = c["M"], k = c["k"];
        const std::size_t budget = search_budget(static_cast<std::size_t>(m), cfg.search.beam_width, k);
        o.require(c["budget"].get<std::size_t>() == budget, "cell budget mismatch");
        o.require(c["evaluations"].get<std::size_t>() <= budget && c["within_budget"].get<bool>(),
                  "M=" + std::to_string(m) + " k=" + std::to_string(k) + " over budget");
        seen.insert({m, k});
    }
    for (int m : cfg.ablation.m_values)
        for (int k : cfg.ablation.k_values) o.require(seen.count({m, k}) == 1, "missing cell M=" + std::to_string(m) + " k=" + std::to_string(k));
    o.require(j["all_within_budget"].get<bool>(), "all_within_budget is false");
    o.require(fs::exists(d.paths.ablation() / "ablation.txt"), "no ablation table");
    o.require(secs <= 3 * 3600.0, "ablation took " + fmt("%.0f", secs) + " s");
    o.note(std::to_string(seen.size()) + " grid cells, " + fmt("%.0f", secs) + " s");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = "acceptance_work";
    bool reuse = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc) work = argv[++i];
        else if (a == "--reuse") reuse = true;
        else {
            std::cerr << "usage: acceptance --work DIR [--reuse]\n";
            return 2;
        }
    }

    Desk d;
    d.config = load_experiment_config(fs::path(SNAPNAV_CONFIG_DIR) / "desk.json");
    d.config.out_dir = work / "desk";
    d.paths.root = d.config.out_dir;
    {
        if (!reuse) fs::remove_all(d.config.out_dir);
        PipelineOptions opts;
        opts.log = &std::cerr;
        const auto t0 = Clock::now();
        d.pipeline_status = cmd_pipeline(d.config, opts);
        d.pipeline_seconds = reuse ? -1.0 : seconds_since(t0);
    }

    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    const bool ready = d.pipeline_status == 0;
    if (ready) {
        d.data = load_dataset(d.paths.data());
        d.original = load_registry({d.paths.snapshot_dir(Variant::original, d.config.original.periods, d.config.original.periods)});
        d.past_action_aware = load_registry(
            {d.paths.snapshot_dir(Variant::past_action_aware, d.config.past_action_aware.periods, d.config.past_action_aware.periods)});
        for (const SnapshotRegistry* r : {&d.original, &d.past_action_aware})
            for (const auto& id : r->ids()) d.all.add(r->get(id));
        d.report = read_json_file(d.paths.root / "report.json");
    }
    auto needs_desk = [&](std::function<Outcome()> f) {
        return [&, f] {
            if (!ready) {
                Outcome o;
                o.require(false, "desk pipeline failed");
                return o;
            }
            return f();
        };
    };
    const std::vector<std::pair<std::string, double>> names{
        {"singleton faithfulness", 60},   {"duplicate invariance", 60}, {"beam-search dominance and budget", 600},
        {"exhaustive-oracle consistency", 300}, {"gradient fidelity", 120},  {"loss unit values", 0},
        {"metric identities", 120},       {"desk-scale pipeline", 0},   {"attention directionality", 0},
        {"ablation harness", 0}};
    criteria = {
        {names[0].first, needs_desk([&] { return singleton_faithfulness(d); })},
        {names[1].first, needs_desk([&] { return duplicate_invariance(d); })},
        {names[2].first, needs_desk([&] { return beam_dominance(d); })},
        {names[3].first, needs_desk([&] { return exhaustive_oracle(d); })},
        {names[4].first, needs_desk([&] { return gradient_fidelity(d); })},
        {names[5].first, [] { return loss_unit_values(); }},
        {names[6].first, needs_desk([&] { return metric_identities(d); })},
        {names[7].first, [&] { return desk_pipeline(d); }},
        {names[8].first, needs_desk([&] { return attention_direction(d); })},
        {names[9].first, needs_desk([&] { return ablation(d); })},
    };

    std::vector<Outcome> outcomes;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::cerr << "criterion " << i + 1 << ": " << criteria[i].first << "\n";
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        o.seconds = seconds_since(t0);
        const double limit = names[i].second;
        if (limit > 0) o.require(o.seconds < limit, "runtime " + fmt("%.1f", o.seconds) + " s over " + fmt("%.0f", limit) + " s");
        outcomes.push_back(o);
    }

    int failed = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const Outcome& o = outcomes[i];
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << ": " << criteria[i].first << " ("
                  << fmt("%.1f", o.seconds) << " s)";
        for (const auto& n : o.notes) std::cout << "; " << n;
        for (const auto& f : o.failures) std::cout << "; FAILED: " << f;
        std::cout << "\n";
    }
    std::cout << (outcomes.size() - failed) << "/" << outcomes.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
