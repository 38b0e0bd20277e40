#include "snapnav/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "snapnav/common.hpp"
#include "snapnav/dataset_io.hpp"

namespace snapnav {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

ExperimentConfig::ExperimentConfig() { past_action_aware.variant = Variant::past_action_aware; }

std::uint64_t data_seed(std::uint64_t global_seed) { return derive_seed(global_seed, "gen-data"); }
std::uint64_t training_seed(std::uint64_t global_seed) { return derive_seed(global_seed, "train"); }

namespace {

json search_to_json(const SearchConfig& s) {
    return {{"l", s.beam_width}, {"k", s.max_size}, {"dedupe", s.dedupe}};
}

SearchConfig search_from_json(const json& j, SearchConfig s) {
    for (const auto& [key, v] : j.items()) {
        if (key == "l") s.beam_width = v.get<int>();
        else if (key == "k") s.max_size = v.get<int>();
        else if (key == "dedupe") s.dedupe = v.get<bool>();
        else throw Error("search config: unknown key '" + key + "'");
    }
    return s;
}

// Training config as the pipeline actually runs it: seed derived from the
// global seed and, for the original variant, the ablation period counts
// recorded in the same run.
TrainingConfig effective_training(const ExperimentConfig& c, Variant v) {
    TrainingConfig t = c.training(v);
    t.variant = v;
    t.seed = training_seed(c.seed);
    if (v == Variant::original) {
        std::set<int> extra(t.extra_periods.begin(), t.extra_periods.end());
        for (int m : c.ablation.m_values) {
            if (m != t.periods) extra.insert(m);
        }
        t.extra_periods.assign(extra.begin(), extra.end());
    }
    return t;
}

std::uint64_t hash_text(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    generator.validate();
    for (Variant v : {Variant::original, Variant::past_action_aware}) {
        const TrainingConfig t = effective_training(*this, v);
        t.validate();
        if (t.dims.vocab_size != generator.vocab_size)
            throw Error("experiment config: " + to_string(v) + " vocab_size does not match the generator's");
        if (t.dims.d_view != generator.feature_dim)
            throw Error("experiment config: " + to_string(v) + " d_view does not match the generator's feature_dim");
    }
    if (search.beam_width < 1) throw Error("experiment config: search l must be at least 1");
    if (search.max_size < 1) throw Error("experiment config: search k must be at least 1");
    const int m = std::min(original.periods, past_action_aware.periods);
    if (search.max_size > m)
        throw Error("experiment config: search k = " + std::to_string(search.max_size) + " exceeds the " +
                    std::to_string(m) + " snapshots of a single variant");
    for (int am : ablation.m_values) {
        for (int k : ablation.k_values) {
            if (k < 1 || k > am)
                throw Error("experiment config: ablation cell M=" + std::to_string(am) + ", k=" + std::to_string(k) +
                            " is infeasible");
        }
    }
    if (analysis.long_nav_threshold < 1) throw Error("experiment config: long_nav_threshold must be positive");
}

json experiment_config_to_json(const ExperimentConfig& c) {
    return {{"out", c.out_dir.string()},
            {"data", c.data_dir.string()},
            {"seed", c.seed},
            {"generator", generator_config_to_json(c.generator)},
            {"original", training_config_to_json(c.original)},
            {"past_action_aware", training_config_to_json(c.past_action_aware)},
            {"search", search_to_json(c.search)},
            {"ablation", {{"m_values", c.ablation.m_values}, {"k_values", c.ablation.k_values}}},
            {"analysis",
             {{"export_attention", c.analysis.export_attention},
              {"export_scores", c.analysis.export_scores},
              {"long_nav_threshold", c.analysis.long_nav_threshold}}},
            {"selection_split", to_string(c.selection_split)},
            {"eval_split", to_string(c.eval_split)}};
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c) {
    if (!j.is_object()) throw Error("experiment config must be a JSON object");
    // Shared training keys first so per-variant blocks can override them.
    if (j.contains("training")) {
        c.original = training_config_from_json(j["training"], c.original);
        c.past_action_aware = training_config_from_json(j["training"], c.past_action_aware);
    }
    for (const auto& [key, v] : j.items()) {
        if (key == "training") continue;
        if (key == "out") c.out_dir = v.get<std::string>();
        else if (key == "data") c.data_dir = v.get<std::string>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "generator") c.generator = generator_config_from_json(v);
        else if (key == "original") c.original = training_config_from_json(v, c.original);
        else if (key == "past_action_aware") c.past_action_aware = training_config_from_json(v, c.past_action_aware);
        else if (key == "search") c.search = search_from_json(v, c.search);
        else if (key == "ablation") {
            for (const auto& [ak, av] : v.items()) {
                if (ak == "m_values") c.ablation.m_values = av.get<std::vector<int>>();
                else if (ak == "k_values") c.ablation.k_values = av.get<std::vector<int>>();
                else throw Error("ablation config: unknown key '" + ak + "'");
            }
        } else if (key == "analysis") {
            for (const auto& [ak, av] : v.items()) {
                if (ak == "export_attention") c.analysis.export_attention = av.get<bool>();
                else if (ak == "export_scores") c.analysis.export_scores = av.get<bool>();
                else if (ak == "long_nav_threshold") c.analysis.long_nav_threshold = av.get<int>();
                else throw Error("analysis config: unknown key '" + ak + "'");
            }
        } else if (key == "selection_split") c.selection_split = split_from_string(v.get<std::string>());
        else if (key == "eval_split") c.eval_split = split_from_string(v.get<std::string>());
        else throw Error("experiment config: unknown key '" + key + "'");
    }
    c.original.variant = Variant::original;
    c.past_action_aware.variant = Variant::past_action_aware;
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    return experiment_config_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Artifacts

fs::path ArtifactPaths::snapshot_dir(Variant v, int periods, int default_periods) const {
    if (periods == default_periods) return train_dir(v) / "snapshots";
    return train_dir(v) / ("snapshots_M" + std::to_string(periods));
}

void save_training_outputs(const TrainingResult& result, const TrainingConfig& config, const fs::path& dir) {
    auto save_set = [](const std::vector<Snapshot>& set, const fs::path& sub) {
        fs::remove_all(sub);
        fs::create_directories(sub);
        for (const auto& s : set) save_snapshot(s, sub / (s.snapshot_id + ".snap"));
    };
    save_set(result.snapshots, dir / "snapshots");
    for (const auto& [m, set] : result.extra_snapshots) save_set(set, dir / ("snapshots_M" + std::to_string(m)));
    write_loss_curve(result.loss_curve, dir / "curves_loss.csv");
    write_sr_curve(result.sr_curve, dir / "curves_sr.csv");
    json summary = json::array();
    for (const auto& s : result.snapshots)
        summary.push_back({{"id", s.snapshot_id}, {"iteration", s.iteration}, {"validation_sr", s.validation_sr}});
    write_text_file(dir / "training.json",
                    dump_json({{"config", training_config_to_json(config)}, {"snapshots", summary}}));
}

json ensemble_file_to_json(const EnsembleFile& f) {
    std::vector<std::string> dirs;
    for (const auto& d : f.snapshot_dirs) dirs.push_back(d.generic_string());
    return {{"name", f.name},
            {"members", f.spec.members},
            {"found_at_size", f.spec.found_at_size},
            {"validation_sr", f.spec.validation_sr},
            {"split", f.split},
            {"search", search_to_json(f.search)},
            {"pool_size", f.trace.candidates.size()},
            {"evaluations", f.trace.count()},
            {"budget", f.budget},
            {"snapshot_dirs", dirs},
            {"trace", search_trace_to_json(f.trace)}};
}

EnsembleFile ensemble_file_from_json(const json& j) {
    EnsembleFile f;
    f.name = j.value("name", std::string{});
    f.spec = ensemble_spec_from_json(j);
    f.split = j.value("split", std::string{});
    if (j.contains("search")) f.search = search_from_json(j["search"], {});
    f.budget = j.value("budget", std::size_t{0});
    for (const auto& d : j.value("snapshot_dirs", std::vector<std::string>{})) f.snapshot_dirs.emplace_back(d);
    if (j.contains("trace")) f.trace = search_trace_from_json(j["trace"]);
    return f;
}

SnapshotRegistry load_registry(const std::vector<fs::path>& dirs) {
    SnapshotRegistry registry;
    for (const auto& dir : dirs) {
        for (auto& s : load_snapshot_dir(dir)) registry.add(std::move(s));
    }
    return registry;
}

// ---------------------------------------------------------------------------
// Stage runner

namespace {

class StageError : public Error {
   public:
    StageError(std::string stage, const std::string& cause) : Error(cause), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

   private:
    std::string stage_;
};

class Experiment {
   public:
    Experiment(const ExperimentConfig& config, const PipelineOptions& options)
        : config_(config), options_(options), paths_{config.out_dir} {
        if (!options.force && fs::exists(paths_.manifest())) {
            try {
                manifest_ = read_json_file(paths_.manifest());
            } catch (const Error&) {
                manifest_ = json::object();
            }
        }
        if (!manifest_.is_object()) manifest_ = json::object();
        if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
    }

    const ArtifactPaths& paths() const { return paths_; }
    const ExperimentConfig& config() const { return config_; }

    void log(const std::string& line) const {
        if (options_.log) *options_.log << line << std::endl;
    }

    // Runs body unless the manifest shows the stage done with the same fingerprint.
    template <typename F>
    void stage(const std::string& name, std::uint64_t fingerprint, F&& body) {
        const auto& entry = manifest_["stages"][name];
        if (entry.is_object() && entry.value("status", "") == "done" && entry.value("fingerprint", "") == hex(fingerprint)) {
            log("stage " + name + ": up to date");
            return;
        }
        log("stage " + name + ": running");
        set_status(name, fingerprint, "running", "");
        try {
            body();
        } catch (const std::exception& e) {
            set_status(name, fingerprint, "failed", e.what());
            throw StageError(name, e.what());
        }
        set_status(name, fingerprint, "done", "");
    }

    // -- data ---------------------------------------------------------------

    std::uint64_t data_fingerprint() const {
        return hash_text(json{{"generator", generator_config_to_json(config_.generator)},
                              {"seed", data_seed(config_.seed)},
                              {"data", config_.data_dir.string()}}
                             .dump());
    }

    fs::path data_dir() const { return config_.data_dir.empty() ? paths_.data() : config_.data_dir; }

    const Dataset& data() {
        if (data_) return *data_;
        stage("gen-data", data_fingerprint(), [&] {
            if (!config_.data_dir.empty()) {
                load_dataset(config_.data_dir);
                return;
            }
            save_dataset(generate_dataset(config_.generator, data_seed(config_.seed)), paths_.data());
        });
        data_ = load_dataset(data_dir());
        return *data_;
    }

    // -- training -----------------------------------------------------------

    std::uint64_t training_fingerprint(Variant v) const {
        return hash_text(hex(data_fingerprint()) + training_config_to_json(effective_training(config_, v)).dump());
    }

    void train_variant(Variant v) {
        const Dataset& d = data();
        const TrainingConfig t = effective_training(config_, v);
        stage("train-" + to_string(v), training_fingerprint(v), [&] {
            const int every = std::max(1, t.total_iterations / 20);
            const std::string name = to_string(v);
            auto progress = [&](int it, const LossCurveRow& row) {
                if (it % every != 0) return;
                char buf[160];
                std::snprintf(buf, sizeof(buf), "  train %s: %d/%d il %.3f rl %.3f attn %.3f", name.c_str(), it,
                              t.total_iterations, row.il, row.rl, row.attn);
                log(buf);
            };
            const TrainingResult r = train(t, d, progress);
            save_training_outputs(r, t, paths_.train_dir(v));
        });
    }

    fs::path snapshot_dir(Variant v, int periods) const {
        return paths_.snapshot_dir(v, periods, config_.training(v).periods);
    }

    // -- selection ------------------------------------------------------------

    struct Pool {
        std::string name;       // file stem
        std::string row;        // report row name
        std::vector<Variant> variants;
    };

    static std::vector<Pool> pools() {
        return {{"original", "original-ensemble", {Variant::original}},
                {"past_action_aware", "variant-ensemble", {Variant::past_action_aware}},
                {"mixed", "mixed-ensemble", {Variant::original, Variant::past_action_aware}}};
    }

    std::uint64_t selection_fingerprint() const {
        return hash_text(hex(training_fingerprint(Variant::original)) + hex(training_fingerprint(Variant::past_action_aware)) +
                         search_to_json(config_.search).dump() + to_string(config_.selection_split));
    }

    EnsembleFile select(const Pool& pool, const SearchConfig& search, const std::vector<fs::path>& dirs) {
        const Dataset& d = data();
        const SnapshotRegistry registry = load_registry(dirs);
        auto [spec, trace] = beam_search_select(registry, registry.ids(), search, d, d.split(config_.selection_split),
                                                config_.training(Variant::original).env);
        EnsembleFile f;
        f.name = pool.name;
        f.spec = spec;
        f.trace = trace;
        f.search = search;
        f.budget = search_budget(trace.candidates.size(), search.beam_width, search.max_size);
        f.split = to_string(config_.selection_split);
        for (const auto& dir : dirs) f.snapshot_dirs.push_back(dir.lexically_relative(paths_.ensembles()));
        return f;
    }

    void select_all() {
        train_variant(Variant::original);
        train_variant(Variant::past_action_aware);
        stage("select", selection_fingerprint(), [&] {
            for (const auto& pool : pools()) {
                std::vector<fs::path> dirs;
                for (Variant v : pool.variants) dirs.push_back(snapshot_dir(v, config_.training(v).periods));
                const EnsembleFile f = select(pool, config_.search, dirs);
                log("  " + pool.row + ": " + std::to_string(f.spec.members.size()) + " members, val SR " +
                    std::to_string(f.spec.validation_sr) + ", " + std::to_string(f.trace.count()) + " evaluations");
                write_text_file(paths_.ensembles() / (pool.name + ".json"), dump_json(ensemble_file_to_json(f)));
            }
        });
    }

    EnsembleFile load_ensemble(const std::string& name) const {
        return ensemble_file_from_json(read_json_file(paths_.ensembles() / (name + ".json")));
    }

    SnapshotRegistry all_snapshots() const {
        return load_registry({snapshot_dir(Variant::original, config_.original.periods),
                              snapshot_dir(Variant::past_action_aware, config_.past_action_aware.periods)});
    }

    // -- evaluation -----------------------------------------------------------

    std::uint64_t eval_fingerprint() const {
        return hash_text(hex(selection_fingerprint()) + to_string(config_.eval_split) +
                         json{{"attention", config_.analysis.export_attention}}.dump());
    }

    fs::path records_path(const std::string& row, Split split) const {
        return paths_.eval() / (row + "." + to_string(split) + ".jsonl");
    }
    fs::path single_records_path(const std::string& id, Split split) const {
        return paths_.eval() / "singles" / (id + "." + to_string(split) + ".jsonl");
    }

    // Highest selection-split SR; ties go to the smaller id.
    static std::string best_single(const std::vector<std::string>& ids, const std::map<std::string, double>& sr) {
        std::string best;
        for (const auto& id : ids) {
            if (best.empty() || sr.at(id) > sr.at(best)) best = id;
        }
        return best;
    }

    std::map<std::string, double> single_srs(const SnapshotRegistry& registry) const {
        std::map<std::string, double> out;
        for (const auto& id : registry.ids())
            out[id] = compute_metrics(read_records_jsonl(single_records_path(id, config_.selection_split))).sr;
        return out;
    }

    std::vector<std::pair<std::string, EnsembleSpec>> report_rows(const SnapshotRegistry& registry) const {
        const auto sr = single_srs(registry);
        std::vector<std::string> orig, paa, all = registry.ids();
        for (const auto& id : all) (registry.get(id).variant() == Variant::original ? orig : paa).push_back(id);
        auto single = [&](const std::string& id) {
            EnsembleSpec s;
            s.members = {id};
            s.found_at_size = 1;
            s.validation_sr = sr.at(id);
            return s;
        };
        std::vector<std::pair<std::string, EnsembleSpec>> rows{
            {"best-single", single(best_single(all, sr))},
            {"best-single-original", single(best_single(orig, sr))},
            {"best-single-past_action_aware", single(best_single(paa, sr))}};
        for (const auto& pool : pools()) rows.emplace_back(pool.row, load_ensemble(pool.name).spec);
        return rows;
    }

    void evaluate_all() {
        select_all();
        stage("eval", eval_fingerprint(), [&] {
            const Dataset& d = data();
            const SnapshotRegistry registry = all_snapshots();
            const EnvConfig env = config_.training(Variant::original).env;
            for (const auto& id : registry.ids()) {
                EnsembleSpec s;
                s.members = {id};
                write_records_jsonl(evaluate_records(s, registry, d, d.split(config_.selection_split), env),
                                    single_records_path(id, config_.selection_split));
            }
            for (const auto& [row, spec] : report_rows(registry)) {
                for (Split split : {config_.selection_split, config_.eval_split}) {
                    write_records_jsonl(evaluate_records(spec, registry, d, d.split(split), env),
                                        records_path(row, split));
                }
                log("  evaluated " + row);
            }
            if (config_.analysis.export_attention) {
                const auto rows = report_rows(registry);
                const EnsembleSpec& spec = rows[2].second;  // best past_action_aware snapshot
                write_records_jsonl(
                    evaluate_records(spec, registry, d, d.split(config_.selection_split), env, RecordOptions{false, true}),
                    paths_.eval() / ("attention." + to_string(config_.selection_split) + ".jsonl"));
            }
        });
    }

    // -- analysis and report --------------------------------------------------

    void analyze_and_report() {
        evaluate_all();
        stage("report", hash_text(hex(eval_fingerprint()) + experiment_config_to_json(config_)["analysis"].dump()),
              [&] { write_report(); });
    }

    void write_report() {
        const Dataset& d = data();
        const SnapshotRegistry registry = all_snapshots();
        const auto rows = report_rows(registry);
        const Split sel = config_.selection_split, test = config_.eval_split;
        const int threshold = config_.analysis.long_nav_threshold;
        const auto single_sr = single_srs(registry);

        json report;
        report["seed"] = config_.seed;
        report["selection_split"] = to_string(sel);
        report["eval_split"] = to_string(test);
        const int m_orig = config_.original.periods, m_paa = config_.past_action_aware.periods;

        json ensembles = json::object();
        bool pool_ok = true, dominance_ok = true;
        const double best_single_sr = rows[0].second.validation_sr;
        for (const auto& pool : pools()) {
            const EnsembleFile f = load_ensemble(pool.name);
            ensembles[pool.row] = {{"members", f.spec.members},
                                   {"found_at_size", f.spec.found_at_size},
                                   {"validation_sr", f.spec.validation_sr},
                                   {"pool_size", f.trace.candidates.size()},
                                   {"evaluations", f.trace.count()},
                                   {"budget", f.budget}};
            double pool_best = 0.0;
            for (const auto& id : f.trace.candidates) pool_best = std::max(pool_best, single_sr.at(id));
            dominance_ok = dominance_ok && f.spec.validation_sr >= pool_best;
            if (pool.name == "mixed") pool_ok = f.trace.candidates.size() == static_cast<std::size_t>(m_orig + m_paa);
        }
        report["ensembles"] = ensembles;

        json table = json::array();
        std::vector<std::pair<std::string, MetricReport>> text_test, text_sel;
        std::map<std::string, std::vector<RunRecord>> sel_records;
        for (const auto& [row, spec] : rows) {
            const auto rt = read_records_jsonl(records_path(row, test));
            const auto rs = read_records_jsonl(records_path(row, sel));
            const MetricReport mt = compute_metrics(rt), ms = compute_metrics(rs);
            const LongNavStats lt = long_nav_stats(rt, threshold), ls = long_nav_stats(rs, threshold);
            auto ln_json = [](const LongNavStats& s) {
                return json{{"count", s.count}, {"failures", s.failures}, {"failure_pct", s.failure_pct}};
            };
            json mt_json = metrics_to_json(mt), ms_json = metrics_to_json(ms);
            mt_json.erase("per_scene");
            ms_json.erase("per_scene");
            table.push_back({{"name", row},
                             {"members", spec.members},
                             {"validation_sr", spec.validation_sr},
                             {to_string(test), mt_json},
                             {to_string(sel), ms_json},
                             {"long_nav_" + to_string(test), ln_json(lt)},
                             {"long_nav_" + to_string(sel), ln_json(ls)}});
            text_test.emplace_back(row, mt);
            text_sel.emplace_back(row, ms);
            sel_records[row] = rs;
        }
        report["rows"] = table;

        // Disagreement between the two best original snapshots.
        std::vector<std::string> orig_ids;
        for (const auto& id : registry.ids()) {
            if (registry.get(id).variant() == Variant::original) orig_ids.push_back(id);
        }
        std::stable_sort(orig_ids.begin(), orig_ids.end(),
                         [&](const std::string& a, const std::string& b) { return single_sr.at(a) > single_sr.at(b); });
        auto singles = [&](const std::string& id) { return read_records_jsonl(single_records_path(id, sel)); };
        if (orig_ids.size() >= 2) {
            const auto a = singles(orig_ids[0]), b = singles(orig_ids[1]);
            const DisagreementCounts c = disagreement(a, b);
            const double n = static_cast<double>(c.total());
            report["disagreement"] = {{"a", orig_ids[0]},
                                      {"b", orig_ids[1]},
                                      {"split", to_string(sel)},
                                      {"both_succeed", c.both_succeed},
                                      {"only_a", c.only_a},
                                      {"only_b", c.only_b},
                                      {"both_fail", c.both_fail},
                                      {"different_pct", 100.0 * c.different() / n},
                                      {"sr_gap", std::abs(single_sr.at(orig_ids[0]) - single_sr.at(orig_ids[1]))}};
        }

        // Failure Venn over three original snapshots, then with run 2 replaced by the ensemble.
        const EnsembleSpec& orig_ens = rows[3].second;
        std::vector<std::string> trio =
            orig_ens.members.size() == 3 ? orig_ens.members
                                         : std::vector<std::string>(orig_ids.begin(),
                                                                    orig_ids.begin() + std::min<std::size_t>(3, orig_ids.size()));
        if (trio.size() == 3) {
            const auto r1 = singles(trio[0]), r2 = singles(trio[1]), r3 = singles(trio[2]);
            const auto& ens = sel_records.at("original-ensemble");
            report["venn"] = {{"runs", trio},
                              {"regions", venn3(r1, r2, r3).regions},
                              {"regions_with_ensemble", venn3(r1, ens, r3).regions}};
        }

        // Per-scene successes of the original ensemble and its members.
        {
            std::vector<std::vector<RunRecord>> runs{sel_records.at("original-ensemble")};
            std::vector<std::string> names{"original-ensemble"};
            for (const auto& id : orig_ens.members) {
                runs.push_back(singles(id));
                names.push_back(id);
            }
            std::vector<std::span<const RunRecord>> spans(runs.begin(), runs.end());
            const SceneTable t = per_scene_success(spans, names, d);
            json jt = json::object();
            for (std::size_t s = 0; s < t.scenes.size(); ++s) jt[t.scenes[s]] = t.counts[s];
            report["scene_table"] = {{"columns", t.columns}, {"rows", jt}};
            write_text_file(paths_.analysis() / "scenes.tsv", format_scene_table(t));
        }

        if (config_.analysis.export_attention) {
            const auto recs = read_records_jsonl(paths_.eval() / ("attention." + to_string(sel) + ".jsonl"));
            const AttentionExport e = export_attention(recs);
            write_attention_csv(e, paths_.analysis() / "attention.csv");
            report["attention"] = {{"snapshot", rows[2].second.members},
                                   {"mean_current", e.summary.mean[0]},
                                   {"mean_next", e.summary.mean[1]},
                                   {"mean_other", e.summary.mean[2]},
                                   {"count_current", e.summary.count[0]},
                                   {"count_next", e.summary.count[1]},
                                   {"count_other", e.summary.count[2]}};
        }
        if (config_.analysis.export_scores) {
            const auto rows_scores = export_score_table(sel_records.at("mixed-ensemble"));
            write_score_csv(rows_scores, paths_.analysis() / "scores.csv");
        }

        const auto& best_test = text_test[0].second;
        const auto& mixed_test = text_test[5].second;
        report["checks"] = {{"mixed_pool_is_2M", pool_ok},
                            {"ensembles_dominate_pool_best_single", dominance_ok},
                            {"best_single_validation_sr", best_single_sr},
                            {"mixed_test_sr_ge_best_single", mixed_test.sr >= best_test.sr}};
        write_text_file(paths_.root / "report.json", dump_json(report));

        std::ostringstream txt;
        txt << "Results on " << to_string(test) << "\n" << format_metrics_table(text_test) << "\n";
        txt << "Results on " << to_string(sel) << "\n" << format_metrics_table(text_sel) << "\n";
        txt << "Ensembles\n";
        for (const auto& pool : pools()) {
            const auto& e = ensembles[pool.row];
            txt << "  " << pool.row << ": pool " << e["pool_size"].get<std::size_t>() << ", evaluations "
                << e["evaluations"].get<std::size_t>() << " (budget " << e["budget"].get<std::size_t>() << "), members";
            for (const auto& m : e["members"]) txt << ' ' << m.get<std::string>();
            txt << "\n";
        }
        if (report.contains("disagreement")) {
            const auto& g = report["disagreement"];
            char buf[200];
            std::snprintf(buf, sizeof(buf), "\nDisagreement %s vs %s: %.2f%% of episodes differ, SR gap %.2f\n",
                          g["a"].get<std::string>().c_str(), g["b"].get<std::string>().c_str(),
                          g["different_pct"].get<double>(), g["sr_gap"].get<double>());
            txt << buf;
        }
        txt << "\nLong navigations (>= " << threshold << " actions) on " << to_string(sel) << "\n";
        for (const auto& [row, recs] : sel_records) {
            const auto s = long_nav_stats(recs, threshold);
            txt << "  " << row << ": " << s.count << " LN, " << s.failures << " failed\n";
        }
        write_text_file(paths_.root / "report.txt", txt.str());
    }

    // -- ablation -------------------------------------------------------------

    void ablate() {
        train_variant(Variant::original);
        const std::uint64_t fp = hash_text(hex(training_fingerprint(Variant::original)) +
                                           json{{"m", config_.ablation.m_values}, {"k", config_.ablation.k_values},
                                                {"l", config_.search.beam_width}, {"dedupe", config_.search.dedupe},
                                                {"split", to_string(config_.selection_split)}}
                                               .dump());
        stage("ablate", fp, [&] { write_ablation(); });
    }

    void write_ablation() {
        const Dataset& d = data();
        const Split sel = config_.selection_split;
        const auto& episodes = d.split(sel);
        const EnvConfig env = config_.original.env;
        json cells = json::array();
        std::map<std::pair<int, int>, MetricReport> grid;
        std::map<int, MetricReport> singles;
        bool all_within = true;
        for (int m : config_.ablation.m_values) {
            const fs::path dir = snapshot_dir(Variant::original, m);
            const SnapshotRegistry registry = load_registry({dir});
            // k = 1 column: the best single snapshot.
            {
                SearchConfig s = config_.search;
                s.max_size = 1;
                auto [spec, trace] = beam_search_select(registry, registry.ids(), s, d, episodes, env);
                singles[m] = compute_metrics(evaluate_records(spec, registry, d, episodes, env, {false, false}));
                cells.push_back({{"M", m},
                                 {"k", 1},
                                 {"members", spec.members},
                                 {"evaluations", trace.count()},
                                 {"budget", search_budget(registry.size(), s.beam_width, 1)},
                                 {"within_budget", trace.count() <= search_budget(registry.size(), s.beam_width, 1)},
                                 {"metrics", metrics_to_json(singles[m])}});
                cells.back()["metrics"].erase("per_scene");
            }
            for (int k : config_.ablation.k_values) {
                SearchConfig s = config_.search;
                s.max_size = k;
                auto [spec, trace] = beam_search_select(registry, registry.ids(), s, d, episodes, env);
                const MetricReport r = compute_metrics(evaluate_records(spec, registry, d, episodes, env, {false, false}));
                grid[{m, k}] = r;
                const std::size_t budget = search_budget(registry.size(), s.beam_width, k);
                const bool within = trace.count() <= budget;
                all_within = all_within && within;
                json mj = metrics_to_json(r);
                mj.erase("per_scene");
                cells.push_back({{"M", m},
                                 {"k", k},
                                 {"members", spec.members},
                                 {"validation_sr", spec.validation_sr},
                                 {"evaluations", trace.count()},
                                 {"budget", budget},
                                 {"within_budget", within},
                                 {"metrics", mj}});
                log("  ablation M=" + std::to_string(m) + " k=" + std::to_string(k) + ": SR " + std::to_string(r.sr) +
                    ", " + std::to_string(trace.count()) + "/" + std::to_string(budget) + " evaluations");
            }
        }

        const auto& ks = config_.ablation.k_values;
        const auto& ms = config_.ablation.m_values;
        const int fixed_k = std::find(ks.begin(), ks.end(), 3) != ks.end() ? 3 : ks.front();
        const int fixed_m = std::find(ms.begin(), ms.end(), config_.original.periods) != ms.end()
                                ? config_.original.periods
                                : ms.front();
        std::vector<std::pair<std::string, MetricReport>> by_m, by_k;
        for (int m : ms) by_m.emplace_back("M=" + std::to_string(m), grid.at({m, fixed_k}));
        for (int k : ks) by_k.emplace_back("k=" + std::to_string(k), grid.at({fixed_m, k}));

        json out = {{"split", to_string(sel)},
                    {"l", config_.search.beam_width},
                    {"fixed_k", fixed_k},
                    {"fixed_m", fixed_m},
                    {"all_within_budget", all_within},
                    {"cells", cells}};
        write_text_file(paths_.ablation() / "ablation.json", dump_json(out));

        std::ostringstream txt;
        txt << "Ablation over M (k = " << fixed_k << ") on " << to_string(sel) << "\n" << format_metrics_table(by_m);
        txt << "\nAblation over k (M = " << fixed_m << ") on " << to_string(sel) << "\n" << format_metrics_table(by_k);
        txt << "\nFull grid (SR, evaluations/budget)\n";
        char buf[120];
        for (const auto& c : cells) {
            std::snprintf(buf, sizeof(buf), "  M=%-3d k=%-2d SR %6.2f  %zu/%zu%s\n", c["M"].get<int>(), c["k"].get<int>(),
                          c["metrics"]["sr"].get<double>(), c["evaluations"].get<std::size_t>(),
                          c["budget"].get<std::size_t>(), c["within_budget"].get<bool>() ? "" : "  OVER BUDGET");
            txt << buf;
        }
        write_text_file(paths_.ablation() / "ablation.txt", txt.str());
    }

   private:
    void set_status(const std::string& name, std::uint64_t fingerprint, const std::string& status,
                    const std::string& error) {
        json entry = {{"status", status}, {"fingerprint", hex(fingerprint)}};
        if (!error.empty()) entry["error"] = error;
        manifest_["stages"][name] = entry;
        write_text_file(paths_.manifest(), dump_json(manifest_));
    }

    const ExperimentConfig& config_;
    PipelineOptions options_;
    ArtifactPaths paths_;
    json manifest_ = json::object();
    std::optional<Dataset> data_;
};

int run_guarded(const ExperimentConfig& config, const PipelineOptions& options,
                const std::function<void(Experiment&)>& body) {
    std::ostream& err = options.log ? *options.log : std::cerr;
    try {
        config.validate();
    } catch (const std::exception& e) {
        err << "stage config failed: " << e.what() << std::endl;
        return 1;
    }
    try {
        fs::create_directories(config.out_dir);
        Experiment ex(config, options);
        write_text_file(ex.paths().root / "config.json", dump_json(experiment_config_to_json(config)));
        body(ex);
    } catch (const StageError& e) {
        err << "stage " << e.stage() << " failed: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        err << "stage setup failed: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

}  // namespace

int cmd_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
    return run_guarded(config, options, [](Experiment& ex) { ex.analyze_and_report(); });
}

int cmd_ablate(const ExperimentConfig& config, const PipelineOptions& options) {
    return run_guarded(config, options, [](Experiment& ex) { ex.ablate(); });
}

}  // namespace snapnav
