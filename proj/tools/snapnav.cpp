// snapnav: command-line entry point.
//
//   snapnav gen-data --config gen.json --seed 0 --out data/
//   snapnav train    --config exp.json --data data/ --out train/ --variant original
//   snapnav select   --snapshots train/snapshots --data data/ --l 3 --k 4 --split val_unseen --out ensemble.json
//   snapnav eval     --ensemble ensemble.json --data data/ --split test --records runs.jsonl
//   snapnav analyze  --records a.jsonl b.jsonl --mode disagree --out analysis/
//   snapnav ablate   --config exp.json --out out/
//   snapnav pipeline --config exp.json --seed 0 --out out/

#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "snapnav/common.hpp"
#include "snapnav/dataset_io.hpp"
#include "snapnav/ensemble.hpp"
#include "snapnav/metrics.hpp"
#include "snapnav/pipeline.hpp"
#include "snapnav/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace snapnav;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
    cmd->add_option("--config", c.config, "JSON config file (comments allowed)")->check(CLI::ExistingFile);
    auto* out = cmd->add_option("--out", c.out, "output path");
    if (out_required) out->required();
    c.seed_opt = cmd->add_option("--seed", c.seed, "global seed");
}

const std::set<std::string> kExperimentKeys{"out",    "data",     "seed",     "generator",       "training",
                                            "original", "past_action_aware", "search", "ablation", "analysis",
                                            "selection_split", "eval_split"};

bool looks_like_experiment(const json& j) {
    for (const auto& [key, v] : j.items()) {
        if (kExperimentKeys.count(key)) return true;
    }
    return false;
}

// Accepts a full experiment config or a bare generator/training block.
ExperimentConfig experiment_from(const Common& c, const char* bare_kind) {
    ExperimentConfig cfg;
    if (!c.config.empty()) {
        const json j = read_json_file(c.config);
        if (looks_like_experiment(j) || j.empty()) cfg = experiment_config_from_json(j);
        else cfg = experiment_config_from_json(json{{bare_kind, j}});
    }
    if (c.seed_opt && c.seed_opt->count() > 0) cfg.seed = c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    return cfg;
}

int run_gen_data(const Common& c) {
    const ExperimentConfig cfg = experiment_from(c, "generator");
    cfg.generator.validate();
    const Dataset data = generate_dataset(cfg.generator, data_seed(cfg.seed));
    save_dataset(data, c.out);
    std::cout << "wrote " << data.scenes.size() << " scenes to " << c.out << "\n";
    for (Split s : kAllSplits) std::cout << "  " << to_string(s) << ": " << data.split(s).size() << " episodes\n";
    return 0;
}

int run_train(const Common& c, const std::string& data_dir, const std::string& variant_name) {
    const ExperimentConfig cfg = experiment_from(c, "training");
    const Dataset data = load_dataset(data_dir);
    std::vector<Variant> variants;
    if (variant_name == "both") variants = {Variant::original, Variant::past_action_aware};
    else variants = {variant_from_string(variant_name)};
    for (Variant v : variants) {
        TrainingConfig t = cfg.training(v);
        t.variant = v;
        t.seed = training_seed(cfg.seed);
        const int every = std::max(1, t.total_iterations / 20);
        const TrainingResult r = train(t, data, [&](int it, const LossCurveRow& row) {
            if (it % every == 0)
                std::cerr << to_string(v) << " " << it << "/" << t.total_iterations << " il " << row.il << " rl "
                          << row.rl << " attn " << row.attn << "\n";
        });
        const fs::path dir = variants.size() == 1 ? fs::path(c.out) : fs::path(c.out) / ("train_" + to_string(v));
        save_training_outputs(r, t, dir);
        std::cout << to_string(v) << ": " << r.snapshots.size() << " snapshots in " << (dir / "snapshots").string()
                  << "\n";
        for (const auto& s : r.snapshots)
            std::cout << "  " << s.snapshot_id << " iteration " << s.iteration << " val SR " << s.validation_sr << "\n";
    }
    return 0;
}

int run_select(const Common& c, const std::vector<std::string>& snapshot_dirs, const std::string& data_dir,
               int l, int k, const std::string& split, bool no_dedupe) {
    const ExperimentConfig cfg = experiment_from(c, "search");
    SearchConfig search = cfg.search;
    if (l > 0) search.beam_width = l;
    if (k > 0) search.max_size = k;
    if (no_dedupe) search.dedupe = false;
    const Dataset data = load_dataset(data_dir);
    std::vector<fs::path> dirs(snapshot_dirs.begin(), snapshot_dirs.end());
    const SnapshotRegistry registry = load_registry(dirs);
    const Split s = split_from_string(split);
    auto [spec, trace] = beam_search_select(registry, registry.ids(), search, data, data.split(s), cfg.original.env);

    EnsembleFile f;
    f.name = fs::path(c.out).stem().string();
    f.spec = spec;
    f.trace = trace;
    f.search = search;
    f.budget = search_budget(trace.candidates.size(), search.beam_width, search.max_size);
    f.split = split;
    const fs::path base = fs::absolute(fs::path(c.out)).parent_path();
    for (const auto& d : dirs) f.snapshot_dirs.push_back(fs::absolute(d).lexically_normal().lexically_relative(base));
    write_text_file(c.out, dump_json(ensemble_file_to_json(f)));
    std::cout << "selected";
    for (const auto& m : spec.members) std::cout << ' ' << m;
    std::cout << " (val SR " << spec.validation_sr << ", " << trace.count() << " evaluations, budget " << f.budget
              << ")\n";
    return 0;
}

int run_eval(const Common& c, const std::string& ensemble_path, std::vector<std::string> snapshot_dirs,
             const std::string& data_dir, const std::string& split, const std::string& records_path, bool attention,
             bool teacher) {
    const ExperimentConfig cfg = experiment_from(c, "original");
    const Dataset data = load_dataset(data_dir);
    const auto& episodes = data.split(split_from_string(split));
    const EnvConfig env = cfg.original.env;
    std::vector<RunRecord> records;
    if (teacher) {
        TeacherAgent t(env);
        records = evaluate_records(std::vector<Agent*>{&t}, data, episodes, env, RecordOptions{true, false});
    } else {
        if (ensemble_path.empty()) throw Error("eval needs --ensemble or --teacher");
        const EnsembleFile f = ensemble_file_from_json(read_json_file(ensemble_path));
        std::vector<fs::path> dirs;
        if (!snapshot_dirs.empty()) {
            dirs.assign(snapshot_dirs.begin(), snapshot_dirs.end());
        } else {
            const fs::path base = fs::absolute(fs::path(ensemble_path)).parent_path();
            for (const auto& d : f.snapshot_dirs) dirs.push_back(d.is_absolute() ? d : base / d);
        }
        const SnapshotRegistry registry = load_registry(dirs);
        records = evaluate_records(f.spec, registry, data, episodes, env, RecordOptions{true, attention});
    }
    if (!records_path.empty()) write_records_jsonl(records, records_path);
    const MetricReport m = compute_metrics(records);
    std::cout << format_metrics_table({{split, m}});
    if (!c.out.empty()) write_text_file(c.out, dump_json(metrics_to_json(m)));
    return 0;
}

int run_analyze(const Common& c, const std::vector<std::string>& record_files, const std::string& mode,
                const std::string& data_dir, int threshold) {
    std::vector<std::vector<RunRecord>> runs;
    std::vector<std::string> names;
    for (const auto& f : record_files) {
        runs.push_back(read_records_jsonl(f));
        names.push_back(fs::path(f).stem().string());
    }
    const fs::path out = c.out;
    auto need = [&](std::size_t n) {
        if (runs.size() != n)
            throw Error("--mode " + mode + " needs exactly " + std::to_string(n) + " record files, got " +
                        std::to_string(runs.size()));
    };
    if (mode == "metrics") {
        std::vector<std::pair<std::string, MetricReport>> rows;
        json j = json::object();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            rows.emplace_back(names[i], compute_metrics(runs[i]));
            j[names[i]] = metrics_to_json(rows.back().second);
        }
        const std::string table = format_metrics_table(rows);
        std::cout << table;
        write_text_file(out / "metrics.json", dump_json(j));
        write_text_file(out / "metrics.txt", table);
    } else if (mode == "disagree") {
        need(2);
        const DisagreementCounts d = disagreement(runs[0], runs[1]);
        const json j = {{"a", names[0]},           {"b", names[1]},         {"both_succeed", d.both_succeed},
                        {"only_a", d.only_a},      {"only_b", d.only_b},    {"both_fail", d.both_fail},
                        {"different", d.different()}, {"total", d.total()}};
        std::cout << j.dump(2) << "\n";
        write_text_file(out / "disagreement.json", dump_json(j));
    } else if (mode == "venn") {
        need(3);
        const VennCounts v = venn3(runs[0], runs[1], runs[2]);
        json regions = json::object();
        for (int mask = 0; mask < 8; ++mask) {
            std::string label;
            for (int b = 0; b < 3; ++b) {
                if (mask & (1 << b)) label += (label.empty() ? "" : "+") + names[b];
            }
            regions[label.empty() ? "none_failed" : label] = v.regions[mask];
        }
        const json j = {{"runs", names}, {"regions", v.regions}, {"labeled", regions}, {"total", v.total()}};
        std::cout << j.dump(2) << "\n";
        write_text_file(out / "venn.json", dump_json(j));
    } else if (mode == "longnav") {
        json j = json::object();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const LongNavStats s = long_nav_stats(runs[i], threshold);
            j[names[i]] = {{"count", s.count}, {"failures", s.failures}, {"failure_pct", s.failure_pct}};
        }
        std::cout << j.dump(2) << "\n";
        write_text_file(out / "longnav.json", dump_json(j));
    } else if (mode == "scenes") {
        if (data_dir.empty()) throw Error("--mode scenes needs --data");
        const Dataset data = load_dataset(data_dir);
        std::vector<std::span<const RunRecord>> spans(runs.begin(), runs.end());
        const SceneTable t = per_scene_success(spans, names, data);
        const std::string text = format_scene_table(t);
        std::cout << text;
        write_text_file(out / "scenes.tsv", text);
    } else if (mode == "attention") {
        std::vector<RunRecord> all;
        for (auto& r : runs) all.insert(all.end(), r.begin(), r.end());
        const AttentionExport e = export_attention(all);
        if (e.skipped_records > 0)
            std::cerr << "warning: " << e.skipped_records << " records carry no attention rows and were skipped\n";
        write_attention_csv(e, out / "attention.csv");
        const json j = {{"mean_current", e.summary.mean[0]}, {"mean_next", e.summary.mean[1]},
                        {"mean_other", e.summary.mean[2]},   {"count_current", e.summary.count[0]},
                        {"count_next", e.summary.count[1]},  {"count_other", e.summary.count[2]}};
        std::cout << j.dump(2) << "\n";
        write_text_file(out / "attention_summary.json", dump_json(j));
    } else if (mode == "scores") {
        std::vector<RunRecord> all;
        for (auto& r : runs) all.insert(all.end(), r.begin(), r.end());
        const auto rows = export_score_table(all);
        write_score_csv(rows, out / "scores.csv");
        std::cout << rows.size() << " score rows\n";
    } else {
        throw Error("unknown analyze mode '" + mode + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"snapnav: snapshot ensembles for graph navigation"};
    app.require_subcommand(1);

    Common gen, tr, sel, ev, an, ab, pl;

    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic navigation dataset");
    add_common(gen_cmd, gen, true);

    auto* train_cmd = app.add_subcommand("train", "train one or both policy variants");
    add_common(train_cmd, tr, true);
    std::string train_data, train_variant = "original";
    train_cmd->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--variant", train_variant, "original, past_action_aware or both");

    auto* select_cmd = app.add_subcommand("select", "beam-search an ensemble from snapshot directories");
    add_common(select_cmd, sel, true);
    std::vector<std::string> select_dirs;
    std::string select_data, select_split = "val_unseen";
    int select_l = 0, select_k = 0;
    bool select_no_dedupe = false;
    select_cmd->add_option("--snapshots", select_dirs, "snapshot directories")->required()->expected(1, -1);
    select_cmd->add_option("--data", select_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    select_cmd->add_option("--l", select_l, "beam width (default 3)");
    select_cmd->add_option("--k", select_k, "maximum ensemble size (default 4)");
    select_cmd->add_option("--split", select_split, "selection split");
    select_cmd->add_flag("--no-dedupe", select_no_dedupe, "re-evaluate subsets reached by several beams");

    auto* eval_cmd = app.add_subcommand("eval", "run an ensemble greedily on a split");
    add_common(eval_cmd, ev, false);
    std::string eval_ensemble, eval_data, eval_split = "test", eval_records;
    std::vector<std::string> eval_dirs;
    bool eval_attention = false, eval_teacher = false;
    eval_cmd->add_option("--ensemble", eval_ensemble, "ensemble JSON written by select")->check(CLI::ExistingFile);
    eval_cmd->add_option("--snapshots", eval_dirs, "override the snapshot directories recorded in the ensemble");
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--split", eval_split, "evaluation split");
    eval_cmd->add_option("--records", eval_records, "RunRecord JSON-lines output");
    eval_cmd->add_flag("--attention", eval_attention, "store attention rows in the records");
    eval_cmd->add_flag("--teacher", eval_teacher, "evaluate the geodesic teacher instead of an ensemble");

    auto* analyze_cmd = app.add_subcommand("analyze", "metrics and analyses over RunRecord files");
    add_common(analyze_cmd, an, true);
    std::vector<std::string> analyze_records;
    std::string analyze_mode = "metrics", analyze_data;
    int analyze_threshold = 15;
    analyze_cmd->add_option("--records", analyze_records, "RunRecord JSON-lines files")->required()->expected(1, -1);
    analyze_cmd->add_option("--mode", analyze_mode, "metrics|disagree|venn|longnav|scenes|attention|scores");
    analyze_cmd->add_option("--data", analyze_data, "dataset directory (scenes mode)");
    analyze_cmd->add_option("--threshold", analyze_threshold, "long-navigation action threshold");

    auto* ablate_cmd = app.add_subcommand("ablate", "sweep M and k over the original variant's snapshots");
    add_common(ablate_cmd, ab, false);

    auto* pipeline_cmd = app.add_subcommand("pipeline", "data, training, selection, evaluation and report");
    add_common(pipeline_cmd, pl, false);
    bool force = false, quiet = false;
    for (auto* cmd : {pipeline_cmd, ablate_cmd}) {
        cmd->add_flag("--force", force, "ignore the stage manifest and rerun everything");
        cmd->add_flag("--quiet", quiet, "suppress progress output");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (train_cmd->parsed()) return run_train(tr, train_data, train_variant);
        if (select_cmd->parsed())
            return run_select(sel, select_dirs, select_data, select_l, select_k, select_split, select_no_dedupe);
        if (eval_cmd->parsed())
            return run_eval(ev, eval_ensemble, eval_dirs, eval_data, eval_split, eval_records, eval_attention,
                            eval_teacher);
        if (analyze_cmd->parsed()) return run_analyze(an, analyze_records, analyze_mode, analyze_data, analyze_threshold);
        PipelineOptions opts;
        opts.log = quiet ? nullptr : &std::cerr;
        opts.force = force;
        if (ablate_cmd->parsed()) return cmd_ablate(experiment_from(ab, "original"), opts);
        if (pipeline_cmd->parsed()) return cmd_pipeline(experiment_from(pl, "original"), opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
