#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapnav/ensemble.hpp"
#include "snapnav/metrics.hpp"
#include "snapnav/navsim.hpp"
#include "snapnav/training.hpp"

namespace snapnav {

struct AblationConfig {
    std::vector<int> m_values{5, 10, 15};
    std::vector<int> k_values{3, 4, 5};
};

struct AnalysisConfig {
    bool export_attention = true;
    bool export_scores = true;
    int long_nav_threshold = 15;
};

/// Everything one experiment needs. Loaded from a JSON file (comments
/// allowed); every key is optional.
struct ExperimentConfig {
    std::filesystem::path out_dir = "out";
    // Existing dataset directory; when empty the pipeline generates one under out_dir/data.
    std::filesystem::path data_dir;
    std::uint64_t seed = 0;
    GeneratorConfig generator;
    TrainingConfig original;
    TrainingConfig past_action_aware;
    SearchConfig search;
    AblationConfig ablation;
    AnalysisConfig analysis;
    Split selection_split = Split::val_unseen;
    Split eval_split = Split::test;

    ExperimentConfig();
    void validate() const;
    const TrainingConfig& training(Variant v) const {
        return v == Variant::original ? original : past_action_aware;
    }
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
/// Keys under "training" apply to both variants; "original" and
/// "past_action_aware" override per variant. Unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Stage seeds: derive_seed(seed, "gen-data") and derive_seed(seed, "train").
std::uint64_t data_seed(std::uint64_t global_seed);
std::uint64_t training_seed(std::uint64_t global_seed);

// Artifact layout under an output directory.
struct ArtifactPaths {
    std::filesystem::path root;
    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path train_dir(Variant v) const { return root / ("train_" + to_string(v)); }
    std::filesystem::path snapshot_dir(Variant v, int periods, int default_periods) const;
    std::filesystem::path ensembles() const { return root / "ensembles"; }
    std::filesystem::path eval() const { return root / "eval"; }
    std::filesystem::path analysis() const { return root / "analysis"; }
    std::filesystem::path ablation() const { return root / "ablation"; }
    std::filesystem::path manifest() const { return root / "manifest.json"; }
};

/// Writes snapshots (snapshots/ and snapshots_M<m>/ for extra period
/// counts), loss and SR curves, and the training config into dir.
void save_training_outputs(const TrainingResult& result, const TrainingConfig& config, const std::filesystem::path& dir);

/// An ensemble file: spec, search trace, pool description and the snapshot
/// directories its members come from.
struct EnsembleFile {
    std::string name;
    EnsembleSpec spec;
    SearchTrace trace;
    SearchConfig search;
    std::size_t budget = 0;
    std::vector<std::filesystem::path> snapshot_dirs;
    std::string split;
};
nlohmann::json ensemble_file_to_json(const EnsembleFile& f);
EnsembleFile ensemble_file_from_json(const nlohmann::json& j);

SnapshotRegistry load_registry(const std::vector<std::filesystem::path>& dirs);

struct PipelineOptions {
    std::ostream* log = nullptr;
    bool force = false;  // ignore the manifest and rerun every stage
};

/// Runs data generation, training of both variants, selection of the three
/// ensembles, evaluation, analysis and the report. Returns 0 on success;
/// on failure logs "stage <name> failed: <cause>", marks the manifest and
/// returns 1. Stages whose manifest entry matches are skipped.
int cmd_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

/// Runs the (M, k) grid over the original variant's snapshot sets,
/// training them first if the pipeline has not produced them yet.
int cmd_ablate(const ExperimentConfig& config, const PipelineOptions& options = {});

}  // namespace snapnav
