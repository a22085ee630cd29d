#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amc/analysis.hpp"
#include "amc/config.hpp"
#include "amc/dataset.hpp"
#include "amc/neuralnet.hpp"
#include "amc/rejection.hpp"
#include "amc/svm.hpp"

namespace amc::pipeline {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr const char* kCacheEnv = "AMC_CACHE_DIR";

using Logger = std::function<void(const std::string&)>;

struct StageRecord {
    std::string name;
    std::string key;
    std::map<std::string, std::string> inputs;   // file -> sha256
    std::map<std::string, std::string> outputs;  // file -> sha256
};

struct RunManifest {
    std::string toolkit_version = kToolkitVersion;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<StageRecord> stages;

    std::string to_json() const;
};

struct StageTiming {
    std::string name;
    double seconds = 0.0;
    std::string status;  // ran | skipped | cached
};

struct PipelineResult {
    RunManifest manifest;
    std::vector<StageTiming> timings;
};

/// Exclusive ownership of a run directory through `<dir>/.lock`.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
};

/// Runs named stages keyed by the SHA-256 of their parameters and input
/// files. A stage is skipped when its recorded key matches and its outputs
/// still hash to the recorded values; with a cache directory, outputs are also
/// stored and restored by key. A failing stage's outputs are moved to
/// `<dir>/quarantine/<stage>-<key prefix>/`.
class StageRunner {
public:
    StageRunner(std::filesystem::path dir, std::optional<std::filesystem::path> cache_dir, Logger log);

    void run(const std::string& name, const std::string& params, const std::vector<std::filesystem::path>& inputs,
             const std::vector<std::filesystem::path>& outputs, const std::function<void()>& body);

    const std::vector<StageRecord>& records() const { return records_; }
    const std::vector<StageTiming>& timings() const { return timings_; }

private:
    std::string relative(const std::filesystem::path& p) const;
    void quarantine(const std::string& name, const std::string& key, const std::vector<std::filesystem::path>& outputs);

    std::filesystem::path dir_;
    std::optional<std::filesystem::path> cache_dir_;
    Logger log_;
    std::vector<StageRecord> records_;
    std::vector<StageTiming> timings_;
};

/// The cache directory named by AMC_CACHE_DIR, if set and non-empty.
std::optional<std::filesystem::path> cache_dir_from_env();

/// Samples up to `n_features` training frames, extracts CNN features and runs the grid search.
svm::OvaTrainResult train_svm_on(const nn::CnnModel& cnn, const DatasetBundle& train, std::size_t n_features,
                                 const svm::CvGrid& grid, bool standardize, std::uint64_t seed);

/// Rejection-free argmax of the NR scores.
int nr_argmax(const nr::NrModel& nr, const IQFrame& frame);

/// Loads a system by tag: "dnn" from a CNN checkpoint, "nr"/"ls-gna-nr" from an NR bundle.
std::unique_ptr<analysis::System> load_system(const std::string& tag, const std::filesystem::path& model);
/// Clean correctness used to form set I and set II.
CleanScorer clean_scorer(const analysis::System& system);

std::vector<analysis::EvalRow> parse_rows_csv(const std::string& text);

/// Reads `<run>/seed-*/rows.csv` for every run, writes the merged rows with a
/// seed column (`rows.csv`) and per-cell mean/stddev over seeds (`aggregate.csv`).
void merge_runs(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out_dir);

PipelineResult run_pipeline(const ExperimentConfig& config, const Logger& log = {});

}  // namespace amc::pipeline
