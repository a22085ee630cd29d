#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "amc/frame.hpp"

namespace amc {

struct LabeledExample {
    IQFrame frame;
    std::uint8_t label = 0;
    std::int8_t snr_db = 0;

    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

enum class Provenance : std::uint8_t { Synthetic = 0, Imported = 1 };

struct DatasetBundle {
    std::vector<LabeledExample> examples;
    std::vector<std::string> class_names;
    Provenance provenance = Provenance::Synthetic;
    std::uint64_t seed = 0;

    /// An empty bundle carrying the canonical class table.
    static DatasetBundle empty(Provenance provenance = Provenance::Synthetic, std::uint64_t seed = 0);

    std::size_t size() const { return examples.size(); }
    DatasetBundle subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

/// The SNR grid of the public corpus: -20, -18, ..., 18 dB.
std::vector<int> standard_snr_grid();
bool is_standard_snr(int snr_db);

struct SynthConfig {
    std::vector<std::string> schemes;  // empty means all eleven
    std::vector<int> snrs_db;          // empty means the standard grid
    std::int64_t frames_per_cell = 100;
    double target_power = 1.0;         // mean |s|^2 per complex sample before noise
};

/// Noise-free and noise components of one synthesized frame, kept separate
/// so SNR can be measured without an estimator. `clean + noise` is the frame.
struct FrameParts {
    std::vector<std::complex<double>> clean;
    std::vector<std::complex<double>> noise;
};

/// Deterministic in (scheme, snr_db, stream): each frame draws from its own
/// generator, so the output does not depend on generation order.
FrameParts synthesize_frame(int scheme, int snr_db, std::uint64_t stream, double target_power = 1.0);

IQFrame to_frame(const FrameParts& parts);

DatasetBundle generate_synthetic(const SynthConfig& config, std::uint64_t seed);

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& path);
DatasetBundle load_dataset(const std::filesystem::path& path);

/// Extra tagged blocks appended after the examples (4-byte tag, payload).
struct TrailerBlock {
    std::string tag;
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_dataset(const DatasetBundle& bundle, std::span<const TrailerBlock> extra = {});
/// Unknown trailer blocks are skipped, or collected into `extra` when given.
DatasetBundle decode_dataset(std::span<const std::uint8_t> bytes, std::vector<TrailerBlock>* extra = nullptr);

/// Stratified 50/50 partition by (label, snr_db). Within a cell with an odd
/// count the extra example goes to the training side.
std::pair<DatasetBundle, DatasetBundle> split_train_test(const DatasetBundle& bundle, std::uint64_t seed);

/// Rescales every frame to mean complex-sample power `target_power`.
DatasetBundle rms_normalize(const DatasetBundle& bundle, double target_power = 1.0);

struct EvalSplit {
    std::vector<std::size_t> set_one;  // correctly classified clean
    std::vector<std::size_t> set_two;  // misclassified clean
    int snr_db = 10;
    std::size_t size_total = 0;
};

using CleanScorer = std::function<int(const LabeledExample&)>;

/// Samples `n` examples at `snr_db` without replacement and routes each index
/// into set one or set two by the scorer's clean prediction. Indices refer to
/// `test.examples` and are ascending within each set.
EvalSplit build_eval_split(const CleanScorer& scorer, const DatasetBundle& test, int snr_db = 10,
                           std::size_t n = 1000, std::uint64_t seed = 0);

/// The sampled indices only; build_eval_split routes exactly these.
std::vector<std::size_t> sample_eval_indices(const DatasetBundle& test, int snr_db, std::size_t n,
                                             std::uint64_t seed);

/// splitmix64 finalizer; used to derive independent seeds from a root seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace amc
