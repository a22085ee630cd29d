#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amc/attacks.hpp"
#include "amc/dataset.hpp"
#include "amc/neuralnet.hpp"
#include "amc/rejection.hpp"

namespace amc::analysis {

/// 1 - a.b / (|a| |b|), clamped to [0, 2]. Throws PreconditionError on a zero vector.
double cosine_distance(std::span<const double> a, std::span<const double> b);

struct AmplificationProfile {
    std::vector<std::string> layer_names;
    std::vector<double> mean_cosine_adv;
    std::vector<double> mean_cosine_noisy;
    std::size_t n_pairs = 0;
    std::size_t skipped_zero_norm = 0;  // (frame, layer) pairs with an all-zero activation
};

/// Per-layer mean cosine distance between the benign run and (a) the FGM
/// adversarial run, (b) an equal-norm Gaussian-noise run. Activations are
/// post-ReLU, flattened channel-major.
AmplificationProfile amplification_profile(const nn::CnnModel& model, std::span<const LabeledExample> frames,
                                           const attacks::AttackBudget& budget, std::uint64_t seed);

inline constexpr double kInfiniteEpsilonL = std::numeric_limits<double>::infinity();

struct EpsilonL {
    double value = 0.0;   // kInfiniteEpsilonL when the gradient difference vanishes
    int competitor = -1;  // nearest competing class
};

/// (S_y - S_c) / |grad S_y - grad S_c|_1 with c = argmax_{k != y} S_k.
/// `difference_gradient(a, b)` returns the input gradient of S_a - S_b.
EpsilonL epsilon_l(const Eigen::VectorXd& scores, int y,
                   const std::function<std::vector<double>(int, int)>& difference_gradient);

EpsilonL robustness_epsilon_l(const nr::NrModel& nr, const IQFrame& frame, int y);

struct EpsilonLSummary {
    double mean = 0.0;
    double median = 0.0;  // a vanishing gradient gives a huge finite value that can dominate the mean
    std::size_t n_used = 0;
    std::size_t n_infinite = 0;
    std::size_t n_misclassified = 0;  // argmax != y; not part of the mean
};

EpsilonLSummary mean_epsilon_l(const nr::NrModel& nr, std::span<const LabeledExample> examples);

/// A classifier under test, with its own FGM attack.
class System {
public:
    virtual ~System() = default;
    virtual std::string tag() const = 0;
    virtual nr::Verdict classify(const IQFrame& frame) const = 0;
    virtual attacks::AttackOutcome fgm(const IQFrame& frame, int y, double epsilon) const = 0;
    /// Precomputes whatever the attack needs once per frame; the default does nothing.
    virtual std::vector<attacks::AttackOutcome> fgm_sweep(const IQFrame& frame, int y,
                                                          std::span<const double> epsilons) const;
};

class DnnSystem : public System {
public:
    DnnSystem(std::string tag, nn::CnnModel model) : tag_(std::move(tag)), model_(std::move(model)) {}
    std::string tag() const override { return tag_; }
    nr::Verdict classify(const IQFrame& frame) const override;
    attacks::AttackOutcome fgm(const IQFrame& frame, int y, double epsilon) const override;
    std::vector<attacks::AttackOutcome> fgm_sweep(const IQFrame& frame, int y,
                                                  std::span<const double> epsilons) const override;
    const nn::CnnModel& model() const { return model_; }

private:
    std::string tag_;
    nn::CnnModel model_;
};

class NrSystem : public System {
public:
    NrSystem(std::string tag, nr::NrModel model) : tag_(std::move(tag)), model_(std::move(model)) {}
    std::string tag() const override { return tag_; }
    nr::Verdict classify(const IQFrame& frame) const override;
    attacks::AttackOutcome fgm(const IQFrame& frame, int y, double epsilon) const override;
    std::vector<attacks::AttackOutcome> fgm_sweep(const IQFrame& frame, int y,
                                                  std::span<const double> epsilons) const override;
    const nr::NrModel& model() const { return model_; }

private:
    std::string tag_;
    nr::NrModel model_;
};

enum class Perturbation { Fgm, Jamming };
const char* to_string(Perturbation p);

/// Lenient: rejects are errors on clean inputs and correct on perturbed ones.
/// Strict: rejects are always errors.
enum class CountingPolicy { Lenient, Strict };
const char* to_string(CountingPolicy p);

bool counts_as_correct(const nr::Verdict& v, int label, bool perturbed, CountingPolicy policy);

struct EvalRow {
    std::string system;
    Perturbation perturbation = Perturbation::Fgm;
    bool clean = false;  // the unperturbed row; pnr_db is meaningless there
    double pnr_db = 0.0;
    std::string set;     // "I", "II" or "all"
    std::string scheme;  // class name or "all"
    std::size_t n = 0;
    std::size_t correct = 0;
    std::size_t rejected = 0;
    double accuracy() const { return n == 0 ? 0.0 : double(correct) / double(n); }
    double rejection_rate() const { return n == 0 ? 0.0 : double(rejected) / double(n); }
};

struct EvalReport {
    std::string system;
    Perturbation perturbation = Perturbation::Fgm;
    CountingPolicy policy = CountingPolicy::Lenient;
    std::vector<EvalRow> rows;
    std::size_t attack_successes = 0;  // perturbed frames where the FGM attack reported success

    const EvalRow& find(bool clean, double pnr_db, const std::string& set, const std::string& scheme = "all") const;
};

struct EvalOptions {
    Perturbation perturbation = Perturbation::Fgm;
    CountingPolicy policy = CountingPolicy::Lenient;
    std::uint64_t seed = 0;  // jamming noise
    /// Called per emitted perturbed frame (for attack-set output).
    std::function<void(std::size_t test_index, double pnr_db, const attacks::AttackOutcome&)> on_outcome;
};

/// Clean row plus one row set per PNR, for set I, set II and both, overall and per scheme.
EvalReport evaluate(const System& system, const DatasetBundle& test, const EvalSplit& split,
                    std::span<const double> pnr_db, const EvalOptions& options = {});

struct TableRow {
    std::string scheme;
    double clean_accuracy = 0.0;
    std::vector<double> cells;  // one per column
};

struct ModulationTable {
    std::vector<std::string> columns;  // "<system>@<pnr>dB"
    std::vector<TableRow> rows;
};

/// Rows: schemes whose clean accuracy on `reference` (set "all") is at least
/// `floor`. Columns: every report x PNR, set "all", perturbed counting rule.
ModulationTable per_modulation_table(const EvalReport& reference, std::span<const EvalReport> reports,
                                     double floor = 0.40);

std::string rows_csv_header();
std::string to_csv_row(const EvalRow& row);
std::string table_csv(const ModulationTable& table);

}  // namespace amc::analysis
