#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "amc/dataset.hpp"
#include "amc/frame.hpp"
#include "amc/neuralnet.hpp"
#include "amc/rejection.hpp"

namespace amc::attacks {

double db_to_linear(double db);

/// eps = sqrt(PNR * |x|^2 / (SNR + 1)), all ratios linear.
double epsilon_from_pnr(double pnr_linear, double snr_linear, double x_norm_sq);
double pnr_from_epsilon(double epsilon, double snr_linear, double x_norm_sq);

/// Exactly one of a PNR (dB) or an explicit epsilon.
class AttackBudget {
public:
    static AttackBudget from_pnr_db(double pnr_db);
    static AttackBudget from_epsilon(double epsilon);

    double epsilon_for(const IQFrame& frame, double snr_db) const;
    bool is_pnr() const { return is_pnr_; }
    double value() const { return value_; }

private:
    AttackBudget(bool is_pnr, double value) : is_pnr_(is_pnr), value_(value) {}
    bool is_pnr_;
    double value_;
};

struct AttackOutcome {
    IQFrame adversarial;
    double epsilon_used = 0.0;
    std::optional<int> target_class;
    bool succeeded = false;
    bool evaded_rejection = false;  // NR attacks: the adversarial frame was accepted
    double perturbation_norm = 0.0;
    std::size_t zero_gradient_targets = 0;
};

/// Unit-norm FGM direction toward one wrong class.
struct TargetDirection {
    int target = 0;
    std::vector<double> direction;
};

struct Directions {
    std::vector<TargetDirection> targets;  // ascending target index
    std::size_t zero_gradient_targets = 0;
};

/// r_t = -grad CE(x, e_t) / |.| for every t != y.
Directions fgm_directions_dnn(const nn::CnnModel& model, const IQFrame& frame, int y);
/// r_t = -grad (S_y - S_t) / |.| for every t != y.
Directions fgm_directions_nr(const nr::NrModel& nr, const IQFrame& frame, int y);

/// x + eps * direction, computed in double and stored as f32.
IQFrame perturb(const IQFrame& frame, std::span<const double> direction, double epsilon);

/// First target (ascending) whose step misclassifies wins; otherwise the step
/// with the lowest true-class probability is returned unsuccessful.
AttackOutcome fgm_dnn(const nn::CnnModel& model, const IQFrame& frame, int y, double epsilon);
AttackOutcome fgm_dnn(const nn::CnnModel& model, const IQFrame& frame, int y, double epsilon,
                      const Directions& directions);

/// Success requires a wrong argmax and a max score above theta. On failure the
/// step with the smallest S_y - max_{k != y} S_k is returned.
AttackOutcome fgm_nr(const nr::NrModel& nr, const IQFrame& frame, int y, double epsilon);
AttackOutcome fgm_nr(const nr::NrModel& nr, const IQFrame& frame, int y, double epsilon,
                     const Directions& directions);

/// Gaussian draw rescaled to norm exactly epsilon.
IQFrame jamming(const IQFrame& frame, double epsilon, std::uint64_t seed);

struct MinEpsilonResult {
    double epsilon = 0.0;
    bool attackable = false;
    std::optional<int> target;
    std::size_t evaluations = 0;
};

/// Doubling search up to `cap`, then bisection until hi <= lo * (1 + tol).
/// The returned epsilon succeeds and epsilon / (1 + tol) fails.
MinEpsilonResult min_epsilon_search(const std::function<bool(double)>& succeeds, double cap, double tolerance = 1e-3);

/// Per-target bisection along each FGM direction; the minimum over targets is reported.
/// The cap is 10 * |x|.
MinEpsilonResult min_epsilon_dnn(const nn::CnnModel& model, const IQFrame& frame, int y, double tolerance = 1e-3);
MinEpsilonResult min_epsilon_nr(const nr::NrModel& nr, const IQFrame& frame, int y, double tolerance = 1e-3);

enum class AttackFlag : std::uint8_t { Succeeded = 1, EvadedRejection = 2, Unattackable = 4, Jamming = 8 };

/// One emitted adversarial example with its provenance.
struct AttackRecord {
    std::uint32_t original_index = 0;
    double pnr_db = 0.0;
    double epsilon = 0.0;
    std::int16_t target = -1;
    std::uint8_t flags = 0;
};

/// Adversarial frames as a dataset (labels and SNRs of the originals) plus an
/// ATKM trailer block holding one record per example.
struct AttackSet {
    DatasetBundle frames;
    std::vector<AttackRecord> records;
};

std::vector<std::uint8_t> encode_attack_set(const AttackSet& set);
AttackSet decode_attack_set(std::span<const std::uint8_t> bytes);
void save_attack_set(const AttackSet& set, const std::filesystem::path& path);
AttackSet load_attack_set(const std::filesystem::path& path);

}  // namespace amc::attacks
