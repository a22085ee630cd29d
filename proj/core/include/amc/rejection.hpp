#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "amc/dataset.hpp"
#include "amc/neuralnet.hpp"
#include "amc/svm.hpp"

namespace amc::nr {

/// Either a class index or a rejection. Never encoded as an extra class.
class Verdict {
public:
    static Verdict reject() { return Verdict(-1); }
    static Verdict of(int label);

    bool rejected() const { return label_ < 0; }
    /// Throws PreconditionError for a rejection.
    int label() const;
    bool is(int label) const { return !rejected() && label_ == label; }

    friend bool operator==(const Verdict&, const Verdict&) = default;

private:
    explicit Verdict(int label) : label_(label) {}
    int label_;
};

std::string to_string(const Verdict& v);

struct NrDecision {
    Verdict verdict = Verdict::reject();
    Eigen::VectorXd scores;
    double max_score = 0.0;
    int argmax = 0;
};

/// Class verdict iff the top score is strictly above theta; ties go to the lowest index.
NrDecision decide(const Eigen::VectorXd& scores, double theta);

template <typename T>
struct BasicNrModel {
    nn::Cnn<T> cnn;
    svm::OvaSvm svm;
    double theta = 0.0;

    void validate() const;
};

using NrModel = BasicNrModel<float>;

template <typename T>
Eigen::VectorXd nr_scores(const BasicNrModel<T>& nr, std::span<const T> frame);
Eigen::VectorXd nr_scores(const NrModel& nr, const IQFrame& frame);

template <typename T>
NrDecision classify_with_reject(const BasicNrModel<T>& nr, std::span<const T> frame);
NrDecision classify_with_reject(const NrModel& nr, const IQFrame& frame);

/// Input gradient (row-major 2x128) of sum_k w_k S_k.
template <typename T>
std::vector<T> nr_weighted_score_gradient(const BasicNrModel<T>& nr, std::span<const T> frame,
                                          std::span<const double> class_weights);

template <typename T>
std::vector<T> nr_score_gradient(const BasicNrModel<T>& nr, std::span<const T> frame, std::size_t k);

/// Gradient of S_a - S_b in one backward pass.
template <typename T>
std::vector<T> nr_score_difference_gradient(const BasicNrModel<T>& nr, std::span<const T> frame, std::size_t a,
                                            std::size_t b);

struct Calibration {
    double theta = 0.0;
    double achieved_rate = 0.0;
    /// False when ties make the target unreachable within 1/n.
    bool achievable = true;
};

/// Lower-interpolation quantile: theta = sorted[floor(rate * (n - 1))]; samples
/// with score <= theta are rejected. Rate 0 places theta just below the minimum.
Calibration calibrate_scores(std::span<const double> max_scores, double target_rate);

/// Calibrates on benign frames (at least 50). The model's current theta is ignored.
Calibration calibrate_threshold(const NrModel& nr, std::span<const LabeledExample> benign, double target_rate = 0.10);

/// Max score of every frame, in input order.
std::vector<double> max_scores(const NrModel& nr, std::span<const LabeledExample> examples);

/// Bundle file: references to the CNN and SVM checkpoints (path and SHA-256)
/// plus theta. Relative paths resolve against the bundle's directory.
struct NrBundle {
    std::string cnn_path;
    std::string cnn_sha256;
    std::string svm_path;
    std::string svm_sha256;
    double theta = 0.0;
};

std::vector<std::uint8_t> encode_bundle(const NrBundle& bundle);
NrBundle decode_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const NrBundle& bundle, const std::filesystem::path& path);
NrBundle load_bundle_file(const std::filesystem::path& path);
/// Loads both checkpoints, verifying their hashes (FormatError Invalid on mismatch).
NrModel load_nr_model(const std::filesystem::path& bundle_path);

extern template struct BasicNrModel<float>;
extern template struct BasicNrModel<double>;

}  // namespace amc::nr
