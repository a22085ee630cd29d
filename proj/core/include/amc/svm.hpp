#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace amc::svm {

/// One RBF machine: S(z) = sum_i coef_i * exp(-gamma * |z - sv_i|^2) + bias,
/// where coef_i = alpha_i * y_i. Support vectors are rows, in the
/// (standardized) space the machine was trained in.
struct BinarySvm {
    Eigen::MatrixXd support_vectors;
    Eigen::VectorXd dual_coeffs;
    double bias = 0.0;
    double gamma = 1.0;
    double c = 1.0;

    std::size_t dim() const { return static_cast<std::size_t>(support_vectors.cols()); }
    double decision(const Eigen::VectorXd& z) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& z) const;
};

struct SolverOptions {
    double tolerance = 1e-3;
    std::size_t max_iterations = 1'000'000;
    double prune_threshold = 1e-8;
};

/// Raw dual solution before pruning. alpha is unsigned (0 <= alpha <= C).
struct DualSolution {
    Eigen::VectorXd alpha;
    double bias = 0.0;
    std::size_t iterations = 0;
    double kkt_violation = 0.0;  // max_{I_up}(-y G) - min_{I_low}(-y G)
    double dual_objective = 0.0;
};

/// Dual objective sum(alpha) - 1/2 alpha^T Q alpha with Q_ij = y_i y_j K_ij.
double dual_objective(const Eigen::MatrixXd& kernel, std::span<const int> y, const Eigen::VectorXd& alpha);

/// Maximal-violating-pair gap of a feasible alpha; zero at the optimum.
double kkt_violation(const Eigen::MatrixXd& kernel, std::span<const int> y, const Eigen::VectorXd& alpha, double c);

/// SMO on a precomputed kernel. Labels are +1/-1 with at least one of each.
/// Throws SolverError (carrying the duality gap) when the iteration cap is hit.
DualSolution solve_dual(const Eigen::MatrixXd& kernel, std::span<const int> y, double c,
                        const SolverOptions& options = {});

/// exp(-gamma * |a_i - b_j|^2) over rows of a and b.
Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma);
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Keeps the examples with alpha above the prune threshold as support vectors.
BinarySvm make_machine(const Eigen::MatrixXd& features, std::span<const int> y, const DualSolution& sol, double c,
                       double gamma, double prune_threshold = 1e-8);

BinarySvm solve_binary(const Eigen::MatrixXd& features, std::span<const int> y, double c, double gamma,
                       const SolverOptions& options = {}, DualSolution* solution = nullptr);

/// Per-feature z-scoring. Scale entries below 1e-12 are stored as 1.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& features);
    static Standardizer identity(std::size_t dim);
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;
};

struct OvaSvm {
    Standardizer standardizer;
    std::vector<BinarySvm> machines;

    std::size_t feature_dim() const { return static_cast<std::size_t>(standardizer.mean.size()); }
    std::size_t class_count() const { return machines.size(); }
};

/// Scores of every machine for a raw (unstandardized) feature vector.
Eigen::VectorXd decision_scores(const OvaSvm& svm, const Eigen::VectorXd& features);
/// dS_k/d(raw features), including the standardization chain.
Eigen::VectorXd score_gradient(const OvaSvm& svm, std::size_t k, const Eigen::VectorXd& features);
/// Rejection-free argmax, lowest index on ties.
int predict(const OvaSvm& svm, const Eigen::VectorXd& features);

/// A gamma of 0 in the grid stands for 1/d.
struct CvGrid {
    std::vector<double> c_values{0.1, 1.0, 10.0, 100.0};
    std::vector<double> gamma_values{0.0, 0.01, 0.1, 1.0};
    std::size_t folds = 3;

    void validate() const;
    static double resolve_gamma(double gamma, std::size_t dim) { return gamma == 0.0 ? 1.0 / double(dim) : gamma; }
};

struct CvCell {
    double c = 0.0;
    double gamma = 0.0;  // resolved
    double accuracy = 0.0;
    bool converged = true;
};

struct TrainOptions {
    bool standardize = true;
    SolverOptions solver;
};

struct OvaTrainResult {
    OvaSvm model;
    double best_c = 0.0;
    double best_gamma = 0.0;
    std::vector<CvCell> cells;
    std::vector<DualSolution> final_solutions;  // one per class, on the full set
};

/// Stratified fold index per example; every class must have at least `folds` examples.
std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t n_classes, std::size_t folds,
                                          std::uint64_t seed);

/// Grid search by k-fold CV accuracy, then retrain on all rows. Ties go to the
/// smallest C, then the smallest resolved gamma.
OvaTrainResult train_ova(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t n_classes,
                         const CvGrid& grid, std::uint64_t seed, const TrainOptions& options = {});

std::vector<std::uint8_t> encode_svm(const OvaSvm& svm);
OvaSvm decode_svm(std::span<const std::uint8_t> bytes);
void save_svm(const OvaSvm& svm, const std::filesystem::path& path);
OvaSvm load_svm(const std::filesystem::path& path);

}  // namespace amc::svm
