#include "amc/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "amc/binary_io.hpp"
#include "amc/dataset.hpp"
#include "amc/error.hpp"

namespace amc::svm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr std::string_view kMagic = "AMCS";
constexpr std::uint16_t kVersion = 1;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_labels(std::span<const int> y, Index n) {
    if (static_cast<Index>(y.size()) != n) throw ShapeError("label count does not match kernel size");
    bool pos = false, neg = false;
    for (int v : y) {
        if (v == 1) {
            pos = true;
        } else if (v == -1) {
            neg = true;
        } else {
            throw PreconditionError("binary labels must be +1 or -1");
        }
    }
    if (!pos || !neg) throw PreconditionError("binary problem needs at least one example of each sign");
}

bool in_up(int y, double a, double c) { return y > 0 ? a < c : a > 0.0; }
bool in_low(int y, double a, double c) { return y > 0 ? a > 0.0 : a < c; }

// Gradient of 1/2 a^T Q a - e^T a.
VectorXd dual_gradient(const MatrixXd& k, std::span<const int> y, const VectorXd& alpha) {
    const Index n = k.rows();
    VectorXd ya(n);
    for (Index i = 0; i < n; ++i) ya(i) = y[i] * alpha(i);
    VectorXd g = k * ya;
    for (Index i = 0; i < n; ++i) g(i) = y[i] * g(i) - 1.0;
    return g;
}

double violation_from_gradient(std::span<const int> y, const VectorXd& alpha, const VectorXd& g, double c) {
    double m = -kInf, big_m = kInf;
    for (Index t = 0; t < alpha.size(); ++t) {
        const double v = -y[t] * g(t);
        if (in_up(y[t], alpha(t), c)) m = std::max(m, v);
        if (in_low(y[t], alpha(t), c)) big_m = std::min(big_m, v);
    }
    if (m == -kInf || big_m == kInf) return 0.0;
    return std::max(0.0, m - big_m);
}

double rho_from_gradient(std::span<const int> y, const VectorXd& alpha, const VectorXd& g, double c) {
    double ub = kInf, lb = -kInf, sum_free = 0.0;
    std::size_t n_free = 0;
    for (Index t = 0; t < alpha.size(); ++t) {
        const double yg = y[t] * g(t);
        if (alpha(t) >= c) {
            if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (alpha(t) <= 0.0) {
            if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            sum_free += yg;
            ++n_free;
        }
    }
    return n_free > 0 ? sum_free / double(n_free) : (ub + lb) / 2.0;
}

double duality_gap(std::span<const int> y, const VectorXd& alpha, const VectorXd& g, double bias, double c) {
    // primal = 1/2 a^T Q a + C * sum(hinge), dual = sum(a) - 1/2 a^T Q a
    double aqa = 0.0, hinge = 0.0;
    for (Index t = 0; t < alpha.size(); ++t) {
        aqa += alpha(t) * (g(t) + 1.0);
        const double f = y[t] * (g(t) + 1.0) + bias;
        hinge += std::max(0.0, 1.0 - y[t] * f);
    }
    return aqa + c * hinge - alpha.sum();
}

void require_finite(const MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw PreconditionError(std::string(what) + " contain non-finite values");
}

}  // namespace

double BinarySvm::decision(const VectorXd& z) const {
    if (static_cast<std::size_t>(z.size()) != dim()) throw ShapeError("feature dimension mismatch");
    double s = 0.0;
    for (Index i = 0; i < support_vectors.rows(); ++i) {
        s += dual_coeffs(i) * std::exp(-gamma * (z.transpose() - support_vectors.row(i)).squaredNorm());
    }
    return s + bias;
}

VectorXd BinarySvm::gradient(const VectorXd& z) const {
    if (static_cast<std::size_t>(z.size()) != dim()) throw ShapeError("feature dimension mismatch");
    VectorXd g = VectorXd::Zero(z.size());
    for (Index i = 0; i < support_vectors.rows(); ++i) {
        const VectorXd diff = z - support_vectors.row(i).transpose();
        g += (-2.0 * gamma * dual_coeffs(i) * std::exp(-gamma * diff.squaredNorm())) * diff;
    }
    return g;
}

double dual_objective(const MatrixXd& kernel, std::span<const int> y, const VectorXd& alpha) {
    const VectorXd g = dual_gradient(kernel, y, alpha);
    // f = 1/2 a^T (G + e) - e^T a
    return -(0.5 * alpha.dot(g) - 0.5 * alpha.sum());
}

double kkt_violation(const MatrixXd& kernel, std::span<const int> y, const VectorXd& alpha, double c) {
    return violation_from_gradient(y, alpha, dual_gradient(kernel, y, alpha), c);
}

DualSolution solve_dual(const MatrixXd& kernel, std::span<const int> y, double c, const SolverOptions& options) {
    const Index n = kernel.rows();
    if (kernel.cols() != n) throw ShapeError("kernel must be square");
    check_labels(y, n);
    if (!(c > 0.0)) throw PreconditionError("C must be positive");

    VectorXd alpha = VectorXd::Zero(n);
    VectorXd g = VectorXd::Constant(n, -1.0);
    std::size_t it = 0;
    double gap = kInf;
    for (;;) {
        Index i = -1, j = -1;
        double m = -kInf, big_m = kInf;
        for (Index t = 0; t < n; ++t) {
            const double v = -y[t] * g(t);
            if (in_up(y[t], alpha(t), c) && v > m) { m = v; i = t; }
            if (in_low(y[t], alpha(t), c) && v < big_m) { big_m = v; j = t; }
        }
        gap = (i < 0 || j < 0) ? 0.0 : m - big_m;
        if (gap < options.tolerance) break;
        if (it == options.max_iterations) {
            const double bias = -rho_from_gradient(y, alpha, g, c);
            const double dg = duality_gap(y, alpha, g, bias, c);
            throw SolverError("SMO did not converge in " + std::to_string(it) + " iterations (duality gap " +
                                  std::to_string(dg) + ")",
                              dg);
        }
        ++it;

        double eta = kernel(i, i) + kernel(j, j) - 2.0 * kernel(i, j);
        if (eta <= 0.0) eta = 1e-12;
        const double bound_i = y[i] > 0 ? c - alpha(i) : alpha(i);
        const double bound_j = y[j] > 0 ? alpha(j) : c - alpha(j);
        const double step = std::min({gap / eta, bound_i, bound_j});
        alpha(i) += y[i] * step;
        alpha(j) -= y[j] * step;
        if (step == bound_i) alpha(i) = y[i] > 0 ? c : 0.0;
        if (step == bound_j) alpha(j) = y[j] > 0 ? 0.0 : c;
        alpha(i) = std::clamp(alpha(i), 0.0, c);
        alpha(j) = std::clamp(alpha(j), 0.0, c);

        const auto ki = kernel.col(i);
        const auto kj = kernel.col(j);
        for (Index t = 0; t < n; ++t) g(t) += step * y[t] * (ki(t) - kj(t));
    }

    DualSolution sol;
    sol.iterations = it;
    sol.bias = -rho_from_gradient(y, alpha, g, c);
    sol.kkt_violation = violation_from_gradient(y, alpha, g, c);
    sol.dual_objective = -(0.5 * alpha.dot(g) - 0.5 * alpha.sum());
    sol.alpha = std::move(alpha);
    return sol;
}

MatrixXd squared_distances(const MatrixXd& a, const MatrixXd& b) {
    if (a.cols() != b.cols()) throw ShapeError("feature dimension mismatch");
    const VectorXd na = a.rowwise().squaredNorm();
    const VectorXd nb = b.rowwise().squaredNorm();
    MatrixXd d = -2.0 * (a * b.transpose());
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

MatrixXd rbf_kernel(const MatrixXd& a, const MatrixXd& b, double gamma) {
    return (-gamma * squared_distances(a, b)).array().exp().matrix();
}

BinarySvm make_machine(const MatrixXd& features, std::span<const int> y, const DualSolution& sol, double c,
                       double gamma, double prune_threshold) {
    std::vector<Index> keep;
    for (Index i = 0; i < sol.alpha.size(); ++i) {
        if (sol.alpha(i) > prune_threshold) keep.push_back(i);
    }
    BinarySvm m;
    m.support_vectors = features(keep, Eigen::all);
    m.dual_coeffs.resize(static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        m.dual_coeffs(static_cast<Index>(k)) = sol.alpha(keep[k]) * y[static_cast<std::size_t>(keep[k])];
    }
    m.bias = sol.bias;
    m.gamma = gamma;
    m.c = c;
    return m;
}

BinarySvm solve_binary(const MatrixXd& features, std::span<const int> y, double c, double gamma,
                       const SolverOptions& options, DualSolution* solution) {
    require_finite(features, "features");
    if (!(gamma > 0.0)) throw PreconditionError("gamma must be positive");
    const MatrixXd k = rbf_kernel(features, features, gamma);
    DualSolution sol = solve_dual(k, y, c, options);
    BinarySvm m = make_machine(features, y, sol, c, gamma, options.prune_threshold);
    if (solution) *solution = std::move(sol);
    return m;
}

Standardizer Standardizer::fit(const MatrixXd& features) {
    if (features.rows() == 0) throw PreconditionError("cannot standardize an empty feature set");
    Standardizer s;
    s.mean = features.colwise().mean().transpose();
    const MatrixXd centered = features.rowwise() - s.mean.transpose();
    s.scale = (centered.colwise().squaredNorm() / double(features.rows())).cwiseSqrt().transpose();
    for (Index i = 0; i < s.scale.size(); ++i) {
        if (s.scale(i) < 1e-12) s.scale(i) = 1.0;
    }
    return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
    return {VectorXd::Zero(static_cast<Index>(dim)), VectorXd::Ones(static_cast<Index>(dim))};
}

VectorXd Standardizer::apply(const VectorXd& x) const {
    if (x.size() != mean.size()) throw ShapeError("feature dimension mismatch");
    return (x - mean).cwiseQuotient(scale);
}

MatrixXd Standardizer::apply_rows(const MatrixXd& x) const {
    if (x.cols() != mean.size()) throw ShapeError("feature dimension mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

VectorXd decision_scores(const OvaSvm& svm, const VectorXd& features) {
    const VectorXd z = svm.standardizer.apply(features);
    VectorXd s(static_cast<Index>(svm.class_count()));
    for (std::size_t k = 0; k < svm.class_count(); ++k) s(static_cast<Index>(k)) = svm.machines[k].decision(z);
    return s;
}

VectorXd score_gradient(const OvaSvm& svm, std::size_t k, const VectorXd& features) {
    if (k >= svm.class_count()) throw ShapeError("class index out of range");
    const VectorXd z = svm.standardizer.apply(features);
    return svm.machines[k].gradient(z).cwiseQuotient(svm.standardizer.scale);
}

int predict(const OvaSvm& svm, const VectorXd& features) {
    const VectorXd s = decision_scores(svm, features);
    Index best = 0;
    for (Index i = 1; i < s.size(); ++i) {
        if (s(i) > s(best)) best = i;
    }
    return static_cast<int>(best);
}

void CvGrid::validate() const {
    if (c_values.empty() || gamma_values.empty()) throw ConfigError("SVM grid is empty");
    for (double c : c_values) {
        if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("SVM grid C values must be positive");
    }
    for (double g : gamma_values) {
        if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("SVM grid gamma values must be positive (0 = 1/d)");
    }
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
}

std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t n_classes, std::size_t folds,
                                          std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
            throw PreconditionError("label out of range at row " + std::to_string(i));
        }
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    std::vector<std::size_t> fold(labels.size());
    for (std::size_t k = 0; k < n_classes; ++k) {
        auto& idx = by_class[k];
        if (idx.size() < folds) {
            throw PreconditionError("class " + std::to_string(k) + " has " + std::to_string(idx.size()) +
                                    " examples, fewer than the fold count " + std::to_string(folds));
        }
        std::mt19937_64 rng(mix_seed(seed, k));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t p = 0; p < idx.size(); ++p) fold[idx[p]] = p % folds;
    }
    return fold;
}

OvaTrainResult train_ova(const MatrixXd& features, std::span<const int> labels, std::size_t n_classes,
                         const CvGrid& grid, std::uint64_t seed, const TrainOptions& options) {
    grid.validate();
    if (static_cast<std::size_t>(features.rows()) != labels.size()) throw ShapeError("feature/label count mismatch");
    if (n_classes < 2) throw PreconditionError("one-vs-all needs at least two classes");
    require_finite(features, "features");
    const auto n = static_cast<std::size_t>(features.rows());
    const auto dim = static_cast<std::size_t>(features.cols());

    const auto fold = stratified_folds(labels, n_classes, grid.folds, seed);

    OvaTrainResult result;
    result.model.standardizer = options.standardize ? Standardizer::fit(features) : Standardizer::identity(dim);
    const MatrixXd z = result.model.standardizer.apply_rows(features);
    MatrixXd dist = squared_distances(z, z);
    dist.diagonal().setZero();

    std::vector<std::vector<Index>> train_idx(grid.folds), val_idx(grid.folds);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < grid.folds; ++f) (fold[i] == f ? val_idx : train_idx)[f].push_back(Index(i));
    }

    std::vector<double> cs = grid.c_values;
    std::vector<double> gammas;
    for (double g : grid.gamma_values) gammas.push_back(CvGrid::resolve_gamma(g, dim));
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    std::sort(gammas.begin(), gammas.end());
    gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());

    // cell accuracy, indexed [c][gamma]
    std::vector<std::vector<CvCell>> cells(cs.size(), std::vector<CvCell>(gammas.size()));
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        const MatrixXd kernel = (-gammas[gi] * dist).array().exp().matrix();
        for (std::size_t ci = 0; ci < cs.size(); ++ci) {
            cells[ci][gi].c = cs[ci];
            cells[ci][gi].gamma = gammas[gi];
        }
        for (std::size_t f = 0; f < grid.folds; ++f) {
            const auto& tr = train_idx[f];
            const auto& va = val_idx[f];
            const MatrixXd k_tr = kernel(tr, tr);
            const MatrixXd k_va = kernel(va, tr);
            for (std::size_t ci = 0; ci < cs.size(); ++ci) {
                auto& cell = cells[ci][gi];
                if (!cell.converged) continue;
                MatrixXd scores(static_cast<Index>(va.size()), static_cast<Index>(n_classes));
                try {
                    for (std::size_t k = 0; k < n_classes; ++k) {
                        std::vector<int> y(tr.size());
                        for (std::size_t p = 0; p < tr.size(); ++p) {
                            y[p] = labels[static_cast<std::size_t>(tr[p])] == int(k) ? 1 : -1;
                        }
                        const DualSolution sol = solve_dual(k_tr, y, cs[ci], options.solver);
                        VectorXd coef(sol.alpha.size());
                        for (Index p = 0; p < coef.size(); ++p) coef(p) = sol.alpha(p) * y[std::size_t(p)];
                        scores.col(static_cast<Index>(k)) = (k_va * coef).array() + sol.bias;
                    }
                } catch (const SolverError&) {
                    cell.converged = false;
                    cell.accuracy = 0.0;
                    continue;
                }
                std::size_t correct = 0;
                for (std::size_t p = 0; p < va.size(); ++p) {
                    Index best;
                    scores.row(static_cast<Index>(p)).maxCoeff(&best);
                    if (best == labels[static_cast<std::size_t>(va[p])]) ++correct;
                }
                cell.accuracy += double(correct) / double(va.size()) / double(grid.folds);
            }
        }
    }

    const CvCell* best = nullptr;
    for (const auto& row : cells) {
        for (const auto& cell : row) {
            result.cells.push_back(cell);
            if (cell.converged && (!best || cell.accuracy > best->accuracy)) best = &cell;
        }
    }
    if (!best) throw SolverError("no grid cell converged", kInf);
    result.best_c = best->c;
    result.best_gamma = best->gamma;

    const MatrixXd kernel = (-result.best_gamma * dist).array().exp().matrix();
    for (std::size_t k = 0; k < n_classes; ++k) {
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == int(k) ? 1 : -1;
        DualSolution sol = solve_dual(kernel, y, result.best_c, options.solver);
        result.model.machines.push_back(
            make_machine(z, y, sol, result.best_c, result.best_gamma, options.solver.prune_threshold));
        result.final_solutions.push_back(std::move(sol));
    }
    return result;
}

// Layout: magic, u16 version, u32 dim, u8 class count, f64[dim] mean,
// f64[dim] scale, then per class: u32 n_sv, f64 gamma, f64 bias, f64 C,
// f64[n_sv] coefficients, f64[n_sv * dim] support vectors (row-major).
std::vector<std::uint8_t> encode_svm(const OvaSvm& svm) {
    io::ByteWriter w;
    w.magic(kMagic);
    w.put<std::uint16_t>(kVersion);
    const auto dim = svm.feature_dim();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(svm.class_count()));
    w.put_array<double>({svm.standardizer.mean.data(), dim});
    w.put_array<double>({svm.standardizer.scale.data(), dim});
    for (const auto& m : svm.machines) {
        if (m.dim() != dim && m.support_vectors.rows() > 0) throw ShapeError("machine dimension mismatch");
        const auto n_sv = static_cast<std::size_t>(m.support_vectors.rows());
        w.put<std::uint32_t>(static_cast<std::uint32_t>(n_sv));
        w.put<double>(m.gamma);
        w.put<double>(m.bias);
        w.put<double>(m.c);
        w.put_array<double>({m.dual_coeffs.data(), n_sv});
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = m.support_vectors;
        w.put_array<double>({rows.data(), n_sv * dim});
    }
    return w.bytes();
}

OvaSvm decode_svm(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic(kMagic, "SVM checkpoint");
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch, "SVM checkpoint version " + std::to_string(version) +
                                                                " unsupported (expected 1)");
    }
    const auto dim = r.get<std::uint32_t>();
    const auto n_classes = r.get<std::uint8_t>();
    if (dim == 0 || n_classes < 2) throw FormatError(FormatErrorKind::Invalid, "SVM checkpoint header is invalid");
    OvaSvm svm;
    svm.standardizer.mean.resize(dim);
    svm.standardizer.scale.resize(dim);
    r.get_array<double>({svm.standardizer.mean.data(), dim});
    r.get_array<double>({svm.standardizer.scale.data(), dim});
    if (!svm.standardizer.mean.allFinite() || !svm.standardizer.scale.allFinite() ||
        (svm.standardizer.scale.array() <= 0.0).any()) {
        throw FormatError(FormatErrorKind::Invalid, "SVM standardization vectors are invalid");
    }
    for (std::uint8_t k = 0; k < n_classes; ++k) {
        BinarySvm m;
        const auto n_sv = r.get<std::uint32_t>();
        m.gamma = r.get<double>();
        m.bias = r.get<double>();
        m.c = r.get<double>();
        if (std::size_t(n_sv) * (dim + 1) * sizeof(double) > r.remaining()) {
            throw FormatError(FormatErrorKind::Truncated, "SVM machine " + std::to_string(k) + " is truncated");
        }
        m.dual_coeffs.resize(n_sv);
        r.get_array<double>({m.dual_coeffs.data(), n_sv});
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n_sv, dim);
        r.get_array<double>({rows.data(), std::size_t(n_sv) * dim});
        m.support_vectors = rows;
        if (!(m.gamma > 0.0) || !std::isfinite(m.gamma) || !std::isfinite(m.bias) || !(m.c > 0.0) ||
            !m.dual_coeffs.allFinite() || !m.support_vectors.allFinite()) {
            throw FormatError(FormatErrorKind::Invalid, "SVM machine " + std::to_string(k) + " is invalid");
        }
        if (n_sv == 0) m.support_vectors.resize(0, dim);
        svm.machines.push_back(std::move(m));
    }
    if (r.remaining() != 0) throw FormatError(FormatErrorKind::Invalid, "trailing bytes after SVM checkpoint");
    return svm;
}

void save_svm(const OvaSvm& svm, const std::filesystem::path& path) { io::write_file_atomic(path, encode_svm(svm)); }

OvaSvm load_svm(const std::filesystem::path& path) { return decode_svm(io::read_file(path)); }

}  // namespace amc::svm
