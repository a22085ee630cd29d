#include "amc/rejection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amc/binary_io.hpp"
#include "amc/error.hpp"

namespace amc::nr {

namespace {

constexpr std::string_view kMagic = "AMCN";
constexpr std::uint16_t kVersion = 1;

template <typename T>
Eigen::VectorXd features_of(const nn::ForwardTrace<T>& trace) {
    return trace.features().template cast<double>();
}

}  // namespace

Verdict Verdict::of(int label) {
    if (label < 0) throw PreconditionError("class verdict needs a non-negative label");
    return Verdict(label);
}

int Verdict::label() const {
    if (rejected()) throw PreconditionError("verdict is a rejection");
    return label_;
}

std::string to_string(const Verdict& v) { return v.rejected() ? "REJECT" : std::to_string(v.label()); }

NrDecision decide(const Eigen::VectorXd& scores, double theta) {
    if (scores.size() == 0) throw ShapeError("empty score vector");
    NrDecision d;
    d.scores = scores;
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        if (scores(i) > scores(best)) best = i;
    }
    d.argmax = static_cast<int>(best);
    d.max_score = scores(best);
    d.verdict = d.max_score > theta ? Verdict::of(d.argmax) : Verdict::reject();
    return d;
}

template <typename T>
void BasicNrModel<T>::validate() const {
    if (svm.feature_dim() != cnn.architecture().feature_width()) {
        throw ShapeError("SVM feature dimension " + std::to_string(svm.feature_dim()) + " != CNN feature width " +
                         std::to_string(cnn.architecture().feature_width()));
    }
    if (svm.class_count() != cnn.architecture().classes) throw ShapeError("SVM and CNN class counts differ");
    if (std::isnan(theta)) throw PreconditionError("rejection threshold is NaN");
}

template <typename T>
Eigen::VectorXd nr_scores(const BasicNrModel<T>& nr, std::span<const T> frame) {
    return svm::decision_scores(nr.svm, features_of(nn::forward(nr.cnn, frame)));
}

Eigen::VectorXd nr_scores(const NrModel& nr, const IQFrame& frame) {
    return nr_scores<float>(nr, frame.values());
}

template <typename T>
NrDecision classify_with_reject(const BasicNrModel<T>& nr, std::span<const T> frame) {
    return decide(nr_scores(nr, frame), nr.theta);
}

NrDecision classify_with_reject(const NrModel& nr, const IQFrame& frame) {
    return classify_with_reject<float>(nr, frame.values());
}

template <typename T>
std::vector<T> nr_weighted_score_gradient(const BasicNrModel<T>& nr, std::span<const T> frame,
                                          std::span<const double> class_weights) {
    if (class_weights.size() != nr.svm.class_count()) throw ShapeError("class weight length");
    const auto trace = nn::forward(nr.cnn, frame);
    const Eigen::VectorXd f = features_of(trace);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(f.size());
    for (std::size_t k = 0; k < class_weights.size(); ++k) {
        if (class_weights[k] != 0.0) v += class_weights[k] * svm::score_gradient(nr.svm, k, f);
    }
    const nn::Vector<T> vt = v.cast<T>();
    return nn::feature_jacobian_vjp<T>(nr.cnn, trace, std::span<const T>(vt.data(), std::size_t(vt.size())));
}

template <typename T>
std::vector<T> nr_score_gradient(const BasicNrModel<T>& nr, std::span<const T> frame, std::size_t k) {
    if (k >= nr.svm.class_count()) throw ShapeError("class index out of range");
    std::vector<double> w(nr.svm.class_count(), 0.0);
    w[k] = 1.0;
    return nr_weighted_score_gradient(nr, frame, w);
}

template <typename T>
std::vector<T> nr_score_difference_gradient(const BasicNrModel<T>& nr, std::span<const T> frame, std::size_t a,
                                            std::size_t b) {
    if (a >= nr.svm.class_count() || b >= nr.svm.class_count()) throw ShapeError("class index out of range");
    std::vector<double> w(nr.svm.class_count(), 0.0);
    w[a] += 1.0;
    w[b] -= 1.0;
    return nr_weighted_score_gradient(nr, frame, w);
}

Calibration calibrate_scores(std::span<const double> max_scores, double target_rate) {
    if (max_scores.empty()) throw PreconditionError("calibration set is empty");
    if (!(target_rate >= 0.0 && target_rate < 1.0)) throw ConfigError("rejection rate must lie in [0, 1)");
    std::vector<double> sorted(max_scores.begin(), max_scores.end());
    for (double s : sorted) {
        if (!std::isfinite(s)) throw PreconditionError("non-finite calibration score");
    }
    std::sort(sorted.begin(), sorted.end());
    const double n = double(sorted.size());

    Calibration c;
    if (target_rate == 0.0) {
        c.theta = std::nextafter(sorted.front(), -std::numeric_limits<double>::infinity());
    } else {
        c.theta = sorted[static_cast<std::size_t>(std::floor(target_rate * (n - 1.0)))];
    }
    const auto rejected = std::upper_bound(sorted.begin(), sorted.end(), c.theta) - sorted.begin();
    c.achieved_rate = double(rejected) / n;
    c.achievable = std::abs(c.achieved_rate - target_rate) <= 1.0 / n + 1e-12;
    return c;
}

std::vector<double> max_scores(const NrModel& nr, std::span<const LabeledExample> examples) {
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(nr_scores(nr, ex.frame).maxCoeff());
    return out;
}

Calibration calibrate_threshold(const NrModel& nr, std::span<const LabeledExample> benign, double target_rate) {
    if (benign.empty()) throw PreconditionError("calibration set is empty");
    if (benign.size() < 50) {
        throw PreconditionError("calibration needs at least 50 benign frames, got " + std::to_string(benign.size()));
    }
    return calibrate_scores(max_scores(nr, benign), target_rate);
}

// Layout: magic, u16 version, u32-prefixed CNN path, u8-prefixed CNN hash,
// u32-prefixed SVM path, u8-prefixed SVM hash, f64 theta.
std::vector<std::uint8_t> encode_bundle(const NrBundle& bundle) {
    if (!std::isfinite(bundle.theta)) throw PreconditionError("bundle threshold must be finite");
    io::ByteWriter w;
    w.magic(kMagic);
    w.put<std::uint16_t>(kVersion);
    w.long_string(bundle.cnn_path);
    w.short_string(bundle.cnn_sha256);
    w.long_string(bundle.svm_path);
    w.short_string(bundle.svm_sha256);
    w.put<double>(bundle.theta);
    return w.bytes();
}

NrBundle decode_bundle(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic(kMagic, "NR bundle");
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "NR bundle version " + std::to_string(version) + " unsupported (expected 1)");
    }
    NrBundle b;
    b.cnn_path = r.long_string();
    b.cnn_sha256 = r.short_string();
    b.svm_path = r.long_string();
    b.svm_sha256 = r.short_string();
    b.theta = r.get<double>();
    if (!std::isfinite(b.theta)) throw FormatError(FormatErrorKind::Invalid, "NR bundle threshold is not finite");
    if (r.remaining() != 0) throw FormatError(FormatErrorKind::Invalid, "trailing bytes after NR bundle");
    return b;
}

void save_bundle(const NrBundle& bundle, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_bundle(bundle));
}

NrBundle load_bundle_file(const std::filesystem::path& path) { return decode_bundle(io::read_file(path)); }

NrModel load_nr_model(const std::filesystem::path& bundle_path) {
    const auto b = load_bundle_file(bundle_path);
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : bundle_path.parent_path() / path;
    };
    const auto cnn_path = resolve(b.cnn_path);
    const auto svm_path = resolve(b.svm_path);
    if (io::sha256_file(cnn_path) != b.cnn_sha256) {
        throw FormatError(FormatErrorKind::Invalid, "CNN checkpoint " + cnn_path.string() + " does not match its hash");
    }
    if (io::sha256_file(svm_path) != b.svm_sha256) {
        throw FormatError(FormatErrorKind::Invalid, "SVM checkpoint " + svm_path.string() + " does not match its hash");
    }
    NrModel nr{nn::load_checkpoint(cnn_path), svm::load_svm(svm_path), b.theta};
    nr.validate();
    return nr;
}

template struct BasicNrModel<float>;
template struct BasicNrModel<double>;

#define AMC_INSTANTIATE_NR(T)                                                                                     \
    template Eigen::VectorXd nr_scores<T>(const BasicNrModel<T>&, std::span<const T>);                            \
    template NrDecision classify_with_reject<T>(const BasicNrModel<T>&, std::span<const T>);                      \
    template std::vector<T> nr_weighted_score_gradient<T>(const BasicNrModel<T>&, std::span<const T>,             \
                                                          std::span<const double>);                               \
    template std::vector<T> nr_score_gradient<T>(const BasicNrModel<T>&, std::span<const T>, std::size_t);        \
    template std::vector<T> nr_score_difference_gradient<T>(const BasicNrModel<T>&, std::span<const T>, std::size_t, \
                                                            std::size_t);
AMC_INSTANTIATE_NR(float)
AMC_INSTANTIATE_NR(double)
#undef AMC_INSTANTIATE_NR

}  // namespace amc::nr
