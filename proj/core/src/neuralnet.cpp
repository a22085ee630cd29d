#include "amc/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "amc/error.hpp"

namespace amc::nn {

namespace {

using Eigen::Index;

constexpr Index kCols = static_cast<Index>(kFrameCols);

struct Dims {
    Index c1, c2, kw, pad, stride, hidden, classes;

    explicit Dims(const Architecture& a)
        : c1(static_cast<Index>(a.conv1_filters)),
          c2(static_cast<Index>(a.conv2_filters)),
          kw(static_cast<Index>(a.kernel_width)),
          pad((static_cast<Index>(a.kernel_width) - 1) / 2),
          stride(kCols + static_cast<Index>(a.kernel_width) - 1),
          hidden(static_cast<Index>(a.hidden)),
          classes(static_cast<Index>(a.classes)) {}

    Index span(Index batch) const { return stride * batch - (kw - 1); }
};

template <typename Derived>
auto relu_mask(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    return (a.array() > T(0)).template cast<T>();
}

// Zero the columns of a time-axis buffer that straddle two examples.
template <typename T>
void zero_gaps(Matrix<T>& m, const Dims& d, Index batch, Index col_offset) {
    const Index gap = d.stride - kCols;
    for (Index b = 0; b < batch; ++b) {
        const Index start = b * d.stride + kCols - col_offset;
        for (Index j = start; j < start + gap; ++j) {
            if (j >= 0 && j < m.cols()) m.col(j).setZero();
        }
    }
}

template <typename T>
void check_finite(const Matrix<T>& m, const char* what) {
    if (!m.allFinite()) throw DivergenceError(std::string("non-finite values in ") + what);
}

}  // namespace

void Architecture::validate() const {
    if (conv1_filters == 0 || conv2_filters == 0 || hidden == 0 || classes == 0) {
        throw ConfigError("architecture widths must be positive");
    }
    if (kernel_width == 0 || kernel_width % 2 == 0 || kernel_width > kFrameCols) {
        throw ConfigError("kernel width must be odd and at most 128");
    }
}

const char* block_name(Block b) {
    static constexpr const char* kNames[] = {"conv1.weight",  "conv1.bias",  "conv2.weight",  "conv2.bias",
                                             "dense1.weight", "dense1.bias", "dense2.weight", "dense2.bias"};
    return kNames[static_cast<std::size_t>(b)];
}

template <typename T>
Cnn<T>::Cnn(const Architecture& arch) : arch_(arch) {
    arch_.validate();
    const Dims d(arch_);
    params_.resize(kBlockCount);
    block(Block::Conv1Weight) = Matrix<T>::Zero(d.c1, d.kw);
    block(Block::Conv1Bias) = Matrix<T>::Zero(d.c1, 1);
    block(Block::Conv2Weight) = Matrix<T>::Zero(d.c2, d.kw * 2 * d.c1);
    block(Block::Conv2Bias) = Matrix<T>::Zero(d.c2, 1);
    block(Block::Dense1Weight) = Matrix<T>::Zero(d.hidden, d.c2 * kCols);
    block(Block::Dense1Bias) = Matrix<T>::Zero(d.hidden, 1);
    block(Block::Dense2Weight) = Matrix<T>::Zero(d.classes, d.hidden);
    block(Block::Dense2Bias) = Matrix<T>::Zero(d.classes, 1);
}

template <typename T>
Cnn<T> Cnn<T>::initialized(const Architecture& arch, std::uint64_t seed) {
    Cnn<T> model(arch);
    std::mt19937_64 rng(seed);
    for (Block b : {Block::Conv1Weight, Block::Conv2Weight, Block::Dense1Weight, Block::Dense2Weight}) {
        auto& w = model.block(b);
        const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        // Fill row by row so the draw order is independent of storage order.
        for (Index r = 0; r < w.rows(); ++r) {
            for (Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<T>(dist(rng));
        }
    }
    return model;
}

template <typename T>
std::size_t Cnn<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
}

template <typename T>
bool Cnn<T>::all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](const auto& p) { return p.allFinite(); });
}

template <typename T>
BatchTrace<T> forward_batch(const Cnn<T>& model, const Matrix<T>& inputs) {
    if (inputs.rows() != static_cast<Index>(kFrameSize)) {
        throw ShapeError("forward expects 256-row inputs, got " + std::to_string(inputs.rows()));
    }
    const Dims d(model.architecture());
    const Index batch = inputs.cols();
    const Index span = d.span(batch);

    BatchTrace<T> t;
    t.batch = static_cast<std::size_t>(batch);
    t.input_padded = Matrix<T>::Zero(2, d.stride * batch);
    for (Index b = 0; b < batch; ++b) {
        for (Index h = 0; h < 2; ++h) {
            t.input_padded.row(h).segment(b * d.stride + d.pad, kCols) =
                inputs.col(b).segment(h * kCols, kCols).transpose();
        }
    }

    // conv1: each I/Q row is filtered independently by the same bank.
    const auto& w1 = model.block(Block::Conv1Weight);
    const auto& b1 = model.block(Block::Conv1Bias);
    t.conv1 = Matrix<T>::Zero(2 * d.c1, d.stride * batch);
    Matrix<T> patches(d.kw, span);
    for (Index h = 0; h < 2; ++h) {
        for (Index k = 0; k < d.kw; ++k) patches.row(k) = t.input_padded.row(h).segment(k, span);
        Matrix<T> z = w1 * patches;
        z.colwise() += b1.col(0);
        z = z.cwiseMax(T(0));
        zero_gaps(z, d, batch, 0);
        t.conv1.block(h * d.c1, d.pad, d.c1, span) = z;
    }

    // conv2: 2 x kw kernel spanning both rows of every conv1 channel.
    const auto& w2 = model.block(Block::Conv2Weight);
    t.conv2.resize(d.c2, span);
    t.conv2.colwise() = model.block(Block::Conv2Bias).col(0);
    for (Index k = 0; k < d.kw; ++k) {
        t.conv2.noalias() += w2.middleCols(k * 2 * d.c1, 2 * d.c1) * t.conv1.middleCols(k, span);
    }
    t.conv2 = t.conv2.cwiseMax(T(0));

    t.flat.resize(d.c2 * kCols, batch);
    for (Index b = 0; b < batch; ++b) {
        for (Index c = 0; c < d.c2; ++c) {
            t.flat.col(b).segment(c * kCols, kCols) = t.conv2.row(c).segment(b * d.stride, kCols).transpose();
        }
    }

    t.features.noalias() = model.block(Block::Dense1Weight) * t.flat;
    t.features.colwise() += model.block(Block::Dense1Bias).col(0);
    t.features = t.features.cwiseMax(T(0));

    t.logits.noalias() = model.block(Block::Dense2Weight) * t.features;
    t.logits.colwise() += model.block(Block::Dense2Bias).col(0);
    check_finite(t.logits, "logits");
    return t;
}

template <typename T>
Matrix<T> backward(const Cnn<T>& model, const BatchTrace<T>& t, const Matrix<T>& d_logits,
                   const Matrix<T>& d_features, std::vector<Matrix<T>>* param_grads, bool want_input) {
    const Dims d(model.architecture());
    const auto batch = static_cast<Index>(t.batch);
    const Index span = d.span(batch);
    const bool params = param_grads != nullptr;
    if (params) {
        param_grads->resize(kBlockCount);
        for (std::size_t i = 0; i < kBlockCount; ++i) {
            (*param_grads)[i] = Matrix<T>::Zero(model.parameters()[i].rows(), model.parameters()[i].cols());
        }
    }
    auto grad = [&](Block b) -> Matrix<T>& { return (*param_grads)[static_cast<std::size_t>(b)]; };

    Matrix<T> d_a3 = Matrix<T>::Zero(d.hidden, batch);
    if (d_logits.size() > 0) {
        if (d_logits.rows() != d.classes || d_logits.cols() != batch) throw ShapeError("logit cotangent shape");
        d_a3.noalias() += model.block(Block::Dense2Weight).transpose() * d_logits;
        if (params) {
            grad(Block::Dense2Weight).noalias() = d_logits * t.features.transpose();
            grad(Block::Dense2Bias) = d_logits.rowwise().sum();
        }
    }
    if (d_features.size() > 0) {
        if (d_features.rows() != d.hidden || d_features.cols() != batch) throw ShapeError("feature cotangent shape");
        d_a3 += d_features;
    }

    const Matrix<T> d_z3 = d_a3.cwiseProduct(relu_mask(t.features).matrix());
    if (params) {
        grad(Block::Dense1Weight).noalias() = d_z3 * t.flat.transpose();
        grad(Block::Dense1Bias) = d_z3.rowwise().sum();
    }
    const Matrix<T> d_flat = model.block(Block::Dense1Weight).transpose() * d_z3;

    Matrix<T> d_z2 = Matrix<T>::Zero(d.c2, span);
    for (Index b = 0; b < batch; ++b) {
        for (Index c = 0; c < d.c2; ++c) {
            d_z2.row(c).segment(b * d.stride, kCols) = d_flat.col(b).segment(c * kCols, kCols).transpose();
        }
    }
    d_z2 = (t.conv2.array() > T(0)).select(d_z2, T(0));

    const auto& w2 = model.block(Block::Conv2Weight);
    if (params) {
        // Computed transposed: Eigen's kernel is faster with the long axis as the inner dimension.
        for (Index k = 0; k < d.kw; ++k) {
            const Matrix<T> gt = t.conv1.middleCols(k, span) * d_z2.transpose();
            grad(Block::Conv2Weight).middleCols(k * 2 * d.c1, 2 * d.c1) = gt.transpose();
        }
        grad(Block::Conv2Bias) = d_z2.rowwise().sum();
    }

    Matrix<T> d_a1 = Matrix<T>::Zero(2 * d.c1, d.stride * batch);
    for (Index k = 0; k < d.kw; ++k) {
        d_a1.middleCols(k, span).noalias() += w2.middleCols(k * 2 * d.c1, 2 * d.c1).transpose() * d_z2;
    }
    // Padding columns of conv1 are constants; the mask (zero there) drops them.
    const Matrix<T> d_z1 = (t.conv1.middleCols(d.pad, span).array() > T(0))
                               .select(d_a1.middleCols(d.pad, span), T(0));

    const auto& w1 = model.block(Block::Conv1Weight);
    Matrix<T> d_input;
    Matrix<T> d_xpad;
    if (want_input) d_xpad = Matrix<T>::Zero(2, d.stride * batch);
    Matrix<T> patches(d.kw, span);
    for (Index h = 0; h < 2; ++h) {
        const auto d_z1h = d_z1.middleRows(h * d.c1, d.c1);
        if (params) {
            for (Index k = 0; k < d.kw; ++k) patches.row(k) = t.input_padded.row(h).segment(k, span);
            grad(Block::Conv1Weight).noalias() += d_z1h * patches.transpose();
            grad(Block::Conv1Bias) += d_z1h.rowwise().sum();
        }
        if (want_input) {
            const Matrix<T> d_patches = w1.transpose() * d_z1h;
            for (Index k = 0; k < d.kw; ++k) d_xpad.row(h).segment(k, span) += d_patches.row(k);
        }
    }
    if (want_input) {
        d_input.resize(static_cast<Index>(kFrameSize), batch);
        for (Index b = 0; b < batch; ++b) {
            for (Index h = 0; h < 2; ++h) {
                d_input.col(b).segment(h * kCols, kCols) =
                    d_xpad.row(h).segment(b * d.stride + d.pad, kCols).transpose();
            }
        }
    }
    return d_input;
}

template <typename T>
const char* ForwardTrace<T>::layer_name(std::size_t layer) {
    static constexpr const char* kNames[] = {"conv1", "conv2", "dense1", "logits"};
    return kNames[layer];
}

template <typename T>
Vector<T> ForwardTrace<T>::layer(std::size_t layer) const {
    const auto& t = trace_;
    switch (layer) {
        case 0: {
            const Index c1 = t.conv1.rows() / 2;
            const Index pad = (t.conv1.cols() - kCols) / 2;
            Vector<T> out(2 * c1 * kCols);
            for (Index c = 0; c < c1; ++c) {
                for (Index h = 0; h < 2; ++h) {
                    out.segment((c * 2 + h) * kCols, kCols) = t.conv1.row(h * c1 + c).segment(pad, kCols).transpose();
                }
            }
            return out;
        }
        case 1: return t.flat.col(0);
        case 2: return t.features.col(0);
        case 3: return t.logits.col(0);
        default: throw ShapeError("layer index out of range");
    }
}

template <typename T>
std::vector<bool> ForwardTrace<T>::relu_pattern() const {
    std::vector<bool> out;
    for (const Matrix<T>* m : {&trace_.conv1, &trace_.conv2, &trace_.features}) {
        for (Index i = 0; i < m->size(); ++i) out.push_back(m->data()[i] > T(0));
    }
    return out;
}

template <typename T>
ForwardTrace<T> forward(const Cnn<T>& model, std::span<const T> frame) {
    if (frame.size() != kFrameSize) throw ShapeError("frame must have 256 entries, got " + std::to_string(frame.size()));
    const Matrix<T> x = Eigen::Map<const Matrix<T>>(frame.data(), static_cast<Index>(kFrameSize), 1);
    return ForwardTrace<T>(forward_batch(model, x));
}

ForwardTrace<float> forward(const CnnModel& model, const IQFrame& frame) {
    return forward<float>(model, std::span<const float>(frame.values()));
}

template <typename T>
int argmax(const Vector<T>& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return static_cast<int>(best);
}

Matrix<float> pack_inputs(std::span<const LabeledExample> examples) {
    Matrix<float> x(static_cast<Index>(kFrameSize), static_cast<Index>(examples.size()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto v = examples[i].frame.values();
        std::copy(v.begin(), v.end(), x.col(static_cast<Index>(i)).data());
    }
    return x;
}

int predict(const CnnModel& model, const IQFrame& frame) { return argmax<float>(forward(model, frame).logits()); }

namespace {

constexpr std::size_t kInferenceBatch = 64;

template <typename Fn>
void for_each_batch(const CnnModel& model, std::span<const LabeledExample> examples, Fn&& fn) {
    for (std::size_t start = 0; start < examples.size(); start += kInferenceBatch) {
        const auto n = std::min(kInferenceBatch, examples.size() - start);
        const auto trace = forward_batch(model, pack_inputs(examples.subspan(start, n)));
        fn(start, trace);
    }
}

}  // namespace

std::vector<int> predict_all(const CnnModel& model, std::span<const LabeledExample> examples) {
    std::vector<int> out(examples.size());
    for_each_batch(model, examples, [&](std::size_t start, const BatchTrace<float>& t) {
        for (Index b = 0; b < t.logits.cols(); ++b) {
            out[start + static_cast<std::size_t>(b)] = argmax<float>(t.logits.col(b));
        }
    });
    return out;
}

Eigen::MatrixXd extract_features(const CnnModel& model, std::span<const LabeledExample> examples) {
    Eigen::MatrixXd out(static_cast<Index>(examples.size()), static_cast<Index>(model.architecture().hidden));
    for_each_batch(model, examples, [&](std::size_t start, const BatchTrace<float>& t) {
        out.middleRows(static_cast<Index>(start), t.features.cols()) = t.features.transpose().cast<double>();
    });
    return out;
}

double accuracy(const CnnModel& model, std::span<const LabeledExample> examples) {
    if (examples.empty()) return 0.0;
    const auto pred = predict_all(model, examples);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < examples.size(); ++i) correct += pred[i] == examples[i].label;
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

template <typename T>
Vector<T> softmax(const Vector<T>& logits) {
    const T m = logits.maxCoeff();
    Vector<T> e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

std::vector<double> smooth_labels(std::span<const double> one_hot, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError("smoothing alpha must lie in [0, 1]");
    if (one_hot.empty()) throw PreconditionError("empty label vector");
    std::size_t ones = 0;
    for (double v : one_hot) {
        if (v == 1.0) {
            ++ones;
        } else if (v != 0.0) {
            throw PreconditionError("label vector is not one-hot");
        }
    }
    if (ones != 1) throw PreconditionError("label vector is not one-hot");
    const double inv_n = 1.0 / static_cast<double>(one_hot.size());
    std::vector<double> out(one_hot.size());
    for (std::size_t i = 0; i < one_hot.size(); ++i) out[i] = one_hot[i] - alpha * (one_hot[i] - inv_n);
    return out;
}

namespace {

// Mean cross-entropy and d(loss)/d(logits).
template <typename T>
T cross_entropy(const Matrix<T>& logits, const Matrix<T>& targets, Matrix<T>* d_logits) {
    if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
        throw ShapeError("target matrix must be classes x batch");
    }
    const Index batch = logits.cols();
    T loss = 0;
    if (d_logits) d_logits->resize(logits.rows(), batch);
    for (Index b = 0; b < batch; ++b) {
        const Vector<T> z = logits.col(b);
        const T m = z.maxCoeff();
        const T log_sum = m + std::log((z.array() - m).exp().sum());
        loss -= (targets.col(b).array() * (z.array() - log_sum)).sum();
        if (d_logits) {
            d_logits->col(b) = ((z.array() - log_sum).exp() - targets.col(b).array()).matrix() / T(batch);
        }
    }
    loss /= T(batch);
    if (!std::isfinite(static_cast<double>(loss))) throw DivergenceError("non-finite loss");
    return loss;
}

}  // namespace

template <typename T>
LossAndGrads<T> loss_and_grads(const Cnn<T>& model, const Matrix<T>& inputs, const Matrix<T>& targets) {
    if (inputs.cols() != targets.cols()) throw ShapeError("batch and target counts differ");
    const auto trace = forward_batch(model, inputs);
    LossAndGrads<T> out;
    Matrix<T> d_logits;
    out.loss = cross_entropy(trace.logits, targets, &d_logits);
    backward(model, trace, d_logits, Matrix<T>(), &out.grads, false);
    return out;
}

template <typename T>
T loss_only(const Cnn<T>& model, const Matrix<T>& inputs, const Matrix<T>& targets) {
    if (inputs.cols() != targets.cols()) throw ShapeError("batch and target counts differ");
    return cross_entropy<T>(forward_batch(model, inputs).logits, targets, nullptr);
}

template <typename T>
std::vector<T> grad_input(const Cnn<T>& model, const ForwardTrace<T>& trace, const LinearObjective<T>& objective) {
    const auto& a = model.architecture();
    Matrix<T> d_logits, d_features;
    if (!objective.logit_weights.empty()) {
        if (objective.logit_weights.size() != a.classes) throw ShapeError("logit weight length");
        d_logits = Eigen::Map<const Matrix<T>>(objective.logit_weights.data(), static_cast<Index>(a.classes), 1);
    }
    if (!objective.feature_weights.empty()) {
        if (objective.feature_weights.size() != a.hidden) throw ShapeError("feature weight length");
        d_features = Eigen::Map<const Matrix<T>>(objective.feature_weights.data(), static_cast<Index>(a.hidden), 1);
    }
    const Matrix<T> g = backward<T>(model, trace.batch(), d_logits, d_features, nullptr, true);
    return {g.data(), g.data() + g.size()};
}

template <typename T>
std::vector<T> grad_input(const Cnn<T>& model, std::span<const T> frame, const LinearObjective<T>& objective) {
    return grad_input(model, forward(model, frame), objective);
}

template <typename T>
std::vector<T> feature_jacobian_vjp(const Cnn<T>& model, const ForwardTrace<T>& trace, std::span<const T> v) {
    if (v.size() != model.architecture().hidden) {
        throw ShapeError("VJP vector length " + std::to_string(v.size()) + " != feature width " +
                         std::to_string(model.architecture().hidden));
    }
    LinearObjective<T> obj;
    obj.feature_weights.assign(v.begin(), v.end());
    return grad_input(model, trace, obj);
}

template <typename T>
std::vector<T> feature_jacobian_vjp(const Cnn<T>& model, std::span<const T> frame, std::span<const T> v) {
    return feature_jacobian_vjp(model, forward(model, frame), v);
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(ls_alpha >= 0.0 && ls_alpha <= 1.0)) throw ConfigError("ls_alpha must lie in [0, 1]");
    if (!(gna_variance >= 0.0)) throw ConfigError("gna_variance must be non-negative");
}

TrainResult train(CnnModel model, const DatasetBundle& data, const TrainConfig& config) {
    config.validate();
    if (data.examples.empty()) throw PreconditionError("training data is empty");
    const auto classes = static_cast<Index>(model.architecture().classes);
    const std::size_t n = data.examples.size();

    // Smoothed target for each class, computed once.
    std::vector<std::vector<double>> targets(static_cast<std::size_t>(classes));
    for (Index k = 0; k < classes; ++k) {
        std::vector<double> one_hot(static_cast<std::size_t>(classes), 0.0);
        one_hot[static_cast<std::size_t>(k)] = 1.0;
        targets[static_cast<std::size_t>(k)] = config.augment ? smooth_labels(one_hot, config.ls_alpha) : one_hot;
    }

    std::vector<Matrix<float>> velocity;
    for (const auto& p : model.parameters()) velocity.push_back(Matrix<float>::Zero(p.rows(), p.cols()));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 1));
    std::mt19937_64 noise_rng(mix_seed(config.seed, 2));
    const double noise_std = std::sqrt(config.gna_variance);
    const bool add_noise = config.augment && config.gna_variance > 0.0;
    const auto lr = static_cast<float>(config.learning_rate);
    const auto mu = static_cast<float>(config.momentum);

    TrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const auto bs = static_cast<Index>(std::min(config.batch_size, n - start));
            Matrix<float> x(static_cast<Index>(kFrameSize), bs);
            Matrix<float> y = Matrix<float>::Zero(classes, bs);
            for (Index b = 0; b < bs; ++b) {
                const auto& ex = data.examples[order[start + static_cast<std::size_t>(b)]];
                const auto v = ex.frame.values();
                std::copy(v.begin(), v.end(), x.col(b).data());
                if (ex.label >= classes) throw ShapeError("label exceeds model class count");
                const auto& t = targets[ex.label];
                for (Index k = 0; k < classes; ++k) y(k, b) = static_cast<float>(t[static_cast<std::size_t>(k)]);
            }
            if (add_noise) {
                std::normal_distribution<double> normal(0.0, noise_std);
                for (Index i = 0; i < x.size(); ++i) x.data()[i] += static_cast<float>(normal(noise_rng));
            }
            if (config.on_batch) config.on_batch({epoch, batches, &x});

            auto lg = loss_and_grads(model, x, y);
            for (std::size_t i = 0; i < kBlockCount; ++i) {
                velocity[i] = mu * velocity[i] - lr * lg.grads[i];
                model.parameters()[i] += velocity[i];
            }
            loss_sum += lg.loss;
            ++batches;
        }
        const double mean = loss_sum / static_cast<double>(batches);
        if (!std::isfinite(mean) || !model.all_finite()) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1));
        }
        result.loss_history.push_back(mean);
        if (config.on_epoch) config.on_epoch(epoch + 1, mean);
    }
    result.model = std::move(model);
    return result;
}

template class Cnn<float>;
template class Cnn<double>;
template class ForwardTrace<float>;
template class ForwardTrace<double>;

#define AMC_NN_INSTANTIATE(T)                                                                                     \
    template BatchTrace<T> forward_batch<T>(const Cnn<T>&, const Matrix<T>&);                                    \
    template Matrix<T> backward<T>(const Cnn<T>&, const BatchTrace<T>&, const Matrix<T>&, const Matrix<T>&,      \
                                   std::vector<Matrix<T>>*, bool);                                               \
    template ForwardTrace<T> forward<T>(const Cnn<T>&, std::span<const T>);                                      \
    template int argmax<T>(const Vector<T>&);                                                                     \
    template Vector<T> softmax<T>(const Vector<T>&);                                                              \
    template LossAndGrads<T> loss_and_grads<T>(const Cnn<T>&, const Matrix<T>&, const Matrix<T>&);               \
    template T loss_only<T>(const Cnn<T>&, const Matrix<T>&, const Matrix<T>&);                                  \
    template std::vector<T> grad_input<T>(const Cnn<T>&, const ForwardTrace<T>&, const LinearObjective<T>&);     \
    template std::vector<T> grad_input<T>(const Cnn<T>&, std::span<const T>, const LinearObjective<T>&);         \
    template std::vector<T> feature_jacobian_vjp<T>(const Cnn<T>&, const ForwardTrace<T>&, std::span<const T>); \
    template std::vector<T> feature_jacobian_vjp<T>(const Cnn<T>&, std::span<const T>, std::span<const T>);

AMC_NN_INSTANTIATE(float)
AMC_NN_INSTANTIATE(double)

#undef AMC_NN_INSTANTIATE

}  // namespace amc::nn
