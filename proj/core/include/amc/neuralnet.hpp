#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "amc/dataset.hpp"
#include "amc/frame.hpp"

namespace amc::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Shape of the two-conv, two-dense classifier. Defaults are the VT-CNN2
/// layout: conv 1x3 (256 filters), conv 2x3 (80 filters), dense 256, dense 11.
/// Convolutions use zero padding on the time axis so the width stays 128.
struct Architecture {
    std::size_t conv1_filters = 256;
    std::size_t conv2_filters = 80;
    std::size_t kernel_width = 3;
    std::size_t hidden = 256;
    std::size_t classes = kNumClasses;

    std::size_t feature_width() const { return hidden; }
    void validate() const;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class Block : std::size_t {
    Conv1Weight,  // conv1_filters x kernel_width
    Conv1Bias,
    Conv2Weight,  // conv2_filters x (kernel_width * 2 * conv1_filters), tap-major then row then filter
    Conv2Bias,
    Dense1Weight,  // hidden x (conv2_filters * 128), channel-major input
    Dense1Bias,
    Dense2Weight,  // classes x hidden
    Dense2Bias,
};
inline constexpr std::size_t kBlockCount = 8;

const char* block_name(Block b);

template <typename T>
class Cnn {
public:
    using Scalar = T;

    /// All parameters zero.
    explicit Cnn(const Architecture& arch = {});

    /// Uniform fan-in initialization: weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.
    static Cnn initialized(const Architecture& arch, std::uint64_t seed);

    const Architecture& architecture() const { return arch_; }

    Matrix<T>& block(Block b) { return params_[static_cast<std::size_t>(b)]; }
    const Matrix<T>& block(Block b) const { return params_[static_cast<std::size_t>(b)]; }

    std::vector<Matrix<T>>& parameters() { return params_; }
    const std::vector<Matrix<T>>& parameters() const { return params_; }

    std::size_t parameter_count() const;
    bool all_finite() const;

    template <typename U>
    Cnn<U> cast() const {
        Cnn<U> out(arch_);
        for (std::size_t i = 0; i < kBlockCount; ++i) out.parameters()[i] = params_[i].template cast<U>();
        return out;
    }

private:
    Architecture arch_;
    std::vector<Matrix<T>> params_;
};

using CnnModel = Cnn<float>;

/// Activations of a batch, kept for the backward pass. Inputs are 256 x B,
/// one row-major frame per column. Time-axis buffers concatenate examples
/// with `stride = 128 + kernel_width - 1` columns each.
template <typename T>
struct BatchTrace {
    std::size_t batch = 0;
    Matrix<T> input_padded;  // 2 x stride*B
    Matrix<T> conv1;         // 2*conv1_filters x stride*B, post-ReLU, padding columns zero; row = h*C1 + c
    Matrix<T> conv2;         // conv2_filters x (stride*B - kw + 1), post-ReLU
    Matrix<T> flat;          // conv2_filters*128 x B, channel-major
    Matrix<T> features;      // hidden x B, post-ReLU
    Matrix<T> logits;        // classes x B
};

template <typename T>
BatchTrace<T> forward_batch(const Cnn<T>& model, const Matrix<T>& inputs);

/// Single-frame trace: per-layer activations, logits, and the penultimate features.
template <typename T>
class ForwardTrace {
public:
    explicit ForwardTrace(BatchTrace<T> trace) : trace_(std::move(trace)) {}

    Vector<T> logits() const { return trace_.logits.col(0); }
    Vector<T> features() const { return trace_.features.col(0); }

    static constexpr std::size_t kLayerCount = 4;
    static const char* layer_name(std::size_t layer);
    /// Post-activation values of layer 0..3 (conv1, conv2, dense1, logits),
    /// flattened channel-major: channel, then row, then time.
    Vector<T> layer(std::size_t layer) const;

    /// True where a ReLU unit is active; used to detect kink crossings.
    std::vector<bool> relu_pattern() const;

    const BatchTrace<T>& batch() const { return trace_; }

private:
    BatchTrace<T> trace_;
};

template <typename T>
ForwardTrace<T> forward(const Cnn<T>& model, std::span<const T> frame);
ForwardTrace<float> forward(const CnnModel& model, const IQFrame& frame);

/// Lowest index wins ties.
template <typename T>
int argmax(const Vector<T>& v);

int predict(const CnnModel& model, const IQFrame& frame);
std::vector<int> predict_all(const CnnModel& model, std::span<const LabeledExample> examples);
/// Penultimate activations, one row per example.
Eigen::MatrixXd extract_features(const CnnModel& model, std::span<const LabeledExample> examples);

template <typename T>
Vector<T> softmax(const Vector<T>& logits);

/// l - alpha * (l - 1/N). Throws PreconditionError unless `one_hot` is one-hot and alpha in [0,1].
std::vector<double> smooth_labels(std::span<const double> one_hot, double alpha);

template <typename T>
struct LossAndGrads {
    T loss = 0;
    std::vector<Matrix<T>> grads;
};

/// Mean softmax cross-entropy against `targets` (classes x B) and the
/// gradient for each parameter block. Throws DivergenceError on a non-finite loss.
template <typename T>
LossAndGrads<T> loss_and_grads(const Cnn<T>& model, const Matrix<T>& inputs, const Matrix<T>& targets);

template <typename T>
T loss_only(const Cnn<T>& model, const Matrix<T>& inputs, const Matrix<T>& targets);

/// A scalar objective linear in the logits and the penultimate features.
/// Either weight vector may be empty.
template <typename T>
struct LinearObjective {
    std::vector<T> logit_weights;
    std::vector<T> feature_weights;
};

template <typename T>
std::vector<T> grad_input(const Cnn<T>& model, const ForwardTrace<T>& trace, const LinearObjective<T>& objective);
template <typename T>
std::vector<T> grad_input(const Cnn<T>& model, std::span<const T> frame, const LinearObjective<T>& objective);

/// v^T * d(features)/d(input), input-shaped (row-major 2x128).
template <typename T>
std::vector<T> feature_jacobian_vjp(const Cnn<T>& model, const ForwardTrace<T>& trace, std::span<const T> v);
template <typename T>
std::vector<T> feature_jacobian_vjp(const Cnn<T>& model, std::span<const T> frame, std::span<const T> v);

/// Backward pass from logit and/or feature cotangents (each classes x B /
/// hidden x B, or empty). Fills parameter gradients when `param_grads` is
/// non-null and returns the input gradient (256 x B) when `want_input` is set.
template <typename T>
Matrix<T> backward(const Cnn<T>& model, const BatchTrace<T>& trace, const Matrix<T>& d_logits,
                   const Matrix<T>& d_features, std::vector<Matrix<T>>* param_grads, bool want_input);

struct BatchEvent {
    int epoch = 0;
    std::size_t batch = 0;
    const Matrix<float>* inputs = nullptr;  // after augmentation
};

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double ls_alpha = 0.1;
    double gna_variance = 0.003;
    std::uint64_t seed = 0;
    /// When false, labels stay one-hot and no noise is drawn.
    bool augment = true;
    std::function<void(const BatchEvent&)> on_batch;
    std::function<void(int epoch, double mean_loss)> on_epoch;

    void validate() const;
};

struct TrainResult {
    CnnModel model;
    std::vector<double> loss_history;  // mean batch loss per epoch
};

TrainResult train(CnnModel model, const DatasetBundle& data, const TrainConfig& config);

double accuracy(const CnnModel& model, std::span<const LabeledExample> examples);

Matrix<float> pack_inputs(std::span<const LabeledExample> examples);

void save_checkpoint(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const CnnModel& model);
CnnModel decode_checkpoint(std::span<const std::uint8_t> bytes);

extern template class Cnn<float>;
extern template class Cnn<double>;

}  // namespace amc::nn
