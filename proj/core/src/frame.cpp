#include "amc/frame.hpp"

#include <cmath>
#include <string>

#include "amc/error.hpp"

namespace amc {

const std::array<std::string_view, kNumClasses>& class_names() {
    static constexpr std::array<std::string_view, kNumClasses> kNames = {
        "BPSK", "QPSK", "8PSK", "QAM16", "QAM64", "CPFSK", "GFSK", "PAM4", "WBFM", "AM-SSB", "AM-DSB"};
    return kNames;
}

std::optional<int> class_index(std::string_view name) {
    const auto& names = class_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

namespace {

template <typename T>
void fill_frame(std::span<const T> values, std::array<float, kFrameSize>& out) {
    if (values.size() != kFrameSize) {
        throw ShapeError("frame must have 256 entries, got " + std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < kFrameSize; ++i) {
        const auto v = static_cast<float>(values[i]);
        if (!std::isfinite(v)) throw ShapeError("non-finite frame entry at " + std::to_string(i));
        out[i] = v;
    }
}

}  // namespace

IQFrame IQFrame::from_values(std::span<const float> values) {
    IQFrame f;
    fill_frame(values, f.samples_);
    return f;
}

IQFrame IQFrame::from_values(std::span<const double> values) {
    IQFrame f;
    fill_frame(values, f.samples_);
    return f;
}

double IQFrame::norm_squared() const {
    double s = 0.0;
    for (float v : samples_) s += static_cast<double>(v) * v;
    return s;
}

}  // namespace amc
