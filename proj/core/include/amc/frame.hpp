#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace amc {

inline constexpr std::size_t kNumClasses = 11;
inline constexpr std::size_t kFrameRows = 2;
inline constexpr std::size_t kFrameCols = 128;
inline constexpr std::size_t kFrameSize = kFrameRows * kFrameCols;

/// Canonical modulation names, in label order.
const std::array<std::string_view, kNumClasses>& class_names();

std::optional<int> class_index(std::string_view name);

/// One 2x128 I/Q window. Row 0 holds the in-phase samples, row 1 the
/// quadrature samples; storage is row-major. Every entry is finite.
class IQFrame {
public:
    IQFrame() { samples_.fill(0.0f); }

    /// Throws ShapeError on a length other than 256 or on non-finite input.
    static IQFrame from_values(std::span<const float> values);
    static IQFrame from_values(std::span<const double> values);

    float in_phase(std::size_t t) const { return samples_[t]; }
    float quadrature(std::size_t t) const { return samples_[kFrameCols + t]; }
    float at(std::size_t row, std::size_t col) const { return samples_[row * kFrameCols + col]; }

    std::span<const float, kFrameSize> values() const { return samples_; }

    double norm_squared() const;

    friend bool operator==(const IQFrame&, const IQFrame&) = default;

private:
    std::array<float, kFrameSize> samples_;
};

}  // namespace amc
