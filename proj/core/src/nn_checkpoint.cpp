#include <string>

#include "amc/binary_io.hpp"
#include "amc/error.hpp"
#include "amc/neuralnet.hpp"

namespace amc::nn {

namespace {

constexpr std::string_view kMagic = "AMCM";
constexpr std::uint16_t kVersion = 1;

}  // namespace

// magic, u16 version, five u32 architecture fields, u8 block count, then per
// block a name with u32 rows/cols, then every block's values as row-major f32.
std::vector<std::uint8_t> encode_checkpoint(const CnnModel& model) {
    const auto& a = model.architecture();
    io::ByteWriter w;
    w.magic(kMagic);
    w.put<std::uint16_t>(kVersion);
    for (auto v : {a.conv1_filters, a.conv2_filters, a.kernel_width, a.hidden, a.classes}) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    }
    w.put<std::uint8_t>(static_cast<std::uint8_t>(kBlockCount));
    for (std::size_t i = 0; i < kBlockCount; ++i) {
        const auto& p = model.parameters()[i];
        w.short_string(block_name(static_cast<Block>(i)));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p.rows()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p.cols()));
    }
    for (const auto& p : model.parameters()) {
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p;
        w.put_array<float>(std::span<const float>(rm.data(), static_cast<std::size_t>(rm.size())));
    }
    return w.bytes();
}

CnnModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic(kMagic, "CNN checkpoint");
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch, "CNN checkpoint version " + std::to_string(version));
    }
    Architecture a;
    a.conv1_filters = r.get<std::uint32_t>();
    a.conv2_filters = r.get<std::uint32_t>();
    a.kernel_width = r.get<std::uint32_t>();
    a.hidden = r.get<std::uint32_t>();
    a.classes = r.get<std::uint32_t>();
    try {
        a.validate();
    } catch (const ConfigError& e) {
        throw FormatError(FormatErrorKind::Invalid, std::string("checkpoint architecture: ") + e.what());
    }
    CnnModel model(a);
    if (r.get<std::uint8_t>() != kBlockCount) throw FormatError(FormatErrorKind::Invalid, "unexpected block count");
    for (std::size_t i = 0; i < kBlockCount; ++i) {
        const auto name = r.short_string();
        const auto rows = r.get<std::uint32_t>();
        const auto cols = r.get<std::uint32_t>();
        const auto& p = model.parameters()[i];
        if (name != block_name(static_cast<Block>(i)) || rows != p.rows() || cols != p.cols()) {
            throw FormatError(FormatErrorKind::Invalid, "block descriptor mismatch for " + name);
        }
    }
    for (auto& p : model.parameters()) {
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(p.rows(), p.cols());
        r.get_array<float>(std::span<float>(rm.data(), static_cast<std::size_t>(rm.size())));
        p = rm;
    }
    if (r.remaining() != 0) throw FormatError(FormatErrorKind::Invalid, "trailing bytes after CNN parameters");
    if (!model.all_finite()) throw FormatError(FormatErrorKind::Invalid, "non-finite parameters");
    return model;
}

void save_checkpoint(const CnnModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_checkpoint(model));
}

CnnModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace amc::nn
