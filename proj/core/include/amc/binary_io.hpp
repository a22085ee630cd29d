#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "amc/error.hpp"

namespace amc::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written with memcpy");

/// Append-only little-endian encoder over an in-memory buffer.
class ByteWriter {
public:
    void magic(std::string_view four_cc);

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        const auto offset = bytes_.size();
        bytes_.resize(offset + sizeof(T));
        std::memcpy(bytes_.data() + offset, &value, sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::span<const T> values) {
        const auto offset = bytes_.size();
        bytes_.resize(offset + values.size_bytes());
        if (!values.empty()) std::memcpy(bytes_.data() + offset, values.data(), values.size_bytes());
    }

    /// u8 length prefix followed by the raw bytes; names longer than 255 bytes are rejected.
    void short_string(std::string_view s);
    /// u32 length prefix.
    void long_string(std::string_view s);

    void append(std::span<const std::uint8_t> raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::size_t size() const { return bytes_.size(); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked decoder. Every read past the end raises FormatError(Truncated).
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    /// Throws FormatError(BadMagic) when the next four bytes differ.
    void expect_magic(std::string_view four_cc, std::string_view what);

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        require(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void get_array(std::span<T> out) {
        require(out.size_bytes());
        if (!out.empty()) std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }

    std::string short_string();
    std::string long_string();
    std::span<const std::uint8_t> raw(std::size_t n);

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void require(std::size_t n) const;

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to `path.partial` and renames into place once the bytes are flushed.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Lower-case hex SHA-256 of a byte range or a file's contents.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace amc::io
