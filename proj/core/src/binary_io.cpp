#include "amc/binary_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

namespace amc::io {

void ByteWriter::magic(std::string_view four_cc) {
    if (four_cc.size() != 4) throw ShapeError("magic must be four bytes");
    bytes_.insert(bytes_.end(), four_cc.begin(), four_cc.end());
}

void ByteWriter::short_string(std::string_view s) {
    if (s.size() > 255) throw ShapeError("string too long for u8 length prefix: " + std::string(s));
    put<std::uint8_t>(static_cast<std::uint8_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::long_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteReader::require(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
        throw FormatError(FormatErrorKind::Truncated,
                          "truncated payload: need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_));
    }
}

void ByteReader::expect_magic(std::string_view four_cc, std::string_view what) {
    if (bytes_.size() - pos_ < 4 ||
        std::memcmp(bytes_.data() + pos_, four_cc.data(), 4) != 0) {
        throw FormatError(FormatErrorKind::BadMagic,
                          "bad magic: expected '" + std::string(four_cc) + "' (" + std::string(what) + ")");
    }
    pos_ += 4;
}

std::string ByteReader::short_string() {
    const auto n = get<std::uint8_t>();
    auto r = raw(n);
    return std::string(r.begin(), r.end());
}

std::string ByteReader::long_string() {
    const auto n = get<std::uint32_t>();
    auto r = raw(n);
    return std::string(r.begin(), r.end());
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
    require(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw FormatError(FormatErrorKind::Io, "read failed: " + path.string());
    }
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(FormatErrorKind::Io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError(FormatErrorKind::Io, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

std::string to_hex(std::span<const unsigned char> digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (unsigned char c : digest) {
        out.push_back(kHex[c >> 4]);
        out.push_back(kHex[c & 0xF]);
    }
    return out;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw Error("sha256 failed");
    }
    return to_hex(std::span(digest.data(), len));
}

std::string sha256_file(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return sha256_hex(bytes);
}

}  // namespace amc::io
