#include "amc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "amc/binary_io.hpp"
#include "amc/error.hpp"

namespace amc {

namespace {

constexpr std::string_view kMagic = "AMCD";
constexpr std::uint16_t kVersion = 1;
constexpr std::string_view kMetaTag = "META";

}  // namespace

DatasetBundle DatasetBundle::empty(Provenance provenance, std::uint64_t seed) {
    DatasetBundle b;
    for (auto name : amc::class_names()) b.class_names.emplace_back(name);
    b.provenance = provenance;
    b.seed = seed;
    return b;
}

DatasetBundle DatasetBundle::subset(std::span<const std::size_t> indices) const {
    DatasetBundle out;
    out.class_names = class_names;
    out.provenance = provenance;
    out.seed = seed;
    out.examples.reserve(indices.size());
    for (auto i : indices) out.examples.push_back(examples.at(i));
    return out;
}

// Layout: magic, u16 version, u32 count, u8 class count, u8-prefixed names,
// then per example i8 snr, u8 label, 256 f32. Optional tagged trailer blocks
// (tag[4], u32 length, payload) follow; readers skip tags they do not know.
std::vector<std::uint8_t> encode_dataset(const DatasetBundle& bundle, std::span<const TrailerBlock> extra) {
    io::ByteWriter w;
    w.magic(kMagic);
    w.put<std::uint16_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(bundle.examples.size()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(bundle.class_names.size()));
    for (const auto& name : bundle.class_names) w.short_string(name);
    for (const auto& ex : bundle.examples) {
        w.put<std::int8_t>(ex.snr_db);
        w.put<std::uint8_t>(ex.label);
        w.put_array<float>(ex.frame.values());
    }
    w.magic(kMetaTag);
    w.put<std::uint32_t>(9);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(bundle.provenance));
    w.put<std::uint64_t>(bundle.seed);
    for (const auto& block : extra) {
        if (block.tag.size() != 4 || block.tag == kMetaTag) throw PreconditionError("invalid trailer tag");
        w.magic(block.tag);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(block.payload.size()));
        w.append(block.payload);
    }
    return w.bytes();
}

DatasetBundle decode_dataset(std::span<const std::uint8_t> bytes, std::vector<TrailerBlock>* extra) {
    io::ByteReader r(bytes);
    r.expect_magic(kMagic, "dataset");
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "dataset version " + std::to_string(version) + " unsupported (expected 1)");
    }
    const auto count = r.get<std::uint32_t>();
    const auto n_classes = r.get<std::uint8_t>();
    DatasetBundle b;
    for (std::uint8_t i = 0; i < n_classes; ++i) b.class_names.push_back(r.short_string());
    const auto& canonical = amc::class_names();
    if (b.class_names.size() != canonical.size() ||
        !std::equal(b.class_names.begin(), b.class_names.end(), canonical.begin())) {
        throw FormatError(FormatErrorKind::Invalid, "class table differs from the canonical eleven schemes");
    }

    constexpr std::size_t kRecord = 2 + kFrameSize * sizeof(float);
    if (r.remaining() / kRecord < count) {
        throw FormatError(FormatErrorKind::Truncated, "truncated payload: header declares " + std::to_string(count) +
                                                          " examples, file holds fewer");
    }
    b.examples.resize(count);
    std::array<float, kFrameSize> buf{};
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& ex = b.examples[i];
        ex.snr_db = r.get<std::int8_t>();
        ex.label = r.get<std::uint8_t>();
        r.get_array<float>(buf);
        if (ex.label >= n_classes) {
            throw FormatError(FormatErrorKind::Invalid, "label out of range at example " + std::to_string(i));
        }
        if (!is_standard_snr(ex.snr_db)) {
            throw FormatError(FormatErrorKind::Invalid, "SNR off grid at example " + std::to_string(i));
        }
        try {
            ex.frame = IQFrame::from_values(std::span<const float>(buf));
        } catch (const ShapeError& e) {
            throw FormatError(FormatErrorKind::Invalid, "example " + std::to_string(i) + ": " + e.what());
        }
    }

    // Files without a META block come from external converters.
    b.provenance = Provenance::Imported;
    b.seed = 0;
    while (r.remaining() > 0) {
        auto tag = r.raw(4);
        const auto len = r.get<std::uint32_t>();
        auto payload = r.raw(len);
        if (std::equal(tag.begin(), tag.end(), kMetaTag.begin())) {
            io::ByteReader meta(payload);
            const auto prov = meta.get<std::uint8_t>();
            if (prov > 1) throw FormatError(FormatErrorKind::Invalid, "unknown provenance code");
            b.provenance = static_cast<Provenance>(prov);
            b.seed = meta.get<std::uint64_t>();
        } else if (extra) {
            extra->push_back({std::string(tag.begin(), tag.end()), {payload.begin(), payload.end()}});
        }
    }
    return b;
}

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_dataset(bundle));
}

DatasetBundle load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

std::pair<DatasetBundle, DatasetBundle> split_train_test(const DatasetBundle& bundle, std::uint64_t seed) {
    if (bundle.examples.empty()) throw PreconditionError("cannot split an empty bundle");
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < bundle.examples.size(); ++i) {
        const auto& ex = bundle.examples[i];
        cells[{ex.label, ex.snr_db}].push_back(i);
    }
    std::vector<std::size_t> train, test;
    for (auto& [key, idx] : cells) {
        if (idx.size() < 2) {
            throw PreconditionError("cell (" + std::string(class_names().at(static_cast<std::size_t>(key.first))) +
                                    ", " + std::to_string(key.second) + " dB) has fewer than 2 examples");
        }
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(key.first * 256 + (key.second + 128))));
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_train = (idx.size() + 1) / 2;
        train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {bundle.subset(train), bundle.subset(test)};
}

DatasetBundle rms_normalize(const DatasetBundle& bundle, double target_power) {
    DatasetBundle out = bundle;
    for (auto& ex : out.examples) {
        const double power = ex.frame.norm_squared() / static_cast<double>(kFrameCols);
        if (power <= 0.0) continue;
        const double gain = std::sqrt(target_power / power);
        std::array<double, kFrameSize> v{};
        for (std::size_t i = 0; i < kFrameSize; ++i) v[i] = ex.frame.values()[i] * gain;
        ex.frame = IQFrame::from_values(std::span<const double>(v));
    }
    return out;
}

std::vector<std::size_t> sample_eval_indices(const DatasetBundle& test, int snr_db, std::size_t n,
                                             std::uint64_t seed) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < test.examples.size(); ++i) {
        if (test.examples[i].snr_db == snr_db) candidates.push_back(i);
    }
    if (candidates.size() < n) {
        throw PreconditionError("insufficient samples at " + std::to_string(snr_db) + " dB: need " +
                                std::to_string(n) + ", have " + std::to_string(candidates.size()));
    }
    std::mt19937_64 rng(mix_seed(seed, 0xE5A1));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(n);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

EvalSplit build_eval_split(const CleanScorer& scorer, const DatasetBundle& test, int snr_db, std::size_t n,
                           std::uint64_t seed) {
    EvalSplit split;
    split.snr_db = snr_db;
    for (auto i : sample_eval_indices(test, snr_db, n, seed)) {
        const auto& ex = test.examples[i];
        (scorer(ex) == ex.label ? split.set_one : split.set_two).push_back(i);
    }
    split.size_total = n;
    return split;
}

}  // namespace amc
