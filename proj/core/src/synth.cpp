#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "amc/dataset.hpp"
#include "amc/error.hpp"

namespace amc {

namespace {

using cd = std::complex<double>;
using std::numbers::pi;

constexpr int kSamplesPerSymbol = 8;
constexpr double kRollOff = 0.35;
constexpr int kFilterSpanSymbols = 8;
constexpr double kMaxCarrierOffset = 0.01;  // cycles per sample
constexpr std::size_t kLen = kFrameCols;

enum Scheme : int { BPSK, QPSK, PSK8, QAM16, QAM64, CPFSK, GFSK, PAM4, WBFM, AMSSB, AMDSB };

std::vector<double> root_raised_cosine(double beta, int sps, int span) {
    const int n = span * sps + 1;
    std::vector<double> h(static_cast<std::size_t>(n));
    const double half = (n - 1) / 2.0;
    for (int i = 0; i < n; ++i) {
        const double t = (i - half) / sps;
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 - beta + 4.0 * beta / pi;
        } else if (std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-9) {
            v = beta / std::sqrt(2.0) *
                ((1 + 2 / pi) * std::sin(pi / (4 * beta)) + (1 - 2 / pi) * std::cos(pi / (4 * beta)));
        } else {
            v = (std::sin(pi * t * (1 - beta)) + 4 * beta * t * std::cos(pi * t * (1 + beta))) /
                (pi * t * (1 - 16 * beta * beta * t * t));
        }
        h[static_cast<std::size_t>(i)] = v;
    }
    double energy = 0.0;
    for (double v : h) energy += v * v;
    for (double& v : h) v /= std::sqrt(energy);
    return h;
}

// Hamming-windowed sinc lowpass with unit DC gain.
std::vector<double> lowpass(double cutoff, int taps) {
    std::vector<double> h(static_cast<std::size_t>(taps));
    const double half = (taps - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < taps; ++i) {
        const double t = i - half;
        const double sinc = std::abs(t) < 1e-12 ? 2 * cutoff : std::sin(2 * pi * cutoff * t) / (pi * t);
        const double w = 0.54 - 0.46 * std::cos(2 * pi * i / (taps - 1));
        h[static_cast<std::size_t>(i)] = sinc * w;
        sum += sinc * w;
    }
    for (double& v : h) v /= sum;
    return h;
}

std::vector<double> gaussian_pulse(double bt, int sps, int span) {
    const int n = span * sps + 1;
    std::vector<double> h(static_cast<std::size_t>(n));
    const double half = (n - 1) / 2.0;
    const double sigma = std::sqrt(std::log(2.0)) / (2 * pi * bt);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = (i - half) / sps;
        h[static_cast<std::size_t>(i)] = std::exp(-t * t / (2 * sigma * sigma));
        sum += h[static_cast<std::size_t>(i)];
    }
    for (double& v : h) v /= sum;
    return h;
}

// Type III FIR Hilbert transformer, Hamming windowed.
std::vector<double> hilbert_taps(int taps) {
    std::vector<double> h(static_cast<std::size_t>(taps), 0.0);
    const int half = (taps - 1) / 2;
    for (int i = 0; i < taps; ++i) {
        const int k = i - half;
        if (k % 2 != 0) {
            const double w = 0.54 - 0.46 * std::cos(2 * pi * i / (taps - 1));
            h[static_cast<std::size_t>(i)] = 2.0 / (pi * k) * w;
        }
    }
    return h;
}

template <typename T>
std::vector<T> convolve_same(const std::vector<T>& x, const std::vector<double>& h) {
    const std::size_t half = (h.size() - 1) / 2;
    std::vector<T> y(x.size(), T{});
    for (std::size_t n = 0; n < x.size(); ++n) {
        T acc{};
        for (std::size_t k = 0; k < h.size(); ++k) {
            const auto idx = static_cast<std::ptrdiff_t>(n + half) - static_cast<std::ptrdiff_t>(k);
            if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(x.size())) acc += h[k] * x[static_cast<std::size_t>(idx)];
        }
        y[n] = acc;
    }
    return y;
}

cd constellation_point(int scheme, std::mt19937_64& rng) {
    auto pick = [&](int m) { return std::uniform_int_distribution<int>(0, m - 1)(rng); };
    switch (scheme) {
        case BPSK: return {pick(2) == 0 ? -1.0 : 1.0, 0.0};
        case QPSK: {
            const int k = pick(4);
            return std::polar(1.0, pi / 4 + k * pi / 2);
        }
        case PSK8: return std::polar(1.0, pick(8) * pi / 4);
        case QAM16: return {(2.0 * pick(4) - 3) / std::sqrt(10.0), (2.0 * pick(4) - 3) / std::sqrt(10.0)};
        case QAM64: return {(2.0 * pick(8) - 7) / std::sqrt(42.0), (2.0 * pick(8) - 7) / std::sqrt(42.0)};
        case PAM4: return {(2.0 * pick(4) - 3) / std::sqrt(5.0), 0.0};
        default: throw PreconditionError("not a linear scheme");
    }
}

// Enough samples to take a 128-sample window clear of filter transients.
constexpr std::size_t kWorkLen = kLen + 2 * kFilterSpanSymbols * kSamplesPerSymbol + kSamplesPerSymbol;

std::vector<cd> window(const std::vector<cd>& x, std::mt19937_64& rng) {
    const std::size_t guard = kFilterSpanSymbols * kSamplesPerSymbol;
    const auto offset = guard + std::uniform_int_distribution<std::size_t>(0, kSamplesPerSymbol - 1)(rng);
    return {x.begin() + static_cast<std::ptrdiff_t>(offset),
            x.begin() + static_cast<std::ptrdiff_t>(offset + kLen)};
}

std::vector<cd> linear_modulation(int scheme, std::mt19937_64& rng) {
    static const auto rrc = root_raised_cosine(kRollOff, kSamplesPerSymbol, kFilterSpanSymbols);
    std::vector<cd> impulses(kWorkLen, cd{});
    for (std::size_t n = 0; n < kWorkLen; n += kSamplesPerSymbol) impulses[n] = constellation_point(scheme, rng);
    return window(convolve_same(impulses, rrc), rng);
}

std::vector<cd> frequency_shift_keying(bool gaussian, std::mt19937_64& rng) {
    constexpr double kModIndex = 0.5;
    static const auto gauss = gaussian_pulse(0.35, kSamplesPerSymbol, 4);
    std::vector<double> freq(kWorkLen);
    for (std::size_t n = 0; n < kWorkLen; n += kSamplesPerSymbol) {
        const double a = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < kSamplesPerSymbol && n + k < kWorkLen; ++k) freq[n + k] = a;
    }
    if (gaussian) freq = convolve_same(freq, gauss);
    std::vector<cd> out(kWorkLen);
    double phase = 0.0;
    for (std::size_t n = 0; n < kWorkLen; ++n) {
        phase += pi * kModIndex * freq[n] / kSamplesPerSymbol;
        out[n] = std::polar(1.0, phase);
    }
    return window(out, rng);
}

// Band-limited message: lowpass-filtered white Gaussian noise, unit RMS.
std::vector<double> message(std::mt19937_64& rng) {
    static const auto lp = lowpass(0.04, 65);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> white(kWorkLen);
    for (double& v : white) v = normal(rng);
    auto m = convolve_same(white, lp);
    double power = 0.0;
    for (double v : m) power += v * v;
    const double rms = std::sqrt(power / static_cast<double>(m.size()));
    for (double& v : m) v /= rms;
    return m;
}

std::vector<cd> analog_modulation(int scheme, std::mt19937_64& rng) {
    const auto m = message(rng);
    std::vector<cd> out(kWorkLen);
    if (scheme == AMDSB) {
        double peak = 0.0;
        for (double v : m) peak = std::max(peak, std::abs(v));
        for (std::size_t n = 0; n < kWorkLen; ++n) out[n] = 1.0 + 0.5 * m[n] / peak;
    } else if (scheme == AMSSB) {
        static const auto hil = hilbert_taps(65);
        const auto mh = convolve_same(m, hil);
        for (std::size_t n = 0; n < kWorkLen; ++n) out[n] = {m[n], mh[n]};
    } else {
        constexpr double kDeviation = 0.075;  // cycles per sample per unit message
        double phase = 0.0;
        for (std::size_t n = 0; n < kWorkLen; ++n) {
            phase += 2 * pi * kDeviation * m[n];
            out[n] = std::polar(1.0, phase);
        }
    }
    return window(out, rng);
}

double mean_power(const std::vector<cd>& x) {
    double p = 0.0;
    for (const auto& v : x) p += std::norm(v);
    return p / static_cast<double>(x.size());
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<int> standard_snr_grid() {
    std::vector<int> out;
    for (int s = -20; s <= 18; s += 2) out.push_back(s);
    return out;
}

bool is_standard_snr(int snr_db) { return snr_db >= -20 && snr_db <= 18 && snr_db % 2 == 0; }

FrameParts synthesize_frame(int scheme, int snr_db, std::uint64_t stream, double target_power) {
    if (scheme < 0 || scheme >= static_cast<int>(kNumClasses)) throw ConfigError("scheme index out of range");
    if (!(target_power > 0.0)) throw ConfigError("target power must be positive");
    std::mt19937_64 rng(stream);

    std::vector<cd> s;
    switch (scheme) {
        case CPFSK: s = frequency_shift_keying(false, rng); break;
        case GFSK: s = frequency_shift_keying(true, rng); break;
        case WBFM:
        case AMSSB:
        case AMDSB: s = analog_modulation(scheme, rng); break;
        default: s = linear_modulation(scheme, rng); break;
    }

    const double cfo = std::uniform_real_distribution<double>(-kMaxCarrierOffset, kMaxCarrierOffset)(rng);
    const double phase0 = std::uniform_real_distribution<double>(0.0, 2 * pi)(rng);
    for (std::size_t n = 0; n < s.size(); ++n) s[n] *= std::polar(1.0, 2 * pi * cfo * static_cast<double>(n) + phase0);

    const double gain = std::sqrt(target_power / mean_power(s));
    for (auto& v : s) v *= gain;

    // Complex circular AWGN rescaled to the exact target noise power.
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    std::vector<cd> noise(kLen);
    for (auto& v : noise) v = {normal(rng), normal(rng)};
    const double noise_power = target_power / std::pow(10.0, snr_db / 10.0);
    const double noise_gain = std::sqrt(noise_power / mean_power(noise));
    for (auto& v : noise) v *= noise_gain;

    return {std::move(s), std::move(noise)};
}

IQFrame to_frame(const FrameParts& parts) {
    std::array<double, kFrameSize> values{};
    for (std::size_t t = 0; t < kLen; ++t) {
        const cd v = parts.clean[t] + parts.noise[t];
        values[t] = v.real();
        values[kLen + t] = v.imag();
    }
    return IQFrame::from_values(std::span<const double>(values));
}

DatasetBundle generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
    if (config.frames_per_cell <= 0) throw ConfigError("frames per cell must be positive");
    std::vector<int> schemes;
    if (config.schemes.empty()) {
        for (std::size_t i = 0; i < kNumClasses; ++i) schemes.push_back(static_cast<int>(i));
    } else {
        for (const auto& name : config.schemes) {
            const auto idx = class_index(name);
            if (!idx) throw ConfigError("unknown modulation scheme '" + name + "'");
            schemes.push_back(*idx);
        }
    }
    auto snrs = config.snrs_db.empty() ? standard_snr_grid() : config.snrs_db;
    for (int snr : snrs) {
        if (!is_standard_snr(snr)) throw ConfigError("SNR " + std::to_string(snr) + " dB is not on the -20..18 step-2 grid");
    }

    auto bundle = DatasetBundle::empty(Provenance::Synthetic, seed);
    const auto per_cell = static_cast<std::size_t>(config.frames_per_cell);
    bundle.examples.reserve(schemes.size() * snrs.size() * per_cell);
    for (int scheme : schemes) {
        for (int snr : snrs) {
            const auto cell_seed = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(scheme)),
                                            static_cast<std::uint64_t>(snr + 1000));
            for (std::size_t i = 0; i < per_cell; ++i) {
                const auto parts = synthesize_frame(scheme, snr, mix_seed(cell_seed, i), config.target_power);
                bundle.examples.push_back(
                    {to_frame(parts), static_cast<std::uint8_t>(scheme), static_cast<std::int8_t>(snr)});
            }
        }
    }
    return bundle;
}

}  // namespace amc
