#include "amc/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "amc/binary_io.hpp"
#include "amc/error.hpp"

namespace amc::attacks {

namespace {

constexpr std::string_view kRecordTag = "ATKM";

double norm_of(std::span<const float> g) {
    double s = 0.0;
    for (float v : g) s += double(v) * double(v);
    return std::sqrt(s);
}

double distance(const IQFrame& a, const IQFrame& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < kFrameSize; ++i) {
        const double d = double(a.values()[i]) - double(b.values()[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

void add_direction(Directions& out, int target, std::span<const float> g) {
    const double n = norm_of(g);
    if (!(n > 0.0) || !std::isfinite(n)) {
        ++out.zero_gradient_targets;
        return;
    }
    TargetDirection d{target, std::vector<double>(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i) d.direction[i] = -double(g[i]) / n;
    out.targets.push_back(std::move(d));
}

void check_label(int y) {
    if (y < 0 || y >= int(kNumClasses)) throw PreconditionError("true label out of range");
}

AttackOutcome unperturbed(const IQFrame& frame, const Directions& dirs) {
    AttackOutcome o;
    o.adversarial = frame;
    o.zero_gradient_targets = dirs.zero_gradient_targets;
    return o;
}

double true_class_margin(const Eigen::VectorXd& scores, int y) {
    double other = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < scores.size(); ++k) {
        if (k != y) other = std::max(other, scores(k));
    }
    return scores(y) - other;
}

MinEpsilonResult min_over_targets(const Directions& dirs, const IQFrame& frame, double tolerance,
                                  const std::function<bool(const IQFrame&)>& succeeds) {
    MinEpsilonResult best;
    if (succeeds(frame)) {
        best.attackable = true;
        best.evaluations = 1;
        return best;
    }
    const double cap = 10.0 * std::sqrt(frame.norm_squared());
    best.epsilon = std::numeric_limits<double>::infinity();
    for (const auto& t : dirs.targets) {
        auto r = min_epsilon_search([&](double eps) { return succeeds(perturb(frame, t.direction, eps)); }, cap,
                                    tolerance);
        best.evaluations += r.evaluations;
        if (r.attackable && r.epsilon < best.epsilon) {
            best.epsilon = r.epsilon;
            best.attackable = true;
            best.target = t.target;
        }
    }
    if (!best.attackable) best.epsilon = cap;
    return best;
}

}  // namespace

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double epsilon_from_pnr(double pnr_linear, double snr_linear, double x_norm_sq) {
    if (!(pnr_linear > 0.0) || !(snr_linear > 0.0) || !(x_norm_sq > 0.0)) {
        throw PreconditionError("PNR, SNR and |x|^2 must be positive");
    }
    return std::sqrt(pnr_linear * x_norm_sq / (snr_linear + 1.0));
}

double pnr_from_epsilon(double epsilon, double snr_linear, double x_norm_sq) {
    if (!(epsilon >= 0.0) || !(snr_linear > 0.0) || !(x_norm_sq > 0.0)) {
        throw PreconditionError("epsilon must be non-negative; SNR and |x|^2 positive");
    }
    return epsilon * epsilon * (snr_linear + 1.0) / x_norm_sq;
}

AttackBudget AttackBudget::from_pnr_db(double pnr_db) {
    if (!std::isfinite(pnr_db)) throw ConfigError("PNR must be finite");
    return AttackBudget(true, pnr_db);
}

AttackBudget AttackBudget::from_epsilon(double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be finite and non-negative");
    return AttackBudget(false, epsilon);
}

double AttackBudget::epsilon_for(const IQFrame& frame, double snr_db) const {
    if (!is_pnr_) return value_;
    return epsilon_from_pnr(db_to_linear(value_), db_to_linear(snr_db), frame.norm_squared());
}

Directions fgm_directions_dnn(const nn::CnnModel& model, const IQFrame& frame, int y) {
    check_label(y);
    const auto trace = nn::forward(model, frame);
    const nn::Vector<float> p = nn::softmax<float>(trace.logits());
    Directions out;
    for (int t = 0; t < int(model.architecture().classes); ++t) {
        if (t == y) continue;
        nn::LinearObjective<float> obj;
        obj.logit_weights.assign(p.data(), p.data() + p.size());
        obj.logit_weights[std::size_t(t)] -= 1.0f;
        add_direction(out, t, nn::grad_input(model, trace, obj));
    }
    return out;
}

Directions fgm_directions_nr(const nr::NrModel& nr, const IQFrame& frame, int y) {
    check_label(y);
    Directions out;
    for (int t = 0; t < int(nr.svm.class_count()); ++t) {
        if (t == y) continue;
        add_direction(out, t, nr::nr_score_difference_gradient<float>(nr, frame.values(), std::size_t(y), std::size_t(t)));
    }
    return out;
}

IQFrame perturb(const IQFrame& frame, std::span<const double> direction, double epsilon) {
    if (direction.size() != kFrameSize) throw ShapeError("direction must have 256 entries");
    if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be non-negative");
    std::array<double, kFrameSize> v{};
    for (std::size_t i = 0; i < kFrameSize; ++i) v[i] = double(frame.values()[i]) + epsilon * direction[i];
    return IQFrame::from_values(std::span<const double>(v));
}

AttackOutcome fgm_dnn(const nn::CnnModel& model, const IQFrame& frame, int y, double epsilon) {
    return fgm_dnn(model, frame, y, epsilon, fgm_directions_dnn(model, frame, y));
}

AttackOutcome fgm_dnn(const nn::CnnModel& model, const IQFrame& frame, int y, double epsilon,
                      const Directions& directions) {
    check_label(y);
    if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be non-negative");
    AttackOutcome best = unperturbed(frame, directions);
    double best_p = std::numeric_limits<double>::infinity();
    for (const auto& t : directions.targets) {
        AttackOutcome o;
        o.adversarial = perturb(frame, t.direction, epsilon);
        o.epsilon_used = epsilon;
        o.target_class = t.target;
        o.perturbation_norm = distance(o.adversarial, frame);
        o.zero_gradient_targets = directions.zero_gradient_targets;
        const auto logits = nn::forward(model, o.adversarial).logits();
        if (nn::argmax<float>(logits) != y) {
            o.succeeded = true;
            return o;
        }
        const double p_y = nn::softmax<float>(logits)(y);
        if (p_y < best_p) {
            best_p = p_y;
            best = std::move(o);
        }
    }
    return best;
}

AttackOutcome fgm_nr(const nr::NrModel& nr, const IQFrame& frame, int y, double epsilon) {
    return fgm_nr(nr, frame, y, epsilon, fgm_directions_nr(nr, frame, y));
}

AttackOutcome fgm_nr(const nr::NrModel& nr, const IQFrame& frame, int y, double epsilon,
                     const Directions& directions) {
    check_label(y);
    if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be non-negative");
    AttackOutcome best = unperturbed(frame, directions);
    double best_margin = std::numeric_limits<double>::infinity();
    for (const auto& t : directions.targets) {
        AttackOutcome o;
        o.adversarial = perturb(frame, t.direction, epsilon);
        o.epsilon_used = epsilon;
        o.target_class = t.target;
        o.perturbation_norm = distance(o.adversarial, frame);
        o.zero_gradient_targets = directions.zero_gradient_targets;
        const auto d = nr::classify_with_reject(nr, o.adversarial);
        o.evaded_rejection = !d.verdict.rejected();
        if (d.argmax != y && o.evaded_rejection) {
            o.succeeded = true;
            return o;
        }
        const double margin = true_class_margin(d.scores, y);
        if (margin < best_margin) {
            best_margin = margin;
            best = std::move(o);
        }
    }
    return best;
}

IQFrame jamming(const IQFrame& frame, double epsilon, std::uint64_t seed) {
    if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be non-negative");
    if (epsilon == 0.0) return frame;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> noise(kFrameSize);
    double n = 0.0;
    while (!(n > 0.0)) {
        double s = 0.0;
        for (auto& v : noise) {
            v = normal(rng);
            s += v * v;
        }
        n = std::sqrt(s);
    }
    for (auto& v : noise) v /= n;
    return perturb(frame, noise, epsilon);
}

MinEpsilonResult min_epsilon_search(const std::function<bool(double)>& succeeds, double cap, double tolerance) {
    if (!(cap > 0.0)) throw PreconditionError("search cap must be positive");
    if (!(tolerance > 0.0)) throw PreconditionError("tolerance must be positive");
    MinEpsilonResult r;
    auto test = [&](double eps) {
        ++r.evaluations;
        return succeeds(eps);
    };
    if (test(0.0)) {
        r.attackable = true;
        return r;
    }
    double lo = 0.0;
    double hi = cap / 1024.0;
    while (!test(hi)) {
        lo = hi;
        if (hi >= cap) {
            r.epsilon = cap;
            return r;
        }
        hi = std::min(2.0 * hi, cap);
    }
    const double floor = cap * 1e-12;
    for (;;) {
        while (hi > lo * (1.0 + tolerance) && hi > floor) {
            const double mid = 0.5 * (lo + hi);
            (test(mid) ? hi : lo) = mid;
        }
        // Non-monotone predicates: confirm the point just below also fails.
        const double below = hi / (1.0 + tolerance);
        if (hi <= floor || !test(below)) break;
        hi = below;
        lo = 0.0;
    }
    r.epsilon = hi;
    r.attackable = true;
    return r;
}

MinEpsilonResult min_epsilon_dnn(const nn::CnnModel& model, const IQFrame& frame, int y, double tolerance) {
    const auto dirs = fgm_directions_dnn(model, frame, y);
    return min_over_targets(dirs, frame, tolerance, [&](const IQFrame& x) { return nn::predict(model, x) != y; });
}

MinEpsilonResult min_epsilon_nr(const nr::NrModel& nr, const IQFrame& frame, int y, double tolerance) {
    const auto dirs = fgm_directions_nr(nr, frame, y);
    return min_over_targets(dirs, frame, tolerance, [&](const IQFrame& x) {
        const auto d = nr::classify_with_reject(nr, x);
        return d.argmax != y && !d.verdict.rejected();
    });
}

// ATKM payload: u32 count, then per record u32 index, f64 pnr_db, f64 epsilon,
// i16 target (-1 = none), u8 flags.
std::vector<std::uint8_t> encode_attack_set(const AttackSet& set) {
    if (set.records.size() != set.frames.examples.size()) throw ShapeError("one record per adversarial frame");
    io::ByteWriter w;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.records.size()));
    for (const auto& r : set.records) {
        w.put<std::uint32_t>(r.original_index);
        w.put<double>(r.pnr_db);
        w.put<double>(r.epsilon);
        w.put<std::int16_t>(r.target);
        w.put<std::uint8_t>(r.flags);
    }
    const TrailerBlock block{std::string(kRecordTag), w.bytes()};
    return encode_dataset(set.frames, std::span<const TrailerBlock>(&block, 1));
}

AttackSet decode_attack_set(std::span<const std::uint8_t> bytes) {
    std::vector<TrailerBlock> extra;
    AttackSet set;
    set.frames = decode_dataset(bytes, &extra);
    const auto it = std::find_if(extra.begin(), extra.end(), [](const auto& b) { return b.tag == kRecordTag; });
    if (it == extra.end()) throw FormatError(FormatErrorKind::Invalid, "dataset has no attack metadata block");
    io::ByteReader r(it->payload);
    const auto count = r.get<std::uint32_t>();
    if (count != set.frames.examples.size()) {
        throw FormatError(FormatErrorKind::Invalid, "attack metadata count differs from the example count");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        AttackRecord rec;
        rec.original_index = r.get<std::uint32_t>();
        rec.pnr_db = r.get<double>();
        rec.epsilon = r.get<double>();
        rec.target = r.get<std::int16_t>();
        rec.flags = r.get<std::uint8_t>();
        set.records.push_back(rec);
    }
    if (r.remaining() != 0) throw FormatError(FormatErrorKind::Invalid, "trailing bytes in attack metadata");
    return set;
}

void save_attack_set(const AttackSet& set, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_attack_set(set));
}

AttackSet load_attack_set(const std::filesystem::path& path) { return decode_attack_set(io::read_file(path)); }

}  // namespace amc::attacks
