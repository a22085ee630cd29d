#include "amc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <tuple>

#include "amc/error.hpp"

namespace amc::analysis {

namespace {

std::vector<double> to_double(const nn::Vector<float>& v) { return {v.data(), v.data() + v.size()}; }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string format_pnr(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine distance needs equal-length vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    bool equal = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
        equal = equal && a[i] == b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw PreconditionError("cosine distance of a zero vector");
    if (equal) return 0.0;
    return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

AmplificationProfile amplification_profile(const nn::CnnModel& model, std::span<const LabeledExample> frames,
                                           const attacks::AttackBudget& budget, std::uint64_t seed) {
    constexpr std::size_t kLayers = nn::ForwardTrace<float>::kLayerCount;
    AmplificationProfile p;
    for (std::size_t l = 0; l < kLayers; ++l) p.layer_names.emplace_back(nn::ForwardTrace<float>::layer_name(l));
    std::vector<double> sum_adv(kLayers, 0.0), sum_noisy(kLayers, 0.0);
    std::vector<std::size_t> n_adv(kLayers, 0), n_noisy(kLayers, 0);

    auto accumulate = [&](const nn::ForwardTrace<float>& base, const nn::ForwardTrace<float>& other,
                          std::vector<double>& sum, std::vector<std::size_t>& count) {
        for (std::size_t l = 0; l < kLayers; ++l) {
            const auto a = to_double(base.layer(l));
            const auto b = to_double(other.layer(l));
            try {
                sum[l] += cosine_distance(a, b);
                ++count[l];
            } catch (const PreconditionError&) {
                ++p.skipped_zero_norm;
            }
        }
    };

    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& ex = frames[i];
        const double eps = budget.epsilon_for(ex.frame, ex.snr_db);
        const auto adv = attacks::fgm_dnn(model, ex.frame, ex.label, eps).adversarial;
        const auto noisy = attacks::jamming(ex.frame, eps, mix_seed(seed, i));
        const auto base = nn::forward(model, ex.frame);
        accumulate(base, nn::forward(model, adv), sum_adv, n_adv);
        accumulate(base, nn::forward(model, noisy), sum_noisy, n_noisy);
        ++p.n_pairs;
    }
    for (std::size_t l = 0; l < kLayers; ++l) {
        p.mean_cosine_adv.push_back(n_adv[l] ? sum_adv[l] / double(n_adv[l]) : 0.0);
        p.mean_cosine_noisy.push_back(n_noisy[l] ? sum_noisy[l] / double(n_noisy[l]) : 0.0);
    }
    return p;
}

EpsilonL epsilon_l(const Eigen::VectorXd& scores, int y,
                   const std::function<std::vector<double>(int, int)>& difference_gradient) {
    if (y < 0 || y >= scores.size() || scores.size() < 2) throw PreconditionError("true class out of range");
    EpsilonL r;
    for (Eigen::Index k = 0; k < scores.size(); ++k) {
        if (k != y && (r.competitor < 0 || scores(k) > scores(r.competitor))) r.competitor = int(k);
    }
    const double numerator = scores(y) - scores(r.competitor);
    double l1 = 0.0;
    for (double g : difference_gradient(y, r.competitor)) l1 += std::abs(g);
    r.value = l1 > 0.0 ? numerator / l1 : kInfiniteEpsilonL;
    return r;
}

EpsilonL robustness_epsilon_l(const nr::NrModel& nr, const IQFrame& frame, int y) {
    const auto scores = nr::nr_scores(nr, frame);
    return epsilon_l(scores, y, [&](int a, int b) {
        const auto g = nr::nr_score_difference_gradient<float>(nr, frame.values(), std::size_t(a), std::size_t(b));
        return std::vector<double>(g.begin(), g.end());
    });
}

EpsilonLSummary mean_epsilon_l(const nr::NrModel& nr, std::span<const LabeledExample> examples) {
    EpsilonLSummary s;
    std::vector<double> used;
    for (const auto& ex : examples) {
        const auto scores = nr::nr_scores(nr, ex.frame);
        if (nr::decide(scores, -std::numeric_limits<double>::infinity()).argmax != ex.label) {
            ++s.n_misclassified;
            continue;
        }
        const auto e = robustness_epsilon_l(nr, ex.frame, ex.label);
        if (std::isinf(e.value)) {
            ++s.n_infinite;
            continue;
        }
        used.push_back(e.value);
    }
    s.n_used = used.size();
    if (!used.empty()) {
        s.mean = std::accumulate(used.begin(), used.end(), 0.0) / double(used.size());
        std::sort(used.begin(), used.end());
        const std::size_t h = used.size() / 2;
        s.median = used.size() % 2 ? used[h] : 0.5 * (used[h - 1] + used[h]);
    }
    return s;
}

std::vector<attacks::AttackOutcome> System::fgm_sweep(const IQFrame& frame, int y,
                                                      std::span<const double> epsilons) const {
    std::vector<attacks::AttackOutcome> out;
    for (double eps : epsilons) out.push_back(fgm(frame, y, eps));
    return out;
}

nr::Verdict DnnSystem::classify(const IQFrame& frame) const { return nr::Verdict::of(nn::predict(model_, frame)); }

attacks::AttackOutcome DnnSystem::fgm(const IQFrame& frame, int y, double epsilon) const {
    return attacks::fgm_dnn(model_, frame, y, epsilon);
}

std::vector<attacks::AttackOutcome> DnnSystem::fgm_sweep(const IQFrame& frame, int y,
                                                         std::span<const double> epsilons) const {
    const auto dirs = attacks::fgm_directions_dnn(model_, frame, y);
    std::vector<attacks::AttackOutcome> out;
    for (double eps : epsilons) out.push_back(attacks::fgm_dnn(model_, frame, y, eps, dirs));
    return out;
}

nr::Verdict NrSystem::classify(const IQFrame& frame) const { return nr::classify_with_reject(model_, frame).verdict; }

attacks::AttackOutcome NrSystem::fgm(const IQFrame& frame, int y, double epsilon) const {
    return attacks::fgm_nr(model_, frame, y, epsilon);
}

std::vector<attacks::AttackOutcome> NrSystem::fgm_sweep(const IQFrame& frame, int y,
                                                        std::span<const double> epsilons) const {
    const auto dirs = attacks::fgm_directions_nr(model_, frame, y);
    std::vector<attacks::AttackOutcome> out;
    for (double eps : epsilons) out.push_back(attacks::fgm_nr(model_, frame, y, eps, dirs));
    return out;
}

const char* to_string(Perturbation p) { return p == Perturbation::Fgm ? "fgm" : "jamming"; }
const char* to_string(CountingPolicy p) { return p == CountingPolicy::Lenient ? "lenient" : "strict"; }

bool counts_as_correct(const nr::Verdict& v, int label, bool perturbed, CountingPolicy policy) {
    if (v.rejected()) return perturbed && policy == CountingPolicy::Lenient;
    return v.label() == label;
}

const EvalRow& EvalReport::find(bool clean, double pnr_db, const std::string& set, const std::string& scheme) const {
    for (const auto& r : rows) {
        if (r.clean == clean && (clean || r.pnr_db == pnr_db) && r.set == set && r.scheme == scheme) return r;
    }
    throw PreconditionError("no evaluation row for set " + set + ", scheme " + scheme +
                            (clean ? ", clean" : ", PNR " + format_pnr(pnr_db) + " dB"));
}

EvalReport evaluate(const System& system, const DatasetBundle& test, const EvalSplit& split,
                    std::span<const double> pnr_db, const EvalOptions& options) {
    if (pnr_db.empty()) throw PreconditionError("PNR list is empty");
    EvalReport report;
    report.system = system.tag();
    report.perturbation = options.perturbation;
    report.policy = options.policy;

    const std::size_t n_steps = pnr_db.size() + 1;  // step 0 is clean
    const std::size_t n_schemes = kNumClasses + 1;  // slot 0 is "all"
    struct Count {
        std::size_t n = 0, correct = 0, rejected = 0;
    };
    // counts[step][set 0=I 1=II 2=all][scheme slot]
    std::vector<std::array<std::vector<Count>, 3>> counts(n_steps);
    for (auto& step : counts) {
        for (auto& s : step) s.assign(n_schemes, {});
    }
    auto record = [&](std::size_t step, int set, int label, const nr::Verdict& v, bool perturbed) {
        const bool ok = counts_as_correct(v, label, perturbed, options.policy);
        for (int s : {set, 2}) {
            for (std::size_t slot : {std::size_t(0), std::size_t(label) + 1}) {
                auto& c = counts[step][std::size_t(s)][slot];
                ++c.n;
                c.correct += ok;
                c.rejected += v.rejected();
            }
        }
    };

    std::vector<double> eps(pnr_db.size());
    for (int set = 0; set < 2; ++set) {
        for (auto idx : set == 0 ? split.set_one : split.set_two) {
            const auto& ex = test.examples.at(idx);
            record(0, set, ex.label, system.classify(ex.frame), false);
            for (std::size_t p = 0; p < pnr_db.size(); ++p) {
                eps[p] = attacks::AttackBudget::from_pnr_db(pnr_db[p]).epsilon_for(ex.frame, ex.snr_db);
            }
            std::vector<attacks::AttackOutcome> outcomes;
            if (options.perturbation == Perturbation::Fgm) {
                outcomes = system.fgm_sweep(ex.frame, ex.label, eps);
            } else {
                for (std::size_t p = 0; p < pnr_db.size(); ++p) {
                    attacks::AttackOutcome o;
                    o.adversarial = attacks::jamming(ex.frame, eps[p], mix_seed(mix_seed(options.seed, idx), p));
                    o.epsilon_used = eps[p];
                    outcomes.push_back(std::move(o));
                }
            }
            for (std::size_t p = 0; p < pnr_db.size(); ++p) {
                report.attack_successes += outcomes[p].succeeded;
                record(p + 1, set, ex.label, system.classify(outcomes[p].adversarial), true);
                if (options.on_outcome) options.on_outcome(idx, pnr_db[p], outcomes[p]);
            }
        }
    }

    static const char* kSets[3] = {"I", "II", "all"};
    for (std::size_t step = 0; step < n_steps; ++step) {
        for (std::size_t s = 0; s < 3; ++s) {
            for (std::size_t slot = 0; slot < n_schemes; ++slot) {
                const auto& c = counts[step][s][slot];
                if (slot > 0 && c.n == 0) continue;
                EvalRow row;
                row.system = report.system;
                row.perturbation = options.perturbation;
                row.clean = step == 0;
                row.pnr_db = step == 0 ? 0.0 : pnr_db[step - 1];
                row.set = kSets[s];
                row.scheme = slot == 0 ? "all" : std::string(class_names()[slot - 1]);
                row.n = c.n;
                row.correct = c.correct;
                row.rejected = c.rejected;
                report.rows.push_back(std::move(row));
            }
        }
    }
    return report;
}

ModulationTable per_modulation_table(const EvalReport& reference, std::span<const EvalReport> reports,
                                     double floor) {
    ModulationTable table;
    std::vector<std::tuple<const EvalReport*, double>> cols;
    for (const auto& r : reports) {
        for (const auto& row : r.rows) {
            if (row.clean || row.set != "all" || row.scheme != "all") continue;
            cols.emplace_back(&r, row.pnr_db);
            table.columns.push_back(r.system + "@" + format_pnr(row.pnr_db) + "dB");
        }
    }
    for (auto name : class_names()) {
        const std::string scheme(name);
        const EvalRow* clean = nullptr;
        for (const auto& row : reference.rows) {
            if (row.clean && row.set == "all" && row.scheme == scheme) clean = &row;
        }
        if (!clean || clean->accuracy() < floor) continue;
        TableRow tr{scheme, clean->accuracy(), {}};
        for (const auto& [report, pnr] : cols) {
            double cell = 0.0;
            for (const auto& row : report->rows) {
                if (!row.clean && row.pnr_db == pnr && row.set == "all" && row.scheme == scheme) cell = row.accuracy();
            }
            tr.cells.push_back(cell);
        }
        table.rows.push_back(std::move(tr));
    }
    return table;
}

std::string rows_csv_header() { return "system,perturbation,pnr_db,set,scheme,n,correct,rejected,accuracy"; }

std::string to_csv_row(const EvalRow& row) {
    return row.system + "," + to_string(row.perturbation) + "," + (row.clean ? "clean" : format_pnr(row.pnr_db)) +
           "," + row.set + "," + row.scheme + "," + std::to_string(row.n) + "," + std::to_string(row.correct) + "," +
           std::to_string(row.rejected) + "," + format_double(row.accuracy());
}

std::string table_csv(const ModulationTable& table) {
    std::string out = "scheme,clean_accuracy";
    for (const auto& c : table.columns) out += "," + c;
    out += "\n";
    for (const auto& r : table.rows) {
        out += r.scheme + "," + format_double(r.clean_accuracy);
        for (double v : r.cells) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

}  // namespace amc::analysis
