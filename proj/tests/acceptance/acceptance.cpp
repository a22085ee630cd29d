// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criteria 1-5 are exact property checks; 6-10 read a desk-scale pipeline run
// (executed on demand, skipped stage by stage when already complete); 11 runs a
// reduced pipeline twice from scratch.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "amc/attacks.hpp"
#include "amc/binary_io.hpp"
#include "amc/config.hpp"
#include "amc/neuralnet.hpp"
#include "amc/pipeline.hpp"
#include "amc/rejection.hpp"
#include "amc/svm.hpp"
#include "oracles/gradient_check.hpp"
#include "oracles/svm_oracle.hpp"

namespace {

using namespace amc;
namespace fs = std::filesystem;

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << v.detail << std::endl;
    failures += v.pass ? 0 : 1;
}

template <typename F>
void criterion(int id, const std::string& name, F&& f) {
    try {
        report(id, name, f());
    } catch (const std::exception& e) {
        report(id, name, {false, std::string("error: ") + e.what()});
    }
}

std::string read_text(const fs::path& p) {
    const auto b = io::read_file(p);
    return {b.begin(), b.end()};
}

// ---------------------------------------------------------------- exact checks

Verdict gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto params = test::check_parameter_gradients(50, 101);
    const auto input = test::check_input_gradients(50, 102, test::InputObjective::Logits);
    const auto vjp = test::check_input_gradients(50, 103, test::InputObjective::Features);
    const auto nr_model = test::probe_nr_model(104);
    const auto svm = test::check_svm_gradients(nr_model.svm, 50, 105);
    const auto nr = test::check_nr_score_gradients(100, 106);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = params.passed == params.probes && input.passed == input.probes && vjp.passed == vjp.probes &&
                      svm.passed == svm.probes && nr.passed >= 95 && secs < 120.0;
    return {pass, fmt("params %d/%d (worst %.1e), input %d/%d (%.1e), vjp %d/%d (%.1e), svm %d/%d (%.1e), "
                      "nr %d/100, %.0f s",
                      params.passed, params.probes, params.worst_rel, input.passed, input.probes, input.worst_rel,
                      vjp.passed, vjp.probes, vjp.worst_rel, svm.passed, svm.probes, svm.worst_rel, nr.passed, secs)};
}

Verdict label_smoothing() {
    std::vector<double> one_hot(11, 0.0);
    one_hot[0] = 1.0;
    const auto s = nn::smooth_labels(one_hot, 0.1);
    auto r4 = [](double v) { return std::round(v * 1e4) / 1e4; };
    bool pass = r4(s[0]) == 0.9091;
    for (std::size_t k = 1; k < 11; ++k) pass = pass && r4(s[k]) == 0.0091;
    return {pass, fmt("true %.4f, others %.4f", s[0], s[1])};
}

Verdict epsilon_pnr(const fs::path& desk, const std::vector<std::uint64_t>& seeds) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> db(-30.0, 30.0), norm(1e-3, 1e3);
    double worst_trip = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double pnr = attacks::db_to_linear(db(rng)), snr = attacks::db_to_linear(db(rng)), n2 = norm(rng);
        const double back = attacks::pnr_from_epsilon(attacks::epsilon_from_pnr(pnr, snr, n2), snr, n2);
        worst_trip = std::max(worst_trip, std::abs(back - pnr) / pnr);
    }
    double worst_norm = 0.0;
    std::size_t frames = 0;
    for (auto seed : seeds) {
        const fs::path sd = desk / ("seed-" + std::to_string(seed));
        const auto test = load_dataset(sd / "test.amcd");
        for (const auto& entry : fs::directory_iterator(sd)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("attacks-", 0) != 0) continue;
            const auto set = attacks::load_attack_set(entry.path());
            for (std::size_t i = 0; i < set.records.size(); ++i) {
                const auto& rec = set.records[i];
                const auto& orig = test.examples.at(rec.original_index).frame;
                const auto& adv = set.frames.examples[i].frame;
                double d = 0.0;
                for (std::size_t j = 0; j < kFrameSize; ++j) {
                    const double v = double(adv.values()[j]) - double(orig.values()[j]);
                    d += v * v;
                }
                d = std::sqrt(d);
                const double rel = rec.epsilon > 0 ? std::abs(d - rec.epsilon) / rec.epsilon : d;
                worst_norm = std::max(worst_norm, rel);
                ++frames;
            }
        }
    }
    return {worst_trip < 1e-12 && worst_norm < 1e-5 && frames > 0,
            fmt("round trip worst %.1e over 1000 triples; %zu emitted frames, worst norm error %.1e", worst_trip,
                frames, worst_norm)};
}

Verdict svm_solver(const fs::path& desk, const std::vector<std::uint64_t>& seeds) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> size(4, 40), dims(2, 5);
    std::normal_distribution<double> g;
    const double cs[] = {0.1, 1.0, 10.0};
    double worst_gap = 0.0, worst_kkt = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const int n = size(rng), d = dims(rng);
        Eigen::MatrixXd x(n, d);
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            y[std::size_t(i)] = i % 2 == 0 ? 1 : -1;
            for (int j = 0; j < d; ++j) x(i, j) = g(rng) + (j == 0 ? 0.8 * y[std::size_t(i)] : 0.0);
        }
        const double c = cs[inst % 3], gamma = 1.0 / double(d);
        const auto k = svm::rbf_kernel(x, x, gamma);
        const auto sol = svm::solve_dual(k, y, c);
        worst_gap = std::max(worst_gap, std::abs(sol.dual_objective - oracle::projected_gradient_dual(k, y, c, 200'000)));
        worst_kkt = std::max(worst_kkt, sol.kkt_violation);
    }
    double trained_kkt = 0.0;
    int machines = 0;
    for (auto seed : seeds) {
        for (auto v : {"plain", "lsgna"}) {
            const auto p = desk / ("seed-" + std::to_string(seed)) / (std::string("svm-") + v + ".json");
            const auto j = nlohmann::json::parse(read_text(p));
            trained_kkt = std::max(trained_kkt, j["max_kkt_violation"].get<double>());
            machines += int(j["support_vectors"].size());
        }
    }
    return {worst_gap < 1e-3 && worst_kkt < 1e-3 && trained_kkt < 1e-3,
            fmt("20 instances: worst dual gap %.1e, worst KKT %.1e; %d desk machines: worst KKT %.1e", worst_gap,
                worst_kkt, machines, trained_kkt)};
}

Verdict calibration(const fs::path& desk, const ExperimentConfig& cfg) {
    bool pass = true;
    std::string detail;
    for (auto seed : cfg.seeds) {
        const fs::path sd = desk / ("seed-" + std::to_string(seed));
        const auto test = load_dataset(sd / "test.amcd");
        for (auto v : {"plain", "lsgna"}) {
            auto model = nr::load_nr_model(sd / (std::string("nr-") + v + ".amcn"));
            const double theta = model.theta;
            const auto split = build_eval_split(
                [&](const LabeledExample& ex) { return pipeline::nr_argmax(model, ex.frame); }, test, cfg.eval_snr_db,
                cfg.eval_samples, seed);
            const auto set_one = test.subset(split.set_one);
            std::size_t rejected = 0;
            for (const auto& ex : set_one.examples) rejected += nr::classify_with_reject(model, ex.frame).verdict.rejected();
            const double rate = double(rejected) / double(set_one.size());
            const double again = nr::calibrate_threshold(model, set_one.examples, cfg.rejection_rate).theta;
            pass = pass && std::abs(rate - cfg.rejection_rate) <= 0.01 && again == theta;
            detail += fmt("%sseed %llu %s %.2f%% of %zu%s", detail.empty() ? "" : "; ", (unsigned long long)seed, v,
                          100 * rate, set_one.size(), again == theta ? "" : " (recalibration moved theta)");
        }
    }
    return {pass, detail};
}

// ------------------------------------------------------------- desk-run trends

struct SeedRows {
    std::vector<analysis::EvalRow> rows;

    double accuracy(const std::string& system, analysis::Perturbation p, double pnr, const std::string& set) const {
        for (const auto& r : rows) {
            if (r.system == system && r.perturbation == p && !r.clean && r.pnr_db == pnr && r.set == set &&
                r.scheme == "all") {
                return r.accuracy();
            }
        }
        throw std::runtime_error(fmt("no row for %s at %g dB, set %s", system.c_str(), pnr, set.c_str()));
    }
};

std::map<std::uint64_t, SeedRows> load_rows(const fs::path& desk, const std::vector<std::uint64_t>& seeds) {
    std::map<std::uint64_t, SeedRows> out;
    for (auto s : seeds) {
        out[s].rows = pipeline::parse_rows_csv(read_text(desk / ("seed-" + std::to_string(s)) / "rows.csv"));
    }
    return out;
}

constexpr auto kFgm = analysis::Perturbation::Fgm;
constexpr auto kJam = analysis::Perturbation::Jamming;

Verdict attack_efficacy(const std::map<std::uint64_t, SeedRows>& rows) {
    bool pass = true;
    std::string detail = "DNN set I at 0 dB:";
    for (const auto& [seed, r] : rows) {
        const double a = r.accuracy("dnn", kFgm, 0.0, "I");
        pass = pass && a < 0.10;
        detail += fmt(" seed %llu %.1f%%", (unsigned long long)seed, 100 * a);
    }
    return {pass, detail};
}

Verdict defense_ordering(const std::map<std::uint64_t, SeedRows>& rows) {
    bool pass = true;
    std::string detail;
    for (double pnr : {-10.0, 0.0}) {
        double m_dnn = 0, m_nr = 0, m_ls = 0;
        for (const auto& [seed, r] : rows) {
            const double dnn = r.accuracy("dnn", kFgm, pnr, "I"), nr = r.accuracy("nr", kFgm, pnr, "I"),
                         ls = r.accuracy("ls-gna-nr", kFgm, pnr, "I");
            // Single seeds may invert the NR variants by up to 2 points; the full ordering is judged on the mean.
            const bool seed_ok = ls >= nr - 0.02;
            pass = pass && seed_ok;
            if (!seed_ok) detail += fmt("seed %llu at %g dB out of order; ", (unsigned long long)seed, pnr);
            m_dnn += dnn / double(rows.size());
            m_nr += nr / double(rows.size());
            m_ls += ls / double(rows.size());
        }
        pass = pass && m_ls >= m_nr && m_nr >= m_dnn;
        if (pnr == -10.0) pass = pass && m_ls - m_dnn >= 0.20;
        detail += fmt("%g dB mean LS-GNA NR %.1f%%, NR %.1f%%, DNN %.1f%%; ", pnr, 100 * m_ls, 100 * m_nr, 100 * m_dnn);
    }
    detail.resize(detail.size() - 2);
    return {pass, detail};
}

Verdict amplification(const fs::path& desk, const std::vector<std::uint64_t>& seeds) {
    std::vector<double> adv, noisy;
    std::vector<std::string> names;
    for (auto seed : seeds) {
        std::stringstream ss(read_text(desk / ("seed-" + std::to_string(seed)) / "amplification.csv"));
        std::string line;
        std::getline(ss, line);
        for (std::size_t l = 0; std::getline(ss, line); ++l) {
            std::stringstream ls(line);
            std::string name, a, n;
            std::getline(ls, name, ',');
            std::getline(ls, a, ',');
            std::getline(ls, n, ',');
            if (adv.size() <= l) {
                adv.push_back(0.0);
                noisy.push_back(0.0);
                names.push_back(name);
            }
            adv[l] += std::stod(a) / double(seeds.size());
            noisy[l] += std::stod(n) / double(seeds.size());
        }
    }
    bool monotone = true;
    for (std::size_t l = 1; l < adv.size(); ++l) monotone = monotone && adv[l] >= 0.9 * adv[l - 1];
    const double ratio = adv.back() / noisy.back();
    std::string profile;
    for (std::size_t l = 0; l < adv.size(); ++l) profile += fmt("%s%s %.4f/%.4f", l ? ", " : "", names[l].c_str(), adv[l], noisy[l]);
    return {ratio >= 3.0 && monotone,
            fmt("final-layer ratio %.1f; %s; adversarial/noisy means: %s", ratio,
                monotone ? "non-decreasing within 10%" : "drops by more than 10% between layers", profile.c_str())};
}

Verdict epsilon_l_direction(const fs::path& desk, const std::vector<std::uint64_t>& seeds) {
    bool pass = true;
    std::string detail;
    for (auto seed : seeds) {
        std::map<std::string, double> mean, median;
        std::stringstream ss(read_text(desk / ("seed-" + std::to_string(seed)) / "epsilon-l.csv"));
        std::string line;
        std::getline(ss, line);
        while (std::getline(ss, line)) {
            std::stringstream ls(line);
            std::string sys, m, md;
            std::getline(ls, sys, ',');
            std::getline(ls, m, ',');
            std::getline(ls, md, ',');
            mean[sys] = std::stod(m);
            median[sys] = std::stod(md);
        }
        // The criterion is on the mean; medians are printed because one flat-gradient frame can dominate it.
        pass = pass && mean.at("ls-gna-nr") > mean.at("nr");
        detail += fmt("%sseed %llu mean LS-GNA %.5g vs plain %.5g (median %.5f vs %.5f)", detail.empty() ? "" : "; ",
                      (unsigned long long)seed, mean.at("ls-gna-nr"), mean.at("nr"), median.at("ls-gna-nr"),
                      median.at("nr"));
    }
    return {pass, detail};
}

Verdict jamming(const std::map<std::uint64_t, SeedRows>& rows, const std::vector<double>& pnrs) {
    bool pass = true;
    double tightest = 1.0;
    std::string where;
    for (const auto& [seed, r] : rows) {
        for (auto sys : {"nr", "ls-gna-nr"}) {
            for (double p : pnrs) {
                for (auto set : {"I", "all"}) {
                    const double margin = r.accuracy(sys, kJam, p, set) - r.accuracy(sys, kFgm, p, set);
                    if (margin < tightest) {
                        tightest = margin;
                        where = fmt("%s seed %llu %g dB set %s", sys, (unsigned long long)seed, p, set);
                    }
                    pass = pass && margin >= 0.0;
                }
            }
        }
    }
    return {pass, fmt("smallest jamming-minus-FGM margin %.1f points (%s)", 100 * tightest, where.c_str())};
}

Verdict determinism(const fs::path& config, const fs::path& work) {
    unsetenv(pipeline::kCacheEnv);
    std::vector<fs::path> dirs{work / "determinism-a", work / "determinism-b"};
    for (const auto& d : dirs) {
        fs::remove_all(d);
        auto cfg = parse_config(config);
        cfg.output_dir = d.string();
        pipeline::run_pipeline(cfg);
    }
    std::size_t compared = 0;
    std::vector<std::string> differing;
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
        if (!e.is_regular_file()) continue;
        const auto rel = e.path().lexically_relative(dirs[0]);
        // The manifest echoes output_dir; timing is wall-clock.
        if (rel == "manifest.json" || rel == "timing.json") continue;
        ++compared;
        if (!fs::is_regular_file(dirs[1] / rel) || read_text(e.path()) != read_text(dirs[1] / rel)) {
            differing.push_back(rel.string());
        }
    }
    std::size_t count_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(dirs[1])) count_b += e.is_regular_file() ? 1 : 0;
    const bool pass = differing.empty() && compared > 0 && count_b == compared + 2;
    return {pass, fmt("%zu artifacts compared across two fresh runs, %zu differ%s%s", compared, differing.size(),
                      differing.empty() ? "" : ", first: ", differing.empty() ? "" : differing[0].c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria for the NR / LS-GNA toolkit"};
    std::string desk_config, det_config, work;
    bool skip_desk = false;
    app.add_option("--desk-config", desk_config, "desk-scale pipeline config")->required();
    app.add_option("--determinism-config", det_config, "reduced config run twice for criterion 11")->required();
    app.add_option("--work", work, "work directory for pipeline runs")->required();
    app.add_flag("--exact-only", skip_desk, "run criteria 1 and 2 only");
    CLI11_PARSE(app, argc, argv);

    criterion(1, "gradient correctness", gradients);
    criterion(2, "label smoothing exactness", label_smoothing);
    if (skip_desk) return failures ? 1 : 0;

    const fs::path work_dir = fs::absolute(work);
    fs::create_directories(work_dir);
    auto cfg = parse_config(desk_config);
    cfg.output_dir = (work_dir / "desk").string();
    const fs::path desk = cfg.output_dir;
    bool desk_ok = true;
    try {
        unsetenv(pipeline::kCacheEnv);
        const auto t0 = std::chrono::steady_clock::now();
        const auto result = pipeline::run_pipeline(cfg, [](const std::string& m) { std::cerr << m << "\n"; });
        std::size_t ran = 0;
        for (const auto& t : result.timings) ran += t.status == "ran";
        std::cout << "desk run: " << result.timings.size() << " stages, " << ran << " executed, "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s" << std::endl;
    } catch (const std::exception& e) {
        std::cout << "desk run failed: " << e.what() << std::endl;
        desk_ok = false;
    }

    criterion(3, "epsilon/PNR round trip and perturbation norms", [&] { return epsilon_pnr(desk, cfg.seeds); });
    criterion(4, "SVM solver", [&] { return svm_solver(desk, cfg.seeds); });
    criterion(5, "rejection calibration", [&] { return calibration(desk, cfg); });
    std::map<std::uint64_t, SeedRows> rows;
    if (desk_ok) {
        try {
            rows = load_rows(desk, cfg.seeds);
        } catch (const std::exception& e) {
            std::cout << "cannot read desk rows: " << e.what() << std::endl;
        }
    }
    auto need_rows = [&] {
        if (rows.size() != cfg.seeds.size()) throw std::runtime_error("desk-run rows unavailable");
    };
    criterion(6, "attack efficacy on the undefended DNN", [&] {
        need_rows();
        return attack_efficacy(rows);
    });
    criterion(7, "defense ordering", [&] {
        need_rows();
        return defense_ordering(rows);
    });
    criterion(8, "perturbation amplification", [&] { return amplification(desk, cfg.seeds); });
    criterion(9, "epsilon_L direction", [&] { return epsilon_l_direction(desk, cfg.seeds); });
    criterion(10, "jamming versus FGM", [&] {
        need_rows();
        return jamming(rows, cfg.pnr_db);
    });
    criterion(11, "determinism", [&] { return determinism(det_config, work_dir); });

    std::cout << (failures ? "FAILED " : "ALL PASSED ") << (11 - failures) << "/11" << std::endl;
    return failures ? 1 : 0;
}
