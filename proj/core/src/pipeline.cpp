#include "amc/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "amc/attacks.hpp"
#include "amc/binary_io.hpp"
#include "amc/error.hpp"

namespace amc::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError(FormatErrorKind::Io, "cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    io::write_file_atomic(p, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string hash_text(const std::string& s) {
    return io::sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::parse_error& e) {
        throw FormatError(FormatErrorKind::Invalid, p.string() + ": " + e.what());
    }
}

std::string fmt(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", d);
    return buf;
}

std::string fmt_g(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", d);
    return buf;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

std::string RunManifest::to_json() const {
    json j;
    j["toolkit_version"] = toolkit_version;
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    json stages_j = json::array();
    for (const auto& s : stages) {
        stages_j.push_back({{"name", s.name}, {"key", s.key}, {"inputs", s.inputs}, {"outputs", s.outputs}});
    }
    j["stages"] = stages_j;
    return j.dump(2) + "\n";
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw Error("run directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                    " if no run is active)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

StageRunner::StageRunner(fs::path dir, std::optional<fs::path> cache_dir, Logger log)
    : dir_(std::move(dir)), cache_dir_(std::move(cache_dir)), log_(std::move(log)) {}

std::string StageRunner::relative(const fs::path& p) const { return p.lexically_relative(dir_).generic_string(); }

void StageRunner::quarantine(const std::string& name, const std::string& key, const std::vector<fs::path>& outputs) {
    std::string safe = name;
    std::replace(safe.begin(), safe.end(), '/', '_');
    const fs::path q = dir_ / "quarantine" / (safe + "-" + key.substr(0, 12));
    for (const auto& out : outputs) {
        for (const fs::path& p : {out, fs::path(out.string() + ".partial")}) {
            if (!fs::exists(p)) continue;
            fs::create_directories(q);
            std::error_code ec;
            fs::rename(p, q / p.filename(), ec);
        }
    }
}

void StageRunner::run(const std::string& name, const std::string& params, const std::vector<fs::path>& inputs,
                      const std::vector<fs::path>& outputs, const std::function<void()>& body) {
    const double t0 = now_seconds();
    StageRecord rec;
    rec.name = name;
    std::string material = std::string(kToolkitVersion) + "\n" + name + "\n" + params + "\n";
    for (const auto& in : inputs) {
        const auto h = io::sha256_file(in);
        rec.inputs[relative(in)] = h;
        material += relative(in) + "=" + h + "\n";
    }
    rec.key = hash_text(material);

    auto outputs_match = [&](const std::map<std::string, std::string>& expected) {
        for (const auto& out : outputs) {
            const auto it = expected.find(relative(out));
            if (it == expected.end() || !fs::is_regular_file(out) || io::sha256_file(out) != it->second) return false;
        }
        return true;
    };
    auto finish = [&](const std::string& status) {
        for (const auto& out : outputs) rec.outputs[relative(out)] = io::sha256_file(out);
        json r;
        r["key"] = rec.key;
        r["outputs"] = rec.outputs;
        const fs::path rec_path = dir_ / ".stages" / (name + ".json");
        fs::create_directories(rec_path.parent_path());
        write_text(rec_path, r.dump(2) + "\n");
        records_.push_back(rec);
        timings_.push_back({name, now_seconds() - t0, status});
        if (log_) log_("[" + name + "] " + status);
    };

    const fs::path rec_path = dir_ / ".stages" / (name + ".json");
    if (fs::is_regular_file(rec_path)) {
        const json old = read_json(rec_path);
        if (old.value("key", "") == rec.key &&
            outputs_match(old.value("outputs", json::object()).get<std::map<std::string, std::string>>())) {
            finish("skipped");
            return;
        }
    }

    if (cache_dir_) {
        const fs::path entry = *cache_dir_ / rec.key;
        if (fs::is_regular_file(entry / "outputs.json")) {
            const auto expected =
                read_json(entry / "outputs.json").get<std::map<std::string, std::string>>();
            bool ok = true;
            for (const auto& out : outputs) {
                const fs::path src = entry / relative(out);
                const auto it = expected.find(relative(out));
                if (it == expected.end() || !fs::is_regular_file(src) || io::sha256_file(src) != it->second) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                for (const auto& out : outputs) {
                    fs::create_directories(out.parent_path());
                    fs::copy_file(entry / relative(out), out, fs::copy_options::overwrite_existing);
                }
                finish("cached");
                return;
            }
        }
    }

    if (log_) log_("[" + name + "] running");
    try {
        body();
        for (const auto& out : outputs) {
            if (!fs::is_regular_file(out)) throw Error("stage did not produce " + relative(out));
        }
    } catch (const std::exception& e) {
        quarantine(name, rec.key, outputs);
        if (log_) log_("[" + name + "] failed: " + e.what());
        throw;
    }
    finish("ran");

    if (cache_dir_) {
        const fs::path entry = *cache_dir_ / rec.key;
        for (const auto& out : outputs) {
            fs::create_directories((entry / relative(out)).parent_path());
            fs::copy_file(out, entry / relative(out), fs::copy_options::overwrite_existing);
        }
        write_text(entry / "outputs.json", json(rec.outputs).dump(2) + "\n");
    }
}

std::optional<fs::path> cache_dir_from_env() {
    const char* v = std::getenv(kCacheEnv);
    if (!v || !*v) return std::nullopt;
    return fs::path(v);
}

svm::OvaTrainResult train_svm_on(const nn::CnnModel& cnn, const DatasetBundle& train, std::size_t n_features,
                                 const svm::CvGrid& grid, bool standardize, std::uint64_t seed) {
    std::vector<std::size_t> idx(train.examples.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > n_features) {
        std::mt19937_64 rng(mix_seed(seed, 0x5F3));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n_features);
        std::sort(idx.begin(), idx.end());
    }
    const auto sub = train.subset(idx);
    const Eigen::MatrixXd features = nn::extract_features(cnn, sub.examples);
    std::vector<int> labels;
    for (const auto& ex : sub.examples) labels.push_back(ex.label);
    svm::TrainOptions opts;
    opts.standardize = standardize;
    return svm::train_ova(features, labels, cnn.architecture().classes, grid, seed, opts);
}

int nr_argmax(const nr::NrModel& nr, const IQFrame& frame) {
    return nr::decide(nr::nr_scores(nr, frame), -std::numeric_limits<double>::infinity()).argmax;
}

std::unique_ptr<analysis::System> load_system(const std::string& tag, const fs::path& model) {
    if (tag == "dnn") return std::make_unique<analysis::DnnSystem>(tag, nn::load_checkpoint(model));
    return std::make_unique<analysis::NrSystem>(tag, nr::load_nr_model(model));
}

CleanScorer clean_scorer(const analysis::System& system) {
    if (const auto* d = dynamic_cast<const analysis::DnnSystem*>(&system)) {
        return [d](const LabeledExample& ex) { return nn::predict(d->model(), ex.frame); };
    }
    if (const auto* n = dynamic_cast<const analysis::NrSystem*>(&system)) {
        return [n](const LabeledExample& ex) { return nr_argmax(n->model(), ex.frame); };
    }
    return [&system](const LabeledExample& ex) {
        const auto v = system.classify(ex.frame);
        return v.rejected() ? -1 : v.label();
    };
}

std::vector<analysis::EvalRow> parse_rows_csv(const std::string& text) {
    std::vector<analysis::EvalRow> rows;
    std::stringstream ss(text);
    std::string line;
    bool header = true;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (header) {
            if (line != analysis::rows_csv_header()) throw FormatError(FormatErrorKind::Invalid, "unexpected CSV header");
            header = false;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw FormatError(FormatErrorKind::Invalid, "malformed CSV row: " + line);
        analysis::EvalRow r;
        r.system = f[0];
        r.perturbation = f[1] == "fgm" ? analysis::Perturbation::Fgm : analysis::Perturbation::Jamming;
        r.clean = f[2] == "clean";
        r.pnr_db = r.clean ? 0.0 : std::stod(f[2]);
        r.set = f[3];
        r.scheme = f[4];
        r.n = std::stoul(f[5]);
        r.correct = std::stoul(f[6]);
        r.rejected = std::stoul(f[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void merge_runs(const std::vector<fs::path>& runs, const fs::path& out_dir) {
    struct Acc {
        std::vector<double> values;
    };
    std::map<std::tuple<std::string, std::string, std::string, std::string, std::string>, Acc> cells;
    std::vector<std::tuple<std::string, std::string, std::string, std::string, std::string>> order;
    std::string merged = "run,seed," + analysis::rows_csv_header() + "\n";
    for (const auto& run : runs) {
        std::vector<fs::path> seed_dirs;
        for (const auto& e : fs::directory_iterator(run)) {
            if (e.is_directory() && e.path().filename().string().rfind("seed-", 0) == 0) seed_dirs.push_back(e.path());
        }
        std::sort(seed_dirs.begin(), seed_dirs.end());
        if (seed_dirs.empty()) throw PreconditionError("no seed directories under " + run.string());
        for (const auto& sd : seed_dirs) {
            const auto seed = sd.filename().string().substr(5);
            for (const auto& r : parse_rows_csv(read_text(sd / "rows.csv"))) {
                merged += run.filename().string() + "," + seed + "," + analysis::to_csv_row(r) + "\n";
                const auto key = std::make_tuple(r.system, std::string(analysis::to_string(r.perturbation)),
                                                 r.clean ? std::string("clean") : fmt_g(r.pnr_db), r.set, r.scheme);
                if (!cells.count(key)) order.push_back(key);
                cells[key].values.push_back(r.accuracy());
            }
        }
    }
    std::string agg = "system,perturbation,pnr_db,set,scheme,runs,mean_accuracy,std_accuracy\n";
    for (const auto& key : order) {
        const auto& v = cells[key].values;
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / double(v.size() - 1)) : 0.0;
        const auto& [sys, pert, pnr, set, scheme] = key;
        agg += sys + "," + pert + "," + pnr + "," + set + "," + scheme + "," + std::to_string(v.size()) + "," +
               fmt(mean) + "," + fmt(sd) + "\n";
    }
    fs::create_directories(out_dir);
    write_text(out_dir / "rows.csv", merged);
    write_text(out_dir / "aggregate.csv", agg);
}

namespace {

struct SystemFiles {
    std::string tag;
    std::string variant;  // plain | lsgna
    fs::path model;       // CNN checkpoint for dnn, NR bundle otherwise
    std::vector<fs::path> model_inputs;
};

std::string training_params(const nn::TrainConfig& t, bool augment, std::uint64_t seed) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "epochs=" << t.epochs << ";batch=" << t.batch_size << ";lr=" << t.learning_rate << ";mu=" << t.momentum
       << ";alpha=" << t.ls_alpha << ";gna=" << t.gna_variance << ";augment=" << augment << ";seed=" << seed;
    return ss.str();
}

std::string echo_subset(const ExperimentConfig& c, std::initializer_list<const char*> keys) {
    std::string out;
    for (const auto& [k, v] : c.echo()) {
        for (const char* want : keys) {
            if (k == want) out += k + "=" + v + ";";
        }
    }
    return out;
}

json calibration_json(const nr::Calibration& cal, const EvalSplit& split, double target) {
    return {{"theta", cal.theta},
            {"target_rate", target},
            {"achieved_rate", cal.achieved_rate},
            {"achievable", cal.achievable},
            {"set_one", split.set_one.size()},
            {"set_two", split.set_two.size()}};
}

void run_seed(const ExperimentConfig& cfg, std::uint64_t seed, StageRunner& runner, const fs::path& root,
              const Logger& log) {
    const std::string sname = "seed-" + std::to_string(seed);
    const fs::path sd = root / sname;
    fs::create_directories(sd);
    const fs::path data = sd / "data.amcd", train = sd / "train.amcd", test = sd / "test.amcd";

    std::vector<fs::path> data_inputs;
    if (!cfg.data_file.empty()) data_inputs.push_back(fs::absolute(cfg.data_file));
    // Absolute inputs outside the run directory are keyed by content only.
    runner.run(sname + "/data",
               echo_subset(cfg, {"normalize", "frames_per_cell"}) + (cfg.data_file.empty() ? "synthetic" : "file") +
                   ";seed=" + std::to_string(seed),
               data_inputs, {data, train, test}, [&] {
                   DatasetBundle bundle;
                   if (cfg.data_file.empty()) {
                       SynthConfig sc;
                       sc.frames_per_cell = cfg.frames_per_cell;
                       bundle = generate_synthetic(sc, seed);
                   } else {
                       bundle = load_dataset(cfg.data_file);
                   }
                   if (cfg.normalize) bundle = rms_normalize(bundle);
                   save_dataset(bundle, data);
                   const auto [tr, te] = split_train_test(bundle, seed);
                   save_dataset(tr, train);
                   save_dataset(te, test);
               });

    const bool need_plain = std::count(cfg.systems.begin(), cfg.systems.end(), "dnn") ||
                            std::count(cfg.systems.begin(), cfg.systems.end(), "nr");
    const bool need_lsgna = std::count(cfg.systems.begin(), cfg.systems.end(), "ls-gna-nr") > 0;
    std::vector<std::string> variants;
    if (need_plain) variants.push_back("plain");
    if (need_lsgna) variants.push_back("lsgna");

    for (const auto& v : variants) {
        const bool augment = v == "lsgna";
        const fs::path cnn = sd / ("cnn-" + v + ".amcm");
        runner.run(sname + "/train-cnn-" + v, training_params(cfg.training, augment, seed), {train}, {cnn}, [&] {
            auto tc = cfg.training;
            tc.augment = augment;
            tc.seed = seed;
            tc.on_epoch = [&](int epoch, double loss) {
                if (log) log("[" + sname + "/train-cnn-" + v + "] epoch " + std::to_string(epoch) + " loss " + fmt(loss));
            };
            const auto init = nn::CnnModel::initialized({}, mix_seed(seed, 11));
            save_checkpoint(nn::train(init, load_dataset(train), tc).model, cnn);
        });
    }

    const bool need_nr = std::count(cfg.systems.begin(), cfg.systems.end(), "nr") || need_lsgna;
    std::vector<std::string> nr_variants;
    if (std::count(cfg.systems.begin(), cfg.systems.end(), "nr")) nr_variants.push_back("plain");
    if (need_lsgna) nr_variants.push_back("lsgna");

    for (const auto& v : nr_variants) {
        const fs::path cnn = sd / ("cnn-" + v + ".amcm");
        const fs::path svm_path = sd / ("svm-" + v + ".amcs");
        const fs::path svm_info = sd / ("svm-" + v + ".json");
        runner.run(sname + "/train-svm-" + v,
                   echo_subset(cfg, {"svm_features", "svm_c", "svm_gamma", "svm_folds", "svm_standardize"}) +
                       "seed=" + std::to_string(seed),
                   {train, cnn}, {svm_path, svm_info}, [&] {
                       const auto result = train_svm_on(nn::load_checkpoint(cnn), load_dataset(train), cfg.svm_features,
                                                        cfg.svm_grid, cfg.svm_standardize, seed);
                       svm::save_svm(result.model, svm_path);
                       json info;
                       info["best_c"] = result.best_c;
                       info["best_gamma"] = result.best_gamma;
                       double max_kkt = 0.0;
                       json sv = json::array();
                       for (std::size_t k = 0; k < result.final_solutions.size(); ++k) {
                           max_kkt = std::max(max_kkt, result.final_solutions[k].kkt_violation);
                           sv.push_back(result.model.machines[k].support_vectors.rows());
                       }
                       info["max_kkt_violation"] = max_kkt;
                       info["support_vectors"] = sv;
                       json cells = json::array();
                       for (const auto& c : result.cells) {
                           cells.push_back({{"c", c.c}, {"gamma", c.gamma}, {"accuracy", c.accuracy},
                                            {"converged", c.converged}});
                       }
                       info["cells"] = cells;
                       write_text(svm_info, info.dump(2) + "\n");
                   });

        const fs::path bundle = sd / ("nr-" + v + ".amcn");
        const fs::path cal_info = sd / ("calibrate-" + v + ".json");
        runner.run(sname + "/calibrate-" + v,
                   echo_subset(cfg, {"rejection_rate", "eval_snr_db", "eval_samples"}) + "seed=" + std::to_string(seed),
                   {test, cnn, svm_path}, {bundle, cal_info}, [&] {
                       nr::NrModel model{nn::load_checkpoint(cnn), svm::load_svm(svm_path), 0.0};
                       model.validate();
                       const auto te = load_dataset(test);
                       const auto split = build_eval_split(
                           [&](const LabeledExample& ex) { return nr_argmax(model, ex.frame); }, te, cfg.eval_snr_db,
                           cfg.eval_samples, seed);
                       const auto set_one = te.subset(split.set_one);
                       const auto cal = nr::calibrate_threshold(model, set_one.examples, cfg.rejection_rate);
                       nr::NrBundle b{cnn.filename().string(), io::sha256_file(cnn), svm_path.filename().string(),
                                      io::sha256_file(svm_path), cal.theta};
                       nr::save_bundle(b, bundle);
                       write_text(cal_info, calibration_json(cal, split, cfg.rejection_rate).dump(2) + "\n");
                   });
    }
    (void)need_nr;

    std::vector<SystemFiles> systems;
    for (const auto& tag : cfg.systems) {
        if (tag == "dnn") {
            systems.push_back({tag, "plain", sd / "cnn-plain.amcm", {sd / "cnn-plain.amcm"}});
        } else {
            const std::string v = tag == "nr" ? "plain" : "lsgna";
            const fs::path b = sd / ("nr-" + v + ".amcn");
            systems.push_back({tag, v, b, {b, sd / ("cnn-" + v + ".amcm"), sd / ("svm-" + v + ".amcs")}});
        }
    }

    const auto policy = cfg.counting_policy == "lenient" ? analysis::CountingPolicy::Lenient : analysis::CountingPolicy::Strict;
    for (const auto& s : systems) {
        const fs::path rows = sd / ("rows-" + s.tag + ".csv");
        const fs::path attacks_path = sd / ("attacks-" + s.tag + ".amcd");
        const fs::path split_info = sd / ("split-" + s.tag + ".json");
        std::vector<fs::path> inputs{test};
        inputs.insert(inputs.end(), s.model_inputs.begin(), s.model_inputs.end());
        runner.run(sname + "/evaluate-" + s.tag,
                   echo_subset(cfg, {"eval_snr_db", "eval_samples", "pnr_db", "counting_policy"}) + "seed=" +
                       std::to_string(seed),
                   inputs, {rows, attacks_path, split_info}, [&] {
                       const auto system = load_system(s.tag, s.model);
                       const auto te = load_dataset(test);
                       const auto split =
                           build_eval_split(clean_scorer(*system), te, cfg.eval_snr_db, cfg.eval_samples, seed);
                       attacks::AttackSet atk;
                       atk.frames = DatasetBundle::empty(te.provenance, te.seed);
                       analysis::EvalOptions opts;
                       opts.policy = policy;
                       opts.seed = mix_seed(seed, 0x7A);
                       opts.on_outcome = [&](std::size_t idx, double pnr, const attacks::AttackOutcome& o) {
                           const auto& ex = te.examples[idx];
                           atk.frames.examples.push_back({o.adversarial, ex.label, ex.snr_db});
                           attacks::AttackRecord r;
                           r.original_index = static_cast<std::uint32_t>(idx);
                           r.pnr_db = pnr;
                           r.epsilon = o.epsilon_used;
                           r.target = static_cast<std::int16_t>(o.target_class.value_or(-1));
                           r.flags = static_cast<std::uint8_t>(
                               (o.succeeded ? std::uint8_t(attacks::AttackFlag::Succeeded) : 0) |
                               (o.evaded_rejection ? std::uint8_t(attacks::AttackFlag::EvadedRejection) : 0));
                           atk.records.push_back(r);
                       };
                       const auto fgm = analysis::evaluate(*system, te, split, cfg.pnr_db, opts);
                       opts.on_outcome = nullptr;
                       opts.perturbation = analysis::Perturbation::Jamming;
                       const auto jam = analysis::evaluate(*system, te, split, cfg.pnr_db, opts);
                       std::string csv = analysis::rows_csv_header() + "\n";
                       for (const auto* rep : {&fgm, &jam}) {
                           for (const auto& r : rep->rows) csv += analysis::to_csv_row(r) + "\n";
                       }
                       write_text(rows, csv);
                       attacks::save_attack_set(atk, attacks_path);
                       json info{{"set_one", split.set_one},
                                 {"set_two", split.set_two},
                                 {"fgm_successes", fgm.attack_successes}};
                       write_text(split_info, info.dump() + "\n");
                   });
    }

    const fs::path amp = sd / "amplification.csv";
    const fs::path amp_cnn = sd / (need_plain ? "cnn-plain.amcm" : "cnn-lsgna.amcm");
    runner.run(sname + "/amplification",
               echo_subset(cfg, {"eval_snr_db", "eval_samples", "amplification_pnr_db"}) + "seed=" + std::to_string(seed),
               {test, amp_cnn}, {amp}, [&] {
                   const auto te = load_dataset(test);
                   const auto frames = te.subset(sample_eval_indices(te, cfg.eval_snr_db, cfg.eval_samples, seed));
                   const auto prof =
                       analysis::amplification_profile(nn::load_checkpoint(amp_cnn), frames.examples,
                                                       attacks::AttackBudget::from_pnr_db(cfg.amplification_pnr_db),
                                                       mix_seed(seed, 0xA3));
                   std::string csv = "layer,mean_cosine_adv,mean_cosine_noisy,n_pairs\n";
                   for (std::size_t l = 0; l < prof.layer_names.size(); ++l) {
                       csv += prof.layer_names[l] + "," + fmt(prof.mean_cosine_adv[l]) + "," +
                              fmt(prof.mean_cosine_noisy[l]) + "," + std::to_string(prof.n_pairs) + "\n";
                   }
                   write_text(amp, csv);
               });

    const fs::path eps_l = sd / "epsilon-l.csv";
    std::vector<fs::path> eps_inputs{test};
    for (const auto& s : systems) {
        if (s.tag != "dnn") eps_inputs.insert(eps_inputs.end(), s.model_inputs.begin(), s.model_inputs.end());
    }
    runner.run(sname + "/epsilon-l",
               echo_subset(cfg, {"eval_snr_db", "eval_samples", "systems"}) + "seed=" + std::to_string(seed),
               eps_inputs, {eps_l}, [&] {
                   const auto te = load_dataset(test);
                   std::string csv = "system,mean,median,n_used,n_infinite,n_misclassified\n";
                   for (const auto& s : systems) {
                       if (s.tag == "dnn") continue;
                       const auto model = nr::load_nr_model(s.model);
                       const auto split = build_eval_split(
                           [&](const LabeledExample& ex) { return nr_argmax(model, ex.frame); }, te, cfg.eval_snr_db,
                           cfg.eval_samples, seed);
                       const auto e = analysis::mean_epsilon_l(model, te.subset(split.set_one).examples);
                       char buf[64];
                       std::snprintf(buf, sizeof buf, "%.9g,%.9g", e.mean, e.median);
                       csv += s.tag + "," + buf + "," + std::to_string(e.n_used) + "," + std::to_string(e.n_infinite) +
                              "," + std::to_string(e.n_misclassified) + "\n";
                   }
                   write_text(eps_l, csv);
               });

    const fs::path rows_all = sd / "rows.csv", table = sd / "table.csv", summary = sd / "summary.json";
    std::vector<fs::path> report_inputs{amp, eps_l};
    for (const auto& s : systems) {
        report_inputs.push_back(sd / ("rows-" + s.tag + ".csv"));
        report_inputs.push_back(sd / ("split-" + s.tag + ".json"));
    }
    for (const auto& v : nr_variants) {
        report_inputs.push_back(sd / ("svm-" + v + ".json"));
        report_inputs.push_back(sd / ("calibrate-" + v + ".json"));
    }
    runner.run(sname + "/report", echo_subset(cfg, {"table_floor", "systems"}), report_inputs,
               {rows_all, table, summary}, [&] {
                   std::string csv = analysis::rows_csv_header() + "\n";
                   std::vector<analysis::EvalReport> fgm_reports;
                   for (const auto& s : systems) {
                       analysis::EvalReport rep;
                       rep.system = s.tag;
                       for (const auto& r : parse_rows_csv(read_text(sd / ("rows-" + s.tag + ".csv")))) {
                           csv += analysis::to_csv_row(r) + "\n";
                           if (r.perturbation == analysis::Perturbation::Fgm) rep.rows.push_back(r);
                       }
                       fgm_reports.push_back(std::move(rep));
                   }
                   write_text(rows_all, csv);
                   const auto ref = std::find_if(fgm_reports.begin(), fgm_reports.end(),
                                                 [](const auto& r) { return r.system == "ls-gna-nr"; });
                   const auto& reference = ref != fgm_reports.end() ? *ref : fgm_reports.front();
                   write_text(table, analysis::table_csv(
                                         analysis::per_modulation_table(reference, fgm_reports, cfg.table_floor)));

                   json j;
                   j["seed"] = seed;
                   json sys = json::object();
                   for (const auto& s : systems) {
                       json e;
                       const auto split = read_json(sd / ("split-" + s.tag + ".json"));
                       e["set_one"] = split["set_one"].size();
                       e["set_two"] = split["set_two"].size();
                       e["fgm_successes"] = split["fgm_successes"];
                       if (s.tag != "dnn") {
                           e["svm"] = read_json(sd / ("svm-" + s.variant + ".json"));
                           e["svm"].erase("cells");
                           e["calibration"] = read_json(sd / ("calibrate-" + s.variant + ".json"));
                       }
                       sys[s.tag] = e;
                   }
                   std::stringstream es(read_text(eps_l));
                   std::string line;
                   std::getline(es, line);
                   while (std::getline(es, line)) {
                       std::vector<std::string> f;
                       std::stringstream ls(line);
                       std::string cell;
                       while (std::getline(ls, cell, ',')) f.push_back(cell);
                       if (f.size() == 6) {
                           sys[f[0]]["epsilon_l"] = {{"mean", std::stod(f[1])},
                                                     {"median", std::stod(f[2])},
                                                     {"n_used", std::stoul(f[3])},
                                                     {"n_infinite", std::stoul(f[4])}};
                       }
                   }
                   j["systems"] = sys;
                   json a;
                   std::stringstream as(read_text(amp));
                   std::getline(as, line);
                   while (std::getline(as, line)) {
                       std::vector<std::string> f;
                       std::stringstream ls(line);
                       std::string cell;
                       while (std::getline(ls, cell, ',')) f.push_back(cell);
                       a["layers"].push_back(f[0]);
                       a["adversarial"].push_back(std::stod(f[1]));
                       a["noisy"].push_back(std::stod(f[2]));
                   }
                   a["pnr_db"] = cfg.amplification_pnr_db;
                   j["amplification"] = a;
                   write_text(summary, j.dump(2) + "\n");
               });
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config, const Logger& log) {
    config.validate();
    const fs::path root = fs::absolute(config.output_dir).lexically_normal();
    DirectoryLock lock(root);
    StageRunner runner(root, cache_dir_from_env(), log);

    for (auto seed : config.seeds) run_seed(config, seed, runner, root, log);

    const fs::path report = root / "report";
    std::vector<fs::path> inputs;
    for (auto seed : config.seeds) {
        inputs.push_back(root / ("seed-" + std::to_string(seed)) / "rows.csv");
        inputs.push_back(root / ("seed-" + std::to_string(seed)) / "summary.json");
    }
    runner.run("report", "seeds", inputs, {report / "rows.csv", report / "aggregate.csv", report / "summary.json"},
               [&] {
                   // Only this run's seed directories take part.
                   const fs::path staging = root / ".merge";
                   fs::remove_all(staging);
                   for (auto seed : config.seeds) {
                       const auto name = "seed-" + std::to_string(seed);
                       fs::create_directories(staging / name);
                       fs::copy_file(root / name / "rows.csv", staging / name / "rows.csv");
                   }
                   merge_runs({staging}, report);
                   fs::remove_all(staging);
                   json j;
                   j["toolkit_version"] = kToolkitVersion;
                   json seeds = json::array();
                   for (auto seed : config.seeds) {
                       seeds.push_back(read_json(root / ("seed-" + std::to_string(seed)) / "summary.json"));
                   }
                   j["seeds"] = seeds;
                   write_text(report / "summary.json", j.dump(2) + "\n");
               });

    PipelineResult result;
    result.manifest.config = config.echo();
    result.manifest.stages = runner.records();
    result.timings = runner.timings();
    write_text(root / "manifest.json", result.manifest.to_json());
    json t = json::array();
    for (const auto& s : result.timings) t.push_back({{"stage", s.name}, {"seconds", s.seconds}, {"status", s.status}});
    write_text(root / "timing.json", t.dump(2) + "\n");
    return result;
}

}  // namespace amc::pipeline
