#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "amc/analysis.hpp"
#include "amc/attacks.hpp"
#include "amc/binary_io.hpp"
#include "amc/config.hpp"
#include "amc/dataset.hpp"
#include "amc/error.hpp"
#include "amc/neuralnet.hpp"
#include "amc/pipeline.hpp"
#include "amc/rejection.hpp"
#include "amc/svm.hpp"

namespace amc::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    io::write_file_atomic(p, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string fmt6(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", d);
    return buf;
}

void check_system_tag(const std::string& tag) {
    if (tag != "dnn" && tag != "nr" && tag != "ls-gna-nr") {
        throw ConfigError("--system: expected dnn, nr or ls-gna-nr, got '" + tag + "'");
    }
}

std::vector<std::size_t> pick_split(const EvalSplit& split, const std::string& which) {
    if (which == "set1") return split.set_one;
    if (which == "set2") return split.set_two;
    if (which == "all") {
        auto all = split.set_one;
        all.insert(all.end(), split.set_two.begin(), split.set_two.end());
        std::sort(all.begin(), all.end());
        return all;
    }
    throw ConfigError("--split: expected set1, set2 or all, got '" + which + "'");
}

analysis::CountingPolicy parse_policy(const std::string& p) {
    if (p == "lenient") return analysis::CountingPolicy::Lenient;
    if (p == "strict") return analysis::CountingPolicy::Strict;
    throw ConfigError("--policy: expected lenient or strict, got '" + p + "'");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
    std::vector<int> out;
    for (double d : parse_double_list(text, key)) {
        if (d != std::floor(d)) throw ConfigError(key + ": expected integers");
        out.push_back(int(d));
    }
    return out;
}

std::vector<std::string> parse_name_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Options shared by every command that draws the evaluation sample.
struct SampleOptions {
    int snr_db = 10;
    std::size_t samples = 1000;
    std::uint64_t seed = 1;

    void add_to(CLI::App* app) {
        app->add_option("--snr", snr_db, "SNR of the evaluation sample (dB)")->capture_default_str();
        app->add_option("--samples", samples, "frames drawn at that SNR")->capture_default_str();
        app->add_option("--seed", seed, "sampling seed")->capture_default_str();
    }
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    void log(const std::string& s) const { err << s << "\n"; }
};

void register_gen_data(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("gen-data", "Generate a synthetic labeled I/Q dataset");
    auto schemes = std::make_shared<std::string>();
    auto snrs = std::make_shared<std::string>();
    auto per_cell = std::make_shared<std::int64_t>(100);
    auto seed = std::make_shared<std::uint64_t>(1);
    auto out = std::make_shared<std::string>();
    auto train_out = std::make_shared<std::string>();
    auto test_out = std::make_shared<std::string>();
    auto normalize = std::make_shared<bool>(false);
    sub->add_option("--schemes", *schemes, "comma-separated scheme names (default: all eleven)");
    sub->add_option("--snrs", *snrs, "comma-separated SNRs in dB (default: -20..18 step 2)");
    sub->add_option("--per-cell", *per_cell, "frames per (scheme, SNR) cell")->capture_default_str();
    sub->add_option("--seed", *seed, "generator seed")->capture_default_str();
    sub->add_option("--out", *out, "output dataset file")->required();
    sub->add_option("--train-out", *train_out, "also write the 50/50 stratified train half here");
    sub->add_option("--test-out", *test_out, "also write the test half here");
    sub->add_flag("--normalize", *normalize, "RMS-normalize every frame to unit power");
    sub->callback([=, &ctx] {
        if (train_out->empty() != test_out->empty()) throw ConfigError("--train-out and --test-out go together");
        SynthConfig sc;
        if (!schemes->empty()) sc.schemes = parse_name_list(*schemes);
        if (!snrs->empty()) sc.snrs_db = parse_int_list(*snrs, "--snrs");
        sc.frames_per_cell = *per_cell;
        auto bundle = generate_synthetic(sc, *seed);
        if (*normalize) bundle = rms_normalize(bundle);
        save_dataset(bundle, *out);
        ctx.out << "wrote " << bundle.size() << " frames to " << *out << "\n";
        if (!train_out->empty()) {
            const auto [tr, te] = split_train_test(bundle, *seed);
            save_dataset(tr, *train_out);
            save_dataset(te, *test_out);
            ctx.out << "train " << tr.size() << " -> " << *train_out << ", test " << te.size() << " -> " << *test_out
                    << "\n";
        }
    });
}

void register_import(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("import", "Validate an externally converted dataset and re-encode it canonically");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto normalize = std::make_shared<bool>(false);
    auto seed = std::make_shared<std::uint64_t>(1);
    auto train_out = std::make_shared<std::string>();
    auto test_out = std::make_shared<std::string>();
    sub->add_option("--in", *in, "AMCD file written by the corpus converter")->required();
    sub->add_option("--out", *out, "output dataset file")->required();
    sub->add_flag("--normalize", *normalize, "RMS-normalize every frame to unit power");
    sub->add_option("--seed", *seed, "split seed")->capture_default_str();
    sub->add_option("--train-out", *train_out, "also write the 50/50 stratified train half here");
    sub->add_option("--test-out", *test_out, "also write the test half here");
    sub->callback([=, &ctx] {
        if (train_out->empty() != test_out->empty()) throw ConfigError("--train-out and --test-out go together");
        auto bundle = load_dataset(*in);
        bundle.provenance = Provenance::Imported;
        if (*normalize) bundle = rms_normalize(bundle);
        save_dataset(bundle, *out);
        std::map<std::string, std::size_t> per_class;
        for (const auto& ex : bundle.examples) ++per_class[bundle.class_names.at(ex.label)];
        ctx.out << "imported " << bundle.size() << " frames:";
        for (const auto& [name, n] : per_class) ctx.out << " " << name << "=" << n;
        ctx.out << "\n";
        if (!train_out->empty()) {
            const auto [tr, te] = split_train_test(bundle, *seed);
            save_dataset(tr, *train_out);
            save_dataset(te, *test_out);
        }
    });
}

void register_train_cnn(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("train-cnn", "Train the CNN classifier (LS-GNA unless --plain)");
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto cfg = std::make_shared<nn::TrainConfig>();
    auto plain = std::make_shared<bool>(false);
    auto init_seed = std::make_shared<std::optional<std::uint64_t>>();
    cfg->seed = 1;
    sub->add_option("--data", *data, "training dataset")->required();
    sub->add_option("--out", *out, "output checkpoint")->required();
    sub->add_option("--ls-alpha", cfg->ls_alpha, "label smoothing factor")->capture_default_str();
    sub->add_option("--gna-var", cfg->gna_variance, "Gaussian augmentation variance")->capture_default_str();
    sub->add_option("--epochs", cfg->epochs)->capture_default_str();
    sub->add_option("--batch-size", cfg->batch_size)->capture_default_str();
    sub->add_option("--lr", cfg->learning_rate, "learning rate")->capture_default_str();
    sub->add_option("--momentum", cfg->momentum)->capture_default_str();
    sub->add_option("--seed", cfg->seed, "shuffle and noise seed")->capture_default_str();
    sub->add_option("--init-seed", *init_seed, "weight initialization seed (default: derived from --seed)");
    sub->add_flag("--plain", *plain, "one-hot labels and no noise augmentation");
    sub->callback([=, &ctx] {
        auto tc = *cfg;
        tc.augment = !*plain;
        tc.on_epoch = [&ctx](int epoch, double loss) { ctx.log("epoch " + std::to_string(epoch) + " loss " + fmt6(loss)); };
        const auto train = load_dataset(*data);
        const auto init = nn::CnnModel::initialized({}, init_seed->value_or(mix_seed(tc.seed, 11)));
        const auto result = nn::train(init, train, tc);
        save_checkpoint(result.model, *out);
        ctx.out << "trained " << tc.epochs << " epochs, final loss " << fmt6(result.loss_history.back())
                << ", training accuracy " << fmt6(nn::accuracy(result.model, train.examples)) << "\n";
    });
}

void register_train_svm(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("train-svm", "Train the one-vs-all RBF SVM on CNN features with a CV grid search");
    auto cnn = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto report = std::make_shared<std::string>();
    auto n_features = std::make_shared<std::size_t>(10000);
    auto grid = std::make_shared<svm::CvGrid>();
    auto c_list = std::make_shared<std::string>();
    auto g_list = std::make_shared<std::string>();
    auto no_std = std::make_shared<bool>(false);
    auto seed = std::make_shared<std::uint64_t>(1);
    sub->add_option("--cnn", *cnn, "CNN checkpoint")->required();
    sub->add_option("--data", *data, "training dataset")->required();
    sub->add_option("--out", *out, "output SVM file")->required();
    sub->add_option("--n-features", *n_features, "training frames sampled")->capture_default_str();
    sub->add_option("--folds", grid->folds)->capture_default_str();
    sub->add_option("--c", *c_list, "C grid (default 0.1,1,10,100)");
    sub->add_option("--gamma", *g_list, "gamma grid, 1/d allowed (default 1/d,0.01,0.1,1)");
    sub->add_flag("--no-standardize", *no_std, "skip feature z-scoring");
    sub->add_option("--seed", *seed)->capture_default_str();
    sub->add_option("--report", *report, "write the CV grid as JSON here");
    sub->callback([=, &ctx] {
        auto g = *grid;
        if (!c_list->empty()) g.c_values = parse_double_list(*c_list, "--c");
        if (!g_list->empty()) {
            g.gamma_values.clear();
            for (const auto& item : parse_name_list(*g_list)) {
                g.gamma_values.push_back(item == "1/d" ? 0.0 : parse_double_list(item, "--gamma").at(0));
            }
        }
        g.validate();
        const auto result = pipeline::train_svm_on(nn::load_checkpoint(*cnn), load_dataset(*data), *n_features, g,
                                                   !*no_std, *seed);
        svm::save_svm(result.model, *out);
        for (const auto& c : result.cells) {
            ctx.out << "C=" << c.c << " gamma=" << c.gamma << " cv_accuracy=" << fmt6(c.accuracy)
                    << (c.converged ? "" : " (not converged)") << "\n";
        }
        ctx.out << "selected C=" << result.best_c << " gamma=" << result.best_gamma << "\n";
        if (!report->empty()) {
            json j;
            j["best_c"] = result.best_c;
            j["best_gamma"] = result.best_gamma;
            for (const auto& c : result.cells) {
                j["cells"].push_back({{"c", c.c}, {"gamma", c.gamma}, {"accuracy", c.accuracy}, {"converged", c.converged}});
            }
            for (const auto& s : result.final_solutions) j["kkt_violation"].push_back(s.kkt_violation);
            write_text(*report, j.dump(2) + "\n");
        }
    });
}

void register_calibrate(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("calibrate", "Set the rejection threshold on benign set I and write an NR bundle");
    auto cnn = std::make_shared<std::string>();
    auto svm_path = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto rate = std::make_shared<double>(0.10);
    auto sample = std::make_shared<SampleOptions>();
    sub->add_option("--cnn", *cnn, "CNN checkpoint")->required();
    sub->add_option("--svm", *svm_path, "SVM file")->required();
    sub->add_option("--data", *data, "test dataset")->required();
    sub->add_option("--out", *out, "output NR bundle")->required();
    sub->add_option("--rate", *rate, "benign rejection rate")->capture_default_str();
    sample->add_to(sub);
    sub->callback([=, &ctx] {
        nr::NrModel model{nn::load_checkpoint(*cnn), svm::load_svm(*svm_path), 0.0};
        model.validate();
        const auto test = load_dataset(*data);
        const auto split = build_eval_split([&](const LabeledExample& ex) { return pipeline::nr_argmax(model, ex.frame); },
                                            test, sample->snr_db, sample->samples, sample->seed);
        const auto cal = nr::calibrate_threshold(model, test.subset(split.set_one).examples, *rate);
        // Bundle paths are stored relative to the bundle's directory.
        const fs::path bundle_dir = fs::absolute(*out).parent_path();
        nr::NrBundle b{fs::absolute(*cnn).lexically_relative(bundle_dir).generic_string(), io::sha256_file(*cnn),
                       fs::absolute(*svm_path).lexically_relative(bundle_dir).generic_string(),
                       io::sha256_file(*svm_path), cal.theta};
        nr::save_bundle(b, *out);
        ctx.out << "theta=" << cal.theta << " achieved_rate=" << fmt6(cal.achieved_rate)
                << " set_one=" << split.set_one.size() << (cal.achievable ? "" : " (target rate not achievable)") << "\n";
    });
}

void register_attack(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("attack", "Generate FGM (or jamming) perturbed frames for a system");
    auto system = std::make_shared<std::string>("dnn");
    auto model = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto split_name = std::make_shared<std::string>("set1");
    auto pnr = std::make_shared<std::string>("-20,-18,-16,-14,-12,-10,-8,-6,-4,-2,0");
    auto mode = std::make_shared<std::string>("fixed");
    auto perturbation = std::make_shared<std::string>("fgm");
    auto tolerance = std::make_shared<double>(1e-3);
    auto out = std::make_shared<std::string>();
    auto sample = std::make_shared<SampleOptions>();
    sub->add_option("--system", *system, "dnn, nr or ls-gna-nr")->capture_default_str();
    sub->add_option("--model", *model, "CNN checkpoint (dnn) or NR bundle")->required();
    sub->add_option("--data", *data, "test dataset")->required();
    sub->add_option("--split", *split_name, "set1, set2 or all")->capture_default_str();
    sub->add_option("--pnr-db", *pnr, "PNR list in dB (fixed mode)")->capture_default_str();
    sub->add_option("--mode", *mode, "fixed or min-eps")->capture_default_str();
    sub->add_option("--perturbation", *perturbation, "fgm or jamming (fixed mode)")->capture_default_str();
    sub->add_option("--tolerance", *tolerance, "relative bracket width of the min-eps search")->capture_default_str();
    sub->add_option("--out", *out, "output attack file")->required();
    sample->add_to(sub);
    sub->callback([=, &ctx] {
        check_system_tag(*system);
        if (*mode != "fixed" && *mode != "min-eps") throw ConfigError("--mode: expected fixed or min-eps");
        if (*perturbation != "fgm" && *perturbation != "jamming") throw ConfigError("--perturbation: expected fgm or jamming");
        if (*mode == "min-eps" && *perturbation == "jamming") throw ConfigError("--mode min-eps applies to fgm only");
        const auto sys = pipeline::load_system(*system, *model);
        const auto test = load_dataset(*data);
        const auto split = build_eval_split(pipeline::clean_scorer(*sys), test, sample->snr_db, sample->samples, sample->seed);
        const auto indices = pick_split(split, *split_name);

        attacks::AttackSet set;
        set.frames = DatasetBundle::empty(test.provenance, test.seed);
        set.frames.class_names = test.class_names;
        std::size_t successes = 0;
        auto emit = [&](std::size_t idx, double pnr_db, const attacks::AttackOutcome& o, std::uint8_t extra_flags) {
            const auto& ex = test.examples[idx];
            set.frames.examples.push_back({o.adversarial, ex.label, ex.snr_db});
            attacks::AttackRecord r;
            r.original_index = static_cast<std::uint32_t>(idx);
            r.pnr_db = pnr_db;
            r.epsilon = o.epsilon_used;
            r.target = static_cast<std::int16_t>(o.target_class.value_or(-1));
            r.flags = static_cast<std::uint8_t>(extra_flags |
                                                (o.succeeded ? std::uint8_t(attacks::AttackFlag::Succeeded) : 0) |
                                                (o.evaded_rejection ? std::uint8_t(attacks::AttackFlag::EvadedRejection) : 0));
            successes += o.succeeded ? 1 : 0;
            set.records.push_back(r);
        };

        if (*mode == "fixed") {
            const auto pnrs = parse_double_list(*pnr, "--pnr-db");
            if (pnrs.empty()) throw ConfigError("--pnr-db: list is empty");
            for (const auto idx : indices) {
                const auto& ex = test.examples[idx];
                std::vector<double> eps;
                for (double p : pnrs) eps.push_back(attacks::AttackBudget::from_pnr_db(p).epsilon_for(ex.frame, ex.snr_db));
                if (*perturbation == "fgm") {
                    const auto outcomes = sys->fgm_sweep(ex.frame, ex.label, eps);
                    for (std::size_t p = 0; p < pnrs.size(); ++p) emit(idx, pnrs[p], outcomes[p], 0);
                } else {
                    for (std::size_t p = 0; p < pnrs.size(); ++p) {
                        attacks::AttackOutcome o;
                        o.adversarial = attacks::jamming(ex.frame, eps[p], mix_seed(mix_seed(sample->seed, idx), p));
                        o.epsilon_used = eps[p];
                        const auto v = sys->classify(o.adversarial);
                        o.succeeded = !v.rejected() && v.label() != ex.label;
                        o.evaded_rejection = !v.rejected();
                        emit(idx, pnrs[p], o, std::uint8_t(attacks::AttackFlag::Jamming));
                    }
                }
            }
        } else {
            const auto* dnn = dynamic_cast<const analysis::DnnSystem*>(sys.get());
            const auto* nrs = dynamic_cast<const analysis::NrSystem*>(sys.get());
            for (const auto idx : indices) {
                const auto& ex = test.examples[idx];
                const auto res = dnn ? attacks::min_epsilon_dnn(dnn->model(), ex.frame, ex.label, *tolerance)
                                     : attacks::min_epsilon_nr(nrs->model(), ex.frame, ex.label, *tolerance);
                if (!res.attackable) {
                    attacks::AttackOutcome o;
                    o.adversarial = ex.frame;
                    emit(idx, std::numeric_limits<double>::quiet_NaN(), o, std::uint8_t(attacks::AttackFlag::Unattackable));
                    continue;
                }
                const auto o = sys->fgm(ex.frame, ex.label, res.epsilon);
                const double pnr_lin = attacks::pnr_from_epsilon(o.epsilon_used, attacks::db_to_linear(ex.snr_db),
                                                                 ex.frame.norm_squared());
                emit(idx, 10.0 * std::log10(pnr_lin), o, 0);
            }
        }
        attacks::save_attack_set(set, *out);
        ctx.out << "wrote " << set.records.size() << " perturbed frames from " << indices.size() << " " << *split_name
                << " frames to " << *out << ", " << successes << " misclassified\n";
    });
}

void register_evaluate(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("evaluate", "Accuracy versus PNR under FGM and jamming with the counting rules");
    auto system = std::make_shared<std::string>("dnn");
    auto model = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto pnr = std::make_shared<std::string>("-20,-18,-16,-14,-12,-10,-8,-6,-4,-2,0");
    auto perturbation = std::make_shared<std::string>("both");
    auto policy = std::make_shared<std::string>("lenient");
    auto out = std::make_shared<std::string>();
    auto sample = std::make_shared<SampleOptions>();
    sub->add_option("--system", *system, "dnn, nr or ls-gna-nr")->capture_default_str();
    sub->add_option("--model", *model, "CNN checkpoint (dnn) or NR bundle")->required();
    sub->add_option("--data", *data, "test dataset")->required();
    sub->add_option("--pnr-db", *pnr, "PNR list in dB")->capture_default_str();
    sub->add_option("--perturbation", *perturbation, "fgm, jamming or both")->capture_default_str();
    sub->add_option("--policy", *policy, "lenient or strict")->capture_default_str();
    sub->add_option("--out", *out, "output rows CSV")->required();
    sample->add_to(sub);
    sub->callback([=, &ctx] {
        check_system_tag(*system);
        std::vector<analysis::Perturbation> kinds;
        if (*perturbation == "fgm" || *perturbation == "both") kinds.push_back(analysis::Perturbation::Fgm);
        if (*perturbation == "jamming" || *perturbation == "both") kinds.push_back(analysis::Perturbation::Jamming);
        if (kinds.empty()) throw ConfigError("--perturbation: expected fgm, jamming or both");
        const auto pnrs = parse_double_list(*pnr, "--pnr-db");
        if (pnrs.empty()) throw ConfigError("--pnr-db: list is empty");
        const auto sys = pipeline::load_system(*system, *model);
        const auto test = load_dataset(*data);
        const auto split = build_eval_split(pipeline::clean_scorer(*sys), test, sample->snr_db, sample->samples, sample->seed);
        std::string csv = analysis::rows_csv_header() + "\n";
        for (const auto kind : kinds) {
            analysis::EvalOptions opts;
            opts.perturbation = kind;
            opts.policy = parse_policy(*policy);
            opts.seed = mix_seed(sample->seed, 0x7A);
            const auto rep = analysis::evaluate(*sys, test, split, pnrs, opts);
            for (const auto& r : rep.rows) {
                csv += analysis::to_csv_row(r) + "\n";
                if (r.scheme == "all" && r.set == "I") {
                    ctx.out << analysis::to_string(kind) << " " << (r.clean ? std::string("clean") : fmt6(r.pnr_db))
                            << " set I accuracy " << fmt6(r.accuracy()) << " rejected " << fmt6(r.rejection_rate()) << "\n";
                }
            }
        }
        write_text(*out, csv);
    });
}

void register_amplification(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("amplification", "Per-layer cosine distance of FGM and equal-norm noisy pairs");
    auto cnn = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto pnr = std::make_shared<double>(0.0);
    auto out = std::make_shared<std::string>();
    auto sample = std::make_shared<SampleOptions>();
    sub->add_option("--cnn", *cnn, "CNN checkpoint")->required();
    sub->add_option("--data", *data, "test dataset")->required();
    sub->add_option("--pnr-db", *pnr, "perturbation budget in dB")->capture_default_str();
    sub->add_option("--out", *out, "output CSV (default: stdout only)");
    sample->add_to(sub);
    sub->callback([=, &ctx] {
        const auto test = load_dataset(*data);
        const auto frames = test.subset(sample_eval_indices(test, sample->snr_db, sample->samples, sample->seed));
        const auto prof = analysis::amplification_profile(nn::load_checkpoint(*cnn), frames.examples,
                                                          attacks::AttackBudget::from_pnr_db(*pnr),
                                                          mix_seed(sample->seed, 0xA3));
        std::string csv = "layer,mean_cosine_adv,mean_cosine_noisy,n_pairs\n";
        for (std::size_t l = 0; l < prof.layer_names.size(); ++l) {
            csv += prof.layer_names[l] + "," + fmt6(prof.mean_cosine_adv[l]) + "," + fmt6(prof.mean_cosine_noisy[l]) + "," +
                   std::to_string(prof.n_pairs) + "\n";
        }
        ctx.out << csv;
        if (!out->empty()) write_text(*out, csv);
    });
}

void register_epsilon_l(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("epsilon-l", "Mean score-margin robustness statistic over set I");
    auto bundles = std::make_shared<std::vector<std::string>>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto sample = std::make_shared<SampleOptions>();
    sub->add_option("--nr", *bundles, "one or more NR bundles")->required();
    sub->add_option("--data", *data, "test dataset")->required();
    sub->add_option("--out", *out, "output CSV (default: stdout only)");
    sample->add_to(sub);
    sub->callback([=, &ctx] {
        const auto test = load_dataset(*data);
        std::string csv = "model,mean,median,n_used,n_infinite,n_misclassified\n";
        for (const auto& b : *bundles) {
            const auto model = nr::load_nr_model(b);
            const auto split = build_eval_split([&](const LabeledExample& ex) { return pipeline::nr_argmax(model, ex.frame); },
                                                test, sample->snr_db, sample->samples, sample->seed);
            const auto e = analysis::mean_epsilon_l(model, test.subset(split.set_one).examples);
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.9g,%.9g", e.mean, e.median);
            csv += b + "," + buf + "," + std::to_string(e.n_used) + "," + std::to_string(e.n_infinite) + "," +
                   std::to_string(e.n_misclassified) + "\n";
        }
        ctx.out << csv;
        if (!out->empty()) write_text(*out, csv);
    });
}

void register_report(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("report", "Merge the per-seed rows of one or more run directories");
    auto runs = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    sub->add_option("runs", *runs, "run directories")->required();
    sub->add_option("--out", *out, "output directory")->required();
    sub->callback([=, &ctx] {
        std::vector<fs::path> paths(runs->begin(), runs->end());
        for (const auto& p : paths) {
            if (!fs::is_directory(p)) throw ConfigError("report: not a directory: " + p.string());
        }
        pipeline::merge_runs(paths, *out);
        ctx.out << "wrote " << (fs::path(*out) / "rows.csv").string() << " and "
                << (fs::path(*out) / "aggregate.csv").string() << "\n";
    });
}

void register_pipeline(CLI::App& app, const Context& ctx) {
    auto* sub = app.add_subcommand("pipeline", "Run the seeded end-to-end experiment from a config file");
    auto config = std::make_shared<std::string>();
    auto output_dir = std::make_shared<std::string>();
    auto seeds = std::make_shared<std::string>();
    auto echo = std::make_shared<bool>(false);
    sub->add_option("config", *config, "key = value config file (empty file = defaults)")->required();
    sub->add_option("--output-dir", *output_dir, "override output_dir");
    sub->add_option("--seeds", *seeds, "override seeds");
    sub->add_flag("--echo-config", *echo, "print the resolved config and exit");
    sub->callback([=, &ctx] {
        auto cfg = parse_config(*config);
        if (!output_dir->empty()) cfg.output_dir = *output_dir;
        if (!seeds->empty()) {
            cfg.seeds.clear();
            for (const auto& s : parse_name_list(*seeds)) cfg.seeds.push_back(std::stoull(s));
        }
        cfg.validate();
        if (*echo) {
            for (const auto& [k, v] : cfg.echo()) ctx.out << k << " = " << v << "\n";
            return;
        }
        const auto result = pipeline::run_pipeline(cfg, [&ctx](const std::string& s) { ctx.log(s); });
        std::size_t ran = 0;
        for (const auto& t : result.timings) ran += t.status == "ran" ? 1 : 0;
        ctx.out << "pipeline finished: " << result.timings.size() << " stages, " << ran << " ran, "
                << result.timings.size() - ran << " reused; report in "
                << (fs::path(cfg.output_dir) / "report").string() << "\n";
    });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neural-rejection defense toolkit for adversarial radio modulation classification", "amc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pipeline::kToolkitVersion));
    app.footer("Exit codes: 0 success, 1 other failure, 2 config error, 3 data-format error, 4 numeric divergence.\n"
               "Environment: " + std::string(pipeline::kCacheEnv) + " selects a shared stage cache directory.");
    const Context ctx{out, err};
    register_gen_data(app, ctx);
    register_import(app, ctx);
    register_train_cnn(app, ctx);
    register_train_svm(app, ctx);
    register_calibrate(app, ctx);
    register_attack(app, ctx);
    register_evaluate(app, ctx);
    register_amplification(app, ctx);
    register_epsilon_l(app, ctx);
    register_report(app, ctx);
    register_pipeline(app, ctx);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const DivergenceError& e) {
        err << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const SolverError& e) {
        err << "solver did not converge: " << e.what() << " (duality gap " << e.duality_gap() << ")\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace amc::cli
