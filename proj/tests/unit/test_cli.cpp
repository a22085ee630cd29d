#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "amc/attacks.hpp"
#include "amc/dataset.hpp"
#include "cli.hpp"
#include "test_util.hpp"

namespace {

using namespace amc;
namespace fs = std::filesystem;

struct Run {
    int code;
    std::string out, err;
};

Run amc_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "amc");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

TEST(Cli, HelpListsEverySubcommand) {
    const auto r = amc_cli({"--help"});
    EXPECT_EQ(r.code, cli::kExitOk);
    for (auto sub : {"gen-data", "import", "train-cnn", "train-svm", "calibrate", "attack", "evaluate", "amplification",
                     "epsilon-l", "report", "pipeline"}) {
        EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
    }
    EXPECT_NE(r.out.find("Exit codes"), std::string::npos);
}

TEST(Cli, UsageErrorsAreConfigErrors) {
    EXPECT_EQ(amc_cli({}).code, cli::kExitConfig);
    EXPECT_EQ(amc_cli({"frobnicate"}).code, cli::kExitConfig);
    EXPECT_EQ(amc_cli({"gen-data"}).code, cli::kExitConfig);
    EXPECT_EQ(amc_cli({"gen-data", "--out", "/tmp/x", "--per-cell", "many"}).code, cli::kExitConfig);
}

TEST(Cli, BadConfigFileExitsTwo) {
    const auto dir = amc::test::temp_dir("cli-config");
    std::ofstream(dir / "bad.conf") << "ls_alpha = 1.5\n";
    const auto r = amc_cli({"pipeline", (dir / "bad.conf").string()});
    EXPECT_EQ(r.code, cli::kExitConfig);
    EXPECT_NE(r.err.find("ls_alpha"), std::string::npos) << r.err;
    std::ofstream(dir / "unknown.conf") << "lr_warmup = 3\n";
    EXPECT_EQ(amc_cli({"pipeline", (dir / "unknown.conf").string()}).code, cli::kExitConfig);
}

TEST(Cli, EchoConfigPrintsResolvedValues) {
    const auto dir = amc::test::temp_dir("cli-echo");
    std::ofstream(dir / "c.conf") << "epochs = 7\n";
    const auto r = amc_cli({"pipeline", (dir / "c.conf").string(), "--echo-config", "--seeds", "5,6"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find("epochs = 7"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("seeds = 5,6"), std::string::npos) << r.out;
}

TEST(Cli, CorruptDataExitsThree) {
    const auto dir = amc::test::temp_dir("cli-corrupt");
    std::ofstream(dir / "junk.amcd") << "not a dataset";
    EXPECT_EQ(amc_cli({"train-cnn", "--data", (dir / "junk.amcd").string(), "--out", (dir / "m.amcm").string()}).code,
              cli::kExitFormat);
    EXPECT_EQ(amc_cli({"import", "--in", (dir / "missing.amcd").string(), "--out", (dir / "o.amcd").string()}).code,
              cli::kExitFormat);
}

TEST(Cli, DivergenceExitsFour) {
    const auto dir = amc::test::temp_dir("cli-diverge");
    auto data = DatasetBundle::empty();
    std::vector<float> big(kFrameSize, 1e37f);
    for (int i = 0; i < 32; ++i) data.examples.push_back({IQFrame::from_values(big), std::uint8_t(i % 11), 0});
    save_dataset(data, dir / "big.amcd");
    const auto r = amc_cli({"train-cnn", "--data", (dir / "big.amcd").string(), "--out", (dir / "m.amcm").string(),
                            "--epochs", "2", "--batch-size", "16", "--lr", "1"});
    EXPECT_EQ(r.code, cli::kExitDivergence) << r.err;
    EXPECT_FALSE(fs::exists(dir / "m.amcm"));
}

// gen-data -> train-cnn -> attack, checking the emitted frames against their budgets.
TEST(Cli, GenerateTrainAttack) {
    const auto dir = amc::test::temp_dir("cli-flow");
    const auto all = (dir / "all.amcd").string(), tr = (dir / "tr.amcd").string(), te = (dir / "te.amcd").string();
    auto r = amc_cli({"gen-data", "--snrs", "10,18", "--per-cell", "4", "--seed", "2", "--out", all, "--train-out", tr,
                      "--test-out", te});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(load_dataset(all).size(), 88u);
    EXPECT_EQ(load_dataset(tr).size() + load_dataset(te).size(), 88u);

    const auto model = (dir / "m.amcm").string();
    r = amc_cli({"train-cnn", "--data", tr, "--out", model, "--epochs", "1", "--batch-size", "16"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;

    const auto out = (dir / "atk.amcd").string();
    r = amc_cli({"attack", "--system", "dnn", "--model", model, "--data", te, "--split", "all", "--pnr-db", "-10,0",
                 "--samples", "12", "--out", out});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto set = attacks::load_attack_set(out);
    const auto test = load_dataset(te);
    ASSERT_EQ(set.records.size(), 24u);
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const auto& rec = set.records[i];
        const auto& orig = test.examples.at(rec.original_index);
        EXPECT_NEAR(rec.epsilon, attacks::AttackBudget::from_pnr_db(rec.pnr_db).epsilon_for(orig.frame, orig.snr_db),
                    1e-12);
        double d = 0.0;
        for (std::size_t j = 0; j < kFrameSize; ++j) {
            const double v = double(set.frames.examples[i].frame.values()[j]) - double(orig.frame.values()[j]);
            d += v * v;
        }
        EXPECT_NEAR(std::sqrt(d), rec.epsilon, 1e-5 * rec.epsilon);
    }

    r = amc_cli({"attack", "--system", "dnn", "--model", model, "--data", te, "--split", "all", "--mode", "min-eps",
                 "--samples", "4", "--out", out});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(attacks::load_attack_set(out).records.size(), 4u);

    // Too few benign frames for calibration is a precondition failure.
    r = amc_cli({"train-svm", "--cnn", model, "--data", tr, "--out", (dir / "s.amcs").string(), "--n-features", "44",
                 "--folds", "2", "--c", "1", "--gamma", "1/d"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    r = amc_cli({"calibrate", "--cnn", model, "--svm", (dir / "s.amcs").string(), "--data", te, "--out",
                 (dir / "nr.amcn").string(), "--samples", "22"});
    EXPECT_EQ(r.code, cli::kExitFailure) << r.err;
}

}  // namespace
