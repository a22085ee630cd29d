#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "amc/binary_io.hpp"
#include "amc/error.hpp"
#include "amc/pipeline.hpp"
#include "test_util.hpp"

namespace {

using namespace amc;
using namespace amc::pipeline;
namespace fs = std::filesystem;

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

std::string read(const fs::path& p) {
    const auto b = io::read_file(p);
    return {b.begin(), b.end()};
}

TEST(StageRunner, SkipsWhenKeyAndOutputsMatch) {
    const auto dir = amc::test::temp_dir("runner-skip");
    write(dir / "in.txt", "alpha");
    int calls = 0;
    auto stage = [&](StageRunner& r, const std::string& params) {
        r.run("copy", params, {dir / "in.txt"}, {dir / "out.txt"}, [&] {
            ++calls;
            write(dir / "out.txt", read(dir / "in.txt") + params);
        });
        return r.timings().back().status;
    };
    StageRunner a(dir, std::nullopt, {});
    EXPECT_EQ(stage(a, "p"), "ran");
    EXPECT_EQ(stage(a, "p"), "skipped");
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(a.records()[0].key, a.records()[1].key);

    // Parameter, input and output changes each force a rerun.
    EXPECT_EQ(stage(a, "q"), "ran");
    write(dir / "in.txt", "beta");
    EXPECT_EQ(stage(a, "q"), "ran");
    write(dir / "out.txt", "tampered");
    EXPECT_EQ(stage(a, "q"), "ran");
    EXPECT_EQ(read(dir / "out.txt"), "betaq");
    fs::remove(dir / "out.txt");
    EXPECT_EQ(stage(a, "q"), "ran");
    EXPECT_EQ(calls, 5);

    // The record survives a new runner.
    StageRunner b(dir, std::nullopt, {});
    EXPECT_EQ(stage(b, "q"), "skipped");
}

TEST(StageRunner, RestoresFromCache) {
    const auto cache = amc::test::temp_dir("runner-cache");
    const auto d1 = amc::test::temp_dir("runner-cache-a"), d2 = amc::test::temp_dir("runner-cache-b");
    int calls = 0;
    for (const auto& dir : {d1, d2}) {
        write(dir / "in.txt", "same");
        StageRunner r(dir, cache, {});
        r.run("sub/stage", "p", {dir / "in.txt"}, {dir / "x" / "out.bin"}, [&] {
            ++calls;
            write(dir / "x" / "out.bin", "result");
        });
        EXPECT_EQ(r.timings().back().status, dir == d1 ? "ran" : "cached");
        EXPECT_EQ(read(dir / "x" / "out.bin"), "result");
    }
    EXPECT_EQ(calls, 1);

    // A corrupted cache entry is not trusted.
    for (const auto& e : fs::recursive_directory_iterator(cache)) {
        if (e.path().filename() == "out.bin") write(e.path(), "rotten");
    }
    const auto d3 = amc::test::temp_dir("runner-cache-c");
    write(d3 / "in.txt", "same");
    StageRunner r(d3, cache, {});
    r.run("sub/stage", "p", {d3 / "in.txt"}, {d3 / "x" / "out.bin"}, [&] {
        ++calls;
        write(d3 / "x" / "out.bin", "result");
    });
    EXPECT_EQ(r.timings().back().status, "ran");
    EXPECT_EQ(calls, 2);
}

TEST(StageRunner, FailureQuarantinesOutputs) {
    const auto dir = amc::test::temp_dir("runner-fail");
    StageRunner r(dir, std::nullopt, {});
    EXPECT_THROW(r.run("seed-1/broken", "p", {}, {dir / "a.bin", dir / "b.bin"},
                       [&] {
                           write(dir / "a.bin", "half");
                           write(dir / "b.bin.partial", "torn");
                           throw SolverError("boom", 0.5);
                       }),
                 SolverError);
    EXPECT_FALSE(fs::exists(dir / "a.bin"));
    EXPECT_FALSE(fs::exists(dir / "b.bin.partial"));
    std::vector<fs::path> q;
    for (const auto& e : fs::directory_iterator(dir / "quarantine")) q.push_back(e.path());
    ASSERT_EQ(q.size(), 1u);
    EXPECT_EQ(q[0].filename().string().rfind("seed-1_broken-", 0), 0u);
    EXPECT_EQ(q[0].filename().string().size(), std::string("seed-1_broken-").size() + 12);
    EXPECT_EQ(read(q[0] / "a.bin"), "half");
    EXPECT_TRUE(fs::exists(q[0] / "b.bin.partial"));
    EXPECT_TRUE(r.records().empty());

    // A body that forgets an output also fails.
    EXPECT_THROW(r.run("lazy", "p", {}, {dir / "c.bin"}, [] {}), Error);
}

TEST(DirectoryLock, ExclusiveUntilReleased) {
    const auto dir = amc::test::temp_dir("lock");
    {
        DirectoryLock a(dir);
        EXPECT_TRUE(fs::exists(dir / ".lock"));
        EXPECT_THROW(DirectoryLock b(dir), Error);
    }
    EXPECT_FALSE(fs::exists(dir / ".lock"));
    EXPECT_NO_THROW(DirectoryLock c(dir));
}

TEST(MergeRuns, MeanAndSampleStd) {
    const auto dir = amc::test::temp_dir("merge");
    const std::string header = "system,perturbation,pnr_db,set,scheme,n,correct,rejected,accuracy\n";
    write(dir / "run" / "seed-1" / "rows.csv", header + "nr,fgm,-10,I,all,4,1,0,0.250000\n");
    write(dir / "run" / "seed-2" / "rows.csv", header + "nr,fgm,-10,I,all,4,3,0,0.750000\n");
    merge_runs({dir / "run"}, dir / "out");
    const auto agg = read(dir / "out" / "aggregate.csv");
    EXPECT_EQ(agg.substr(0, agg.find('\n')), "system,perturbation,pnr_db,set,scheme,runs,mean_accuracy,std_accuracy");
    // Mean 0.5, sample std sqrt(0.125).
    EXPECT_NE(agg.find("nr,fgm,-10,I,all,2,0.500000,0.353553"), std::string::npos) << agg;
    const auto rows = read(dir / "out" / "rows.csv");
    EXPECT_NE(rows.find("seed"), std::string::npos);
}

TEST(ParseRows, RoundTripsCsv) {
    const std::string text =
        "system,perturbation,pnr_db,set,scheme,n,correct,rejected,accuracy\n"
        "dnn,jamming,clean,II,GFSK,10,4,0,0.400000\n"
        "nr,fgm,-2.5,all,all,8,6,2,0.750000\n";
    const auto rows = parse_rows_csv(text);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].clean);
    EXPECT_EQ(rows[0].perturbation, analysis::Perturbation::Jamming);
    EXPECT_EQ(rows[1].pnr_db, -2.5);
    EXPECT_EQ(rows[1].rejected, 2u);
    EXPECT_EQ(analysis::rows_csv_header() + "\n" + analysis::to_csv_row(rows[0]) + "\n" + analysis::to_csv_row(rows[1]) + "\n",
              text);
    EXPECT_THROW(parse_rows_csv(text + "nr,fgm,0,I\n"), FormatError);
}

/// High-SNR external data keeps training short while leaving a usable set I.
ExperimentConfig tiny_config(const fs::path& out) {
    static const fs::path data = [] {
        const auto d = amc::test::temp_dir("pipeline-data");
        SynthConfig sc;
        sc.snrs_db = {10, 18};
        sc.frames_per_cell = 50;
        save_dataset(generate_synthetic(sc, 8), d / "data.amcd");
        return d / "data.amcd";
    }();
    ExperimentConfig c;
    c.data_file = data.string();
    c.training.epochs = 10;
    c.training.learning_rate = 3e-3;
    c.training.batch_size = 32;
    c.svm_features = 550;
    c.svm_grid.c_values = {10.0};
    c.svm_grid.gamma_values = {0.0};
    c.svm_grid.folds = 2;
    c.eval_samples = 275;
    c.pnr_db = {-10, 0};
    c.seeds = {3};
    c.output_dir = out.string();
    return c;
}

class TinyPipeline : public ::testing::Test {
protected:
    void SetUp() override { unsetenv(kCacheEnv); }
};

TEST_F(TinyPipeline, RerunSkipsEverythingAndIsDeterministic) {
    const auto a = amc::test::temp_dir("pipeline-a");
    const auto first = run_pipeline(tiny_config(a));
    for (const auto& t : first.timings) EXPECT_EQ(t.status, "ran") << t.name;
    const auto manifest = read(a / "manifest.json");
    for (auto f : {"report/rows.csv", "report/aggregate.csv", "report/summary.json", "seed-3/table.csv",
                   "seed-3/amplification.csv", "seed-3/epsilon-l.csv", "seed-3/attacks-nr.amcd"}) {
        EXPECT_TRUE(fs::is_regular_file(a / f)) << f;
    }
    EXPECT_FALSE(fs::exists(a / ".lock"));

    const auto second = run_pipeline(tiny_config(a));
    ASSERT_EQ(second.timings.size(), first.timings.size());
    for (const auto& t : second.timings) EXPECT_EQ(t.status, "skipped") << t.name;
    EXPECT_EQ(read(a / "manifest.json"), manifest);

    // An independent run from scratch reproduces every report byte.
    const auto b = amc::test::temp_dir("pipeline-b");
    run_pipeline(tiny_config(b));
    for (auto f : {"report/rows.csv", "report/aggregate.csv", "report/summary.json", "seed-3/table.csv",
                   "seed-3/attacks-ls-gna-nr.amcd", "seed-3/cnn-lsgna.amcm", "seed-3/nr-plain.amcn"}) {
        EXPECT_EQ(read(a / f), read(b / f)) << f;
    }
}

TEST_F(TinyPipeline, LockedDirectoryIsRefused) {
    const auto dir = amc::test::temp_dir("pipeline-locked");
    DirectoryLock hold(dir);
    EXPECT_THROW(run_pipeline(tiny_config(dir)), Error);
}

}  // namespace
