#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "amc/analysis.hpp"
#include "amc/error.hpp"
#include "fixtures.hpp"

namespace {

using namespace amc;
using namespace amc::analysis;

TEST(CosineDistance, KnownAngles) {
    const std::vector<double> v{1.0, 2.0, -3.0}, neg{-1.0, -2.0, 3.0};
    const std::vector<double> e0{1.0, 0.0}, e1{0.0, 5.0};
    EXPECT_EQ(cosine_distance(v, v), 0.0);
    EXPECT_NEAR(cosine_distance(v, neg), 2.0, 1e-15);
    EXPECT_NEAR(cosine_distance(e0, e1), 1.0, 1e-15);
    const std::vector<double> a{0.3, -1.2, 4.0}, b{2.0, 0.1, 0.5};
    EXPECT_EQ(cosine_distance(a, b), cosine_distance(b, a));
    // Scale invariant.
    const std::vector<double> a3{0.9, -3.6, 12.0};
    EXPECT_NEAR(cosine_distance(a3, b), cosine_distance(a, b), 1e-15);
    EXPECT_THROW(cosine_distance(std::vector<double>{0.0, 0.0}, e0), PreconditionError);
    EXPECT_THROW(cosine_distance(v, e0), ShapeError);
}

TEST(Amplification, ZeroBudgetIsAllZeros) {
    const auto& sys = amc::test::small_system();
    const std::span<const LabeledExample> frames(sys.test.examples.data(), 8);
    const auto p = amplification_profile(sys.cnn, frames, attacks::AttackBudget::from_epsilon(0.0), 1);
    ASSERT_EQ(p.layer_names.size(), 4u);
    EXPECT_EQ(p.n_pairs, 8u);
    for (std::size_t l = 0; l < 4; ++l) {
        EXPECT_EQ(p.mean_cosine_adv[l], 0.0);
        EXPECT_EQ(p.mean_cosine_noisy[l], 0.0);
    }
}

TEST(Amplification, PositiveBudgetMovesEveryLayer) {
    const auto& sys = amc::test::small_system();
    const std::span<const LabeledExample> frames(sys.test.examples.data(), 8);
    const auto p = amplification_profile(sys.cnn, frames, attacks::AttackBudget::from_pnr_db(0), 1);
    for (std::size_t l = 0; l < 4; ++l) {
        EXPECT_GT(p.mean_cosine_adv[l], 0.0) << p.layer_names[l];
        EXPECT_GT(p.mean_cosine_noisy[l], 0.0) << p.layer_names[l];
        EXPECT_LE(p.mean_cosine_adv[l], 2.0);
    }
}

TEST(EpsilonL, ToyScores) {
    Eigen::VectorXd s(3);
    s << 1.0, 3.0, 2.0;
    int asked_a = -1, asked_b = -1;
    const auto e = epsilon_l(s, 1, [&](int a, int b) {
        asked_a = a;
        asked_b = b;
        return std::vector<double>{0.5, -0.25};
    });
    EXPECT_EQ(asked_a, 1);
    EXPECT_EQ(asked_b, 2);
    EXPECT_EQ(e.competitor, 2);
    EXPECT_DOUBLE_EQ(e.value, 1.0 / 0.75);
}

TEST(EpsilonL, TiesZeroGradientAndMisclassified) {
    Eigen::VectorXd tie(2);
    tie << 2.0, 2.0;
    EXPECT_EQ(epsilon_l(tie, 0, [](int, int) { return std::vector<double>{1.0}; }).value, 0.0);
    EXPECT_EQ(epsilon_l(tie, 0, [](int, int) { return std::vector<double>{0.0}; }).value, kInfiniteEpsilonL);
    Eigen::VectorXd wrong(2);
    wrong << 1.0, 4.0;
    EXPECT_LT(epsilon_l(wrong, 0, [](int, int) { return std::vector<double>{1.0}; }).value, 0.0);
    EXPECT_THROW(epsilon_l(wrong, 2, [](int, int) { return std::vector<double>{1.0}; }), PreconditionError);
}

// A linear scorer: the L-infinity step of size eps_L along -sign(grad) closes the margin exactly.
TEST(EpsilonL, LinearScorerBoundIsTight) {
    const Eigen::Vector3d w0(1.0, -2.0, 0.5), w1(-0.5, 1.0, 2.0);
    const Eigen::Vector3d x(0.8, -0.3, 0.1);
    Eigen::VectorXd s(2);
    s << w0.dot(x), w1.dot(x);
    ASSERT_GT(s(0), s(1));
    const auto e = epsilon_l(s, 0, [&](int, int) {
        const Eigen::Vector3d d = w0 - w1;
        return std::vector<double>(d.data(), d.data() + 3);
    });
    const Eigen::Vector3d step = -e.value * (w0 - w1).cwiseSign();
    EXPECT_NEAR((w0 - w1).dot(x + step), 0.0, 1e-12);
}

TEST(EpsilonL, SummaryPartitionsExamples) {
    const auto& sys = amc::test::small_system();
    const auto s = mean_epsilon_l(sys.nr, sys.test.examples);
    EXPECT_EQ(s.n_used + s.n_infinite + s.n_misclassified, sys.test.size());
    EXPECT_EQ(s.n_misclassified, sys.test.size() - sys.nr_correct.size());
    EXPECT_GT(s.mean, 0.0);
    std::vector<double> v;
    for (const auto& ex : sys.test.examples) {
        const auto e = robustness_epsilon_l(sys.nr, ex.frame, ex.label);
        if (e.value >= 0.0 && std::isfinite(e.value)) v.push_back(e.value);
    }
    ASSERT_EQ(v.size(), s.n_used);
    const auto below = std::count_if(v.begin(), v.end(), [&](double x) { return x < s.median; });
    const auto above = std::count_if(v.begin(), v.end(), [&](double x) { return x > s.median; });
    EXPECT_LE(below, std::ptrdiff_t(v.size() / 2));
    EXPECT_LE(above, std::ptrdiff_t(v.size() / 2));
}

/// Returns a fixed verdict and never perturbs.
class FixedSystem : public System {
public:
    explicit FixedSystem(nr::Verdict v) : v_(v) {}
    std::string tag() const override { return "fixed"; }
    nr::Verdict classify(const IQFrame&) const override { return v_; }
    attacks::AttackOutcome fgm(const IQFrame& frame, int, double epsilon) const override {
        attacks::AttackOutcome o;
        o.adversarial = frame;
        o.epsilon_used = epsilon;
        return o;
    }

private:
    nr::Verdict v_;
};

struct EvalData {
    DatasetBundle test;
    EvalSplit split;
};

EvalData eval_data() {
    SynthConfig sc;
    sc.schemes = {"BPSK", "QPSK", "GFSK"};
    sc.snrs_db = {10};
    sc.frames_per_cell = 6;
    EvalData d{generate_synthetic(sc, 3), {}};
    // Set I: BPSK frames; set II: the rest.
    for (std::size_t i = 0; i < d.test.size(); ++i) {
        (d.test.examples[i].label == *class_index("BPSK") ? d.split.set_one : d.split.set_two).push_back(i);
    }
    d.split.size_total = d.test.size();
    return d;
}

TEST(Evaluate, AlwaysRejectUnderBothPolicies) {
    const auto d = eval_data();
    const FixedSystem reject(nr::Verdict::reject());
    const std::vector<double> pnr{-10, 0};
    EvalOptions lenient;
    const auto r = evaluate(reject, d.test, d.split, pnr, lenient);
    EXPECT_EQ(r.find(true, 0, "all").accuracy(), 0.0);
    EXPECT_EQ(r.find(true, 0, "all").rejection_rate(), 1.0);
    for (double p : pnr) {
        for (auto set : {"I", "II", "all"}) EXPECT_EQ(r.find(false, p, set).accuracy(), 1.0) << set;
    }
    EvalOptions strict;
    strict.policy = CountingPolicy::Strict;
    const auto s = evaluate(reject, d.test, d.split, pnr, strict);
    for (double p : pnr) EXPECT_EQ(s.find(false, p, "all").accuracy(), 0.0);
}

TEST(Evaluate, RejectionFreeSystemIgnoresPolicy) {
    const auto d = eval_data();
    const FixedSystem bpsk(nr::Verdict::of(*class_index("BPSK")));
    const std::vector<double> pnr{-20, -5};
    EvalOptions strict;
    strict.policy = CountingPolicy::Strict;
    const auto a = evaluate(bpsk, d.test, d.split, pnr);
    const auto b = evaluate(bpsk, d.test, d.split, pnr, strict);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(to_csv_row(a.rows[i]), to_csv_row(b.rows[i]));
    EXPECT_EQ(a.find(false, -5, "I").accuracy(), 1.0);
    EXPECT_EQ(a.find(false, -5, "II").accuracy(), 0.0);
    EXPECT_NEAR(a.find(false, -5, "all").accuracy(), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(a.find(true, 0, "all", "QPSK").n, 6u);
    EXPECT_THROW(a.find(false, 7, "all"), PreconditionError);
}

TEST(Evaluate, JammingEmitsExactNormPerturbations) {
    const auto d = eval_data();
    const FixedSystem sys(nr::Verdict::of(0));
    const std::vector<double> pnr{-10};
    EvalOptions o;
    o.perturbation = Perturbation::Jamming;
    o.seed = 4;
    std::size_t seen = 0;
    o.on_outcome = [&](std::size_t idx, double p, const attacks::AttackOutcome& out) {
        const auto& ex = d.test.examples[idx];
        const double eps = attacks::AttackBudget::from_pnr_db(p).epsilon_for(ex.frame, ex.snr_db);
        double dist = 0.0;
        for (std::size_t i = 0; i < kFrameSize; ++i) {
            const double v = double(out.adversarial.values()[i]) - double(ex.frame.values()[i]);
            dist += v * v;
        }
        EXPECT_NEAR(std::sqrt(dist), eps, 1e-5);
        ++seen;
    };
    evaluate(sys, d.test, d.split, pnr, o);
    EXPECT_EQ(seen, d.test.size());
}

EvalReport report_with(const std::string& name, double clean_bpsk, double clean_qpsk, double pnr, double adv) {
    EvalReport r;
    r.system = name;
    auto row = [&](bool clean, const std::string& scheme, double acc) {
        EvalRow e;
        e.system = name;
        e.clean = clean;
        e.pnr_db = clean ? 0.0 : pnr;
        e.set = "all";
        e.scheme = scheme;
        e.n = 100;
        e.correct = std::size_t(std::lround(acc * 100));
        r.rows.push_back(e);
    };
    row(true, "all", 0.5);
    row(true, "BPSK", clean_bpsk);
    row(true, "QPSK", clean_qpsk);
    row(false, "all", adv);
    row(false, "BPSK", adv);
    row(false, "QPSK", adv / 2);
    return r;
}

TEST(Table, FloorSelectsRows) {
    const auto ref = report_with("nr", 0.9, 0.3, -10, 0.6);
    const std::vector<EvalReport> reports{ref, report_with("dnn", 0.95, 0.5, -10, 0.2)};
    const auto t = per_modulation_table(ref, reports, 0.40);
    ASSERT_EQ(t.columns, (std::vector<std::string>{"nr@-10dB", "dnn@-10dB"}));
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0].scheme, "BPSK");
    EXPECT_DOUBLE_EQ(t.rows[0].clean_accuracy, 0.9);
    EXPECT_EQ(t.rows[0].cells, (std::vector<double>{0.6, 0.2}));
    EXPECT_TRUE(per_modulation_table(ref, reports, 1.01).rows.empty());
    EXPECT_EQ(per_modulation_table(ref, reports, 0.0).rows.size(), 2u);
    // The floor itself is included.
    EXPECT_EQ(per_modulation_table(ref, reports, 0.3).rows.size(), 2u);
}

TEST(Csv, RowAndTableFormat) {
    EvalRow r;
    r.system = "ls-gna-nr";
    r.pnr_db = -7.5;
    r.set = "I";
    r.scheme = "QAM64";
    r.n = 4;
    r.correct = 3;
    r.rejected = 1;
    EXPECT_EQ(rows_csv_header(), "system,perturbation,pnr_db,set,scheme,n,correct,rejected,accuracy");
    EXPECT_EQ(to_csv_row(r), "ls-gna-nr,fgm,-7.5,I,QAM64,4,3,1,0.750000");
    r.clean = true;
    r.perturbation = Perturbation::Jamming;
    EXPECT_EQ(to_csv_row(r), "ls-gna-nr,jamming,clean,I,QAM64,4,3,1,0.750000");

    ModulationTable t{{"a@0dB"}, {{"BPSK", 0.5, {0.25}}}};
    EXPECT_EQ(table_csv(t), "scheme,clean_accuracy,a@0dB\nBPSK,0.500000,0.250000\n");
}

TEST(Counting, RulePerPolicy) {
    const auto rej = nr::Verdict::reject();
    EXPECT_FALSE(counts_as_correct(rej, 1, false, CountingPolicy::Lenient));
    EXPECT_TRUE(counts_as_correct(rej, 1, true, CountingPolicy::Lenient));
    EXPECT_FALSE(counts_as_correct(rej, 1, true, CountingPolicy::Strict));
    EXPECT_TRUE(counts_as_correct(nr::Verdict::of(1), 1, true, CountingPolicy::Strict));
    EXPECT_FALSE(counts_as_correct(nr::Verdict::of(2), 1, false, CountingPolicy::Lenient));
}

}  // namespace
