#pragma once

#include "amc/dataset.hpp"
#include "amc/neuralnet.hpp"
#include "amc/rejection.hpp"
#include "amc/svm.hpp"

namespace amc::test {

/// A small CNN and NR model trained once per process on high-SNR synthetic data.
struct SmallSystem {
    DatasetBundle train;
    DatasetBundle test;
    nn::CnnModel cnn;
    nr::NrModel nr;
    std::vector<std::size_t> nr_correct;  // test indices the NR argmax gets right
};

inline nn::Architecture small_trained_arch() {
    nn::Architecture a;
    a.conv1_filters = 16;
    a.conv2_filters = 8;
    a.hidden = 32;
    return a;
}

inline const SmallSystem& small_system() {
    static const SmallSystem sys = [] {
        SmallSystem s;
        SynthConfig sc;
        sc.snrs_db = {10, 18};
        sc.frames_per_cell = 30;
        auto [train, test] = split_train_test(generate_synthetic(sc, 21), 21);
        s.train = std::move(train);
        s.test = std::move(test);
        nn::TrainConfig tc;
        tc.epochs = 40;
        tc.batch_size = 32;
        tc.learning_rate = 1e-2;
        tc.seed = 21;
        s.cnn = nn::train(nn::CnnModel::initialized(small_trained_arch(), 21), s.train, tc).model;
        svm::CvGrid grid;
        grid.c_values = {10.0};
        grid.gamma_values = {0.0};
        grid.folds = 2;
        std::vector<int> labels;
        for (const auto& ex : s.train.examples) labels.push_back(ex.label);
        auto trained = svm::train_ova(nn::extract_features(s.cnn, s.train.examples), labels, kNumClasses, grid, 21);
        s.nr = nr::NrModel{s.cnn, std::move(trained.model), -1e9};
        for (std::size_t i = 0; i < s.test.size(); ++i) {
            const auto& ex = s.test.examples[i];
            if (nr::classify_with_reject(s.nr, ex.frame).argmax == ex.label) s.nr_correct.push_back(i);
        }
        return s;
    }();
    return sys;
}

}  // namespace amc::test
