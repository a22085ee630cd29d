#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "amc/neuralnet.hpp"
#include "amc/svm.hpp"

namespace amc {

/// Experiment configuration. The file format is flat `key = value` lines;
/// `#` starts a comment; lists are comma-separated. Unknown keys are errors.
///
/// Keys (default):
///   data_file            path to an AMCD file; empty = synthetic data ("")
///   normalize            RMS-normalize frames to unit power (false)
///   frames_per_cell      synthetic frames per (scheme, SNR) cell (200)
///   epochs               CNN training epochs (30)
///   batch_size           (128)
///   learning_rate        (0.001)
///   momentum             (0.9)
///   ls_alpha             label smoothing factor in [0, 1] (0.1)
///   gna_variance         Gaussian augmentation variance (0.003)
///   svm_features         training examples sampled for the SVM (10000)
///   svm_c                C grid (0.1,1,10,100)
///   svm_gamma            gamma grid; "1/d" = inverse feature width (1/d,0.01,0.1,1)
///   svm_folds            cross-validation folds (3)
///   svm_standardize      z-score features before the SVM (true)
///   rejection_rate       benign set-I rejection target (0.10)
///   eval_snr_db          SNR of the evaluation frames (10)
///   eval_samples         evaluation frames drawn at that SNR (1000)
///   pnr_db               PNR sweep in dB (-20,-18,...,0)
///   systems              subset of dnn,nr,ls-gna-nr (all three)
///   seeds                one full run per seed (1)
///   counting_policy      lenient | strict (lenient)
///   amplification_pnr_db (0)
///   table_floor          clean-accuracy floor of the per-scheme table (0.40)
///   output_dir           run directory (runs/default)
struct ExperimentConfig {
    std::string data_file;
    bool normalize = false;
    std::int64_t frames_per_cell = 200;

    nn::TrainConfig training;
    std::size_t svm_features = 10000;
    svm::CvGrid svm_grid;
    bool svm_standardize = true;

    double rejection_rate = 0.10;
    int eval_snr_db = 10;
    std::size_t eval_samples = 1000;
    std::vector<double> pnr_db;
    std::vector<std::string> systems{"dnn", "nr", "ls-gna-nr"};
    std::vector<std::uint64_t> seeds{1};
    std::string counting_policy = "lenient";
    double amplification_pnr_db = 0.0;
    double table_floor = 0.40;
    std::string output_dir = "runs/default";

    ExperimentConfig();
    void validate() const;
    /// Every key with its resolved value, in schema order.
    std::vector<std::pair<std::string, std::string>> echo() const;
};

ExperimentConfig parse_config_text(const std::string& text);
/// Relative data_file paths resolve against the config file's directory.
ExperimentConfig parse_config(const std::filesystem::path& path);

std::vector<double> parse_double_list(const std::string& text, const std::string& key);

}  // namespace amc
