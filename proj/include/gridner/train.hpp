#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridner/checkpoint.hpp"
#include "gridner/model.hpp"

namespace gridner {

struct TrainConfig {
    int epochs = 15;
    int batch_size = 8;  // examples accumulated per optimizer step
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    double weight_decay = 0.0;       // decoupled, applied at the step
    double grad_clip = 0.0;          // global norm; 0 disables
    double none_class_weight = 1.0;  // loss weight of None cells; 1 matches the objective as stated

    void validate() const;
};

// Mean NLL over the n*n cells of one grid, with the None class optionally
// down-weighted (off by default).
Tensor nll_loss(const Tensor& probs, const GridLabelMatrix& gold,
                double none_class_weight = 1.0);

struct EpochStats {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double dev_precision = 0.0;
    double dev_recall = 0.0;
    double dev_f1 = 0.0;
    int dev_decode_failures = 0;  // dev examples whose prediction exceeded the path cap

    bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;  // 1-based; 0 when no epoch was evaluated
    double best_dev_f1 = 0.0;
    std::string checkpoint_path;

    bool operator==(const TrainReport&) const = default;
};

// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
public:
    AdamW(double learning_rate, double weight_decay = 0.0, double beta1 = 0.9,
          double beta2 = 0.999, double epsilon = 1e-8);
    // Applies accumulated gradients (scaled by 1/scale) and clears them.
    void step(std::vector<std::pair<std::string, Tensor*>> params, double scale = 1.0,
              double grad_clip = 0.0);

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct TrainData {
    std::vector<AnnotatedExample> corpus;
    std::vector<AnnotatedExample> dev;
    // Optional external per-token vectors aligned to corpus/dev.
    std::vector<std::vector<std::vector<double>>> corpus_vectors;
    std::vector<std::vector<std::vector<double>>> dev_vectors;
};

struct TrainOutcome {
    TrainReport report;
    Checkpoint best;  // parameters of the best dev-F1 epoch
};

// Deterministic given the seed: a fixed shuffled example order per epoch,
// seeded dropout, and single-threaded reductions. Saves the best checkpoint
// (by dev micro-F1) to `checkpoint_path` whenever it improves; `metrics`,
// when non-null, receives one line per epoch.
TrainOutcome train_model(const TrainData& data, ModelConfig model_config,
                         const TrainConfig& train_config,
                         const std::filesystem::path& checkpoint_path,
                         std::ostream* metrics = nullptr);

// fmt: "key = value" lines, '#' comments. Unknown keys are rejected.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace gridner
