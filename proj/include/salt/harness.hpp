#pragma once

#include <optional>
#include <string>

#include "salt/dataset.hpp"
#include "salt/early_stop.hpp"
#include "salt/protocol.hpp"

namespace salt {

// Adaptation method matrix: head access plus trainable set.
//   Original      - no access, no training
//   Retrain       - open head, trained from scratch
//   Tune          - open head, fine-tuned from the pretrained weights
//   SaltInsertion - closed head + insertion adapter
//   SaltResidual  - closed head + residual adapter
enum class Method { Original, Retrain, Tune, SaltInsertion, SaltResidual };

const char* method_name(Method m);
Method method_from(const std::string& name);
bool method_trains(Method m);
bool method_uses_open_head(Method m);

struct ExperimentConfig {
    DatasetSpec dataset;
    std::vector<int32_t> subtask_classes = {0, 1, 2, 3, 4};
    std::string preset = "resnet8-desk";
    SplitPoint split_point = SplitPoint::AfterBlock2;
    Method method = Method::SaltResidual;
    double loss_rate = 0.0;      // training-time p
    double eval_loss_rate = -1.0; // evaluation p; negative means "same as training"
    double bandwidth_bps = 80e6;
    uint64_t base_seed = 1;
    int trials = 10;
    int batch_size = 128;
    double lr = 1e-3;
    int max_epochs = 100;
    int patience = 5;
    double min_delta = 1e-4;
    double val_fraction = 0.1;
    int64_t train_cap = 2000; // desk-scale default; 0 trains on the full subtask
    // Replaces measured wall-clock compute with a MAC-count model so that
    // identical configs emit bit-identical CSVs.
    bool deterministic_latency = false;

    double resolved_eval_p() const { return eval_loss_rate < 0.0 ? loss_rate : eval_loss_rate; }

    bool operator==(const ExperimentConfig&) const = default;
};

// key=value round trip (bit-exact; doubles use shortest-exact formatting)
std::string config_to_kv(const ExperimentConfig& cfg);
ExperimentConfig config_from_kv(const std::string& text);

struct TrialResult {
    uint64_t seed = 0;
    double accuracy = 0.0;
    std::optional<int> epochs; // empty for methods that do not train
    double comp_s = 0.0;
    double comm_s = 0.0;
    double total_s = 0.0;
    double inf_s = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

struct Stats {
    double mean = 0.0;
    double ci95 = 0.0; // half-width; 0 when fewer than 2 samples
};

Stats mean_ci95(const std::vector<double>& xs);
// two-sided 97.5% Student-t quantile used for the confidence intervals
double t_quantile_975(int df);

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<TrialResult> trials;
    Stats accuracy;
    Stats epochs;
    Stats total_s;
    Stats inf_s;
};

// Everything needed to run one trial's model end to end.
struct TrialModel {
    Backbone backbone; // trial-local clone
    SplitModel split;
    std::shared_ptr<Adapter> adapter; // null unless a SALT method
};

// Builds the per-method model from the pretrained backbone (clone, split,
// re-init or adapter attach as the method dictates).
TrialModel build_trial_model(const Backbone& pretrained, SplitPoint point, Method method,
                             uint64_t seed);

// Personalized top-1 accuracy: argmax over the full logit vector (ties to
// the lowest index), correct iff it equals the original label. The uplink
// loss of `eval_channel` is applied to every transmitted batch.
double evaluate_personalized(const TrialModel& model, const Dataset& test,
                             const ChannelConfig& eval_channel, int batch_size = 128);

struct PretrainReport {
    int epochs_run = 0;
    double train_accuracy = 0.0; // on the training split after the run
    double test_accuracy = 0.0;
};

// Centralized training of the unsplit backbone on the full task (Adam,
// cross-entropy, early stopping on a stratified validation carve).
PretrainReport pretrain_backbone(Backbone& backbone, const Dataset& train, const Dataset& test,
                                 int max_epochs, int batch_size = 128, double lr = 1e-3,
                                 uint64_t seed = 1, int patience = 5, double min_delta = 1e-4,
                                 double val_fraction = 0.1);

// keep_first, when given, receives the first trial's trained model (for
// checkpointing from the CLI).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Backbone& pretrained,
                                const Dataset& full_train, const Dataset& full_test,
                                TrialModel* keep_first = nullptr);

std::string results_csv_header();
std::string result_csv_rows(const ExperimentResult& result);

// Runs every config, appending per-trial rows; individual trial aborts are
// recorded in the row and the sweep continues.
std::string sweep(const std::vector<ExperimentConfig>& configs, const Backbone& pretrained,
                  const Dataset& full_train, const Dataset& full_test);

} // namespace salt
