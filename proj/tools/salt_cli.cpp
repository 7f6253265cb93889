// Command-line front end: pretraining, adaptation experiments, evaluation,
// sweeps and the communication-latency calculator.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "salt/harness.hpp"
#include "salt/sha256.hpp"

using namespace salt;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f << text;
}

struct CommonModelArgs {
    std::string preset = "resnet8-desk";
    int classes = 10;
    std::string backbone_path;

    Backbone load() const {
        Backbone bb = build_backbone(backbone_preset(preset, classes), 0);
        load_into_layer(*bb.layers, load_saltw(backbone_path));
        return bb;
    }
};

void add_dataset_flags(CLI::App* cmd, DatasetSpec& spec) {
    cmd->add_option("--dataset", spec.source,
                    "dataset source: synthetic-blobs | cifar10-binary | cifar100-binary");
    cmd->add_option("--data-dir", spec.root, "dataset root (falls back to SALT_DATA_DIR)");
    cmd->add_option("--blob-classes", spec.blob_classes, "synthetic blobs: class count");
    cmd->add_option("--blob-train", spec.blob_train, "synthetic blobs: train samples");
    cmd->add_option("--blob-test", spec.blob_test, "synthetic blobs: test samples");
    cmd->add_option("--blob-noise", spec.blob_noise, "synthetic blobs: noise sigma");
    cmd->add_option("--blob-seed", spec.blob_seed, "synthetic blobs: generator seed");
}

std::vector<int32_t> parse_subtask(const std::string& csv) {
    std::vector<int32_t> out;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

void print_summary(const ExperimentResult& r) {
    std::printf("%s @ %s: accuracy %.4f +- %.4f", method_name(r.config.method),
                split_point_name(r.config.split_point), r.accuracy.mean, r.accuracy.ci95);
    if (method_trains(r.config.method)) {
        std::printf(", epochs %.1f +- %.1f, total latency %.3f s (inf %.4f s)", r.epochs.mean,
                    r.epochs.ci95, r.total_s.mean, r.inf_s.mean);
    } else {
        std::printf(", no training (inf %.4f s)", r.inf_s.mean);
    }
    std::printf("\n");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SALT: client-side adapter tuning for closed split computing"};
    app.require_subcommand(1);

    // ------------------------------ pretrain ------------------------------
    auto* pre = app.add_subcommand("pretrain", "train an unsplit backbone on the full task");
    pre->set_config("--config");
    DatasetSpec pre_data;
    std::string pre_preset = "resnet8-desk";
    int pre_classes = 10;
    int pre_epochs = 30, pre_batch = 128, pre_patience = 5;
    double pre_lr = 1e-3;
    uint64_t pre_seed = 1;
    std::string pre_out = "backbone.saltw", pre_manifest;
    add_dataset_flags(pre, pre_data);
    pre->add_option("--preset", pre_preset, "backbone preset: resnet8-desk | resnet18-cifar");
    pre->add_option("--classes", pre_classes, "logit head width");
    pre->add_option("--epochs", pre_epochs, "pretraining epoch budget");
    pre->add_option("--batch", pre_batch, "batch size");
    pre->add_option("--lr", pre_lr, "learning rate");
    pre->add_option("--patience", pre_patience, "early-stopping patience");
    pre->add_option("--seed", pre_seed, "init + shuffle seed");
    pre->add_option("--out", pre_out, "SALTW1 checkpoint path");
    pre->add_option("--manifest", pre_manifest, "optional split manifest path (all split points)");

    // ------------------------------- adapt --------------------------------
    auto* adapt = app.add_subcommand("adapt", "run one adaptation experiment (trials x seeds)");
    adapt->set_config("--config");
    CommonModelArgs adapt_model;
    ExperimentConfig acfg;
    std::string adapt_subtask = "0,1,2,3,4";
    std::string adapt_split = "AfterBlock2", adapt_method = "SALT-Residual";
    std::string adapt_out, adapt_save_adapter, adapt_save_head;
    add_dataset_flags(adapt, acfg.dataset);
    adapt->add_option("--preset", adapt_model.preset, "backbone preset");
    adapt->add_option("--classes", adapt_model.classes, "logit head width");
    adapt->add_option("--backbone", adapt_model.backbone_path, "pretrained SALTW1 checkpoint")
        ->required();
    adapt->add_option("--subtask", adapt_subtask, "comma-separated class subset");
    adapt->add_option("--split-point", adapt_split,
                      "BeforeBlock1|AfterBlock1|AfterBlock2|AfterBlock3");
    adapt->add_option("--method", adapt_method,
                      "Original|Retrain|Tune|SALT-Insertion|SALT-Residual");
    adapt->add_option("--p", acfg.loss_rate, "training packet loss rate");
    adapt->add_option("--eval-p", acfg.eval_loss_rate, "evaluation loss rate (default: same as --p)");
    adapt->add_option("--theta", acfg.bandwidth_bps, "bandwidth, bits/s");
    adapt->add_option("--seed", acfg.base_seed, "base seed");
    adapt->add_option("--trials", acfg.trials, "independent trials");
    adapt->add_option("--batch", acfg.batch_size, "batch size");
    adapt->add_option("--lr", acfg.lr, "learning rate");
    adapt->add_option("--max-epochs", acfg.max_epochs, "epoch budget");
    adapt->add_option("--patience", acfg.patience, "early-stopping patience");
    adapt->add_option("--train-cap", acfg.train_cap, "subtask train-sample cap (0 = all)");
    adapt->add_flag("--deterministic-latency", acfg.deterministic_latency,
                    "model compute time from MAC counts (bit-reproducible CSV)");
    adapt->add_option("--out", adapt_out, "results CSV path");
    adapt->add_option("--save-adapter", adapt_save_adapter, "save the first trial's adapter");
    adapt->add_option("--save-head", adapt_save_head, "save the first trial's (open) head");

    // ------------------------------ evaluate ------------------------------
    auto* eval = app.add_subcommand("evaluate", "personalized accuracy of a stored model");
    eval->set_config("--config");
    CommonModelArgs eval_model;
    DatasetSpec eval_data;
    std::string eval_subtask = "0,1,2,3,4", eval_split = "AfterBlock2", eval_method = "Original";
    std::string eval_adapter, eval_head;
    double eval_p = 0.0;
    uint64_t eval_seed = 1;
    int eval_batch = 128;
    add_dataset_flags(eval, eval_data);
    eval->add_option("--preset", eval_model.preset, "backbone preset");
    eval->add_option("--classes", eval_model.classes, "logit head width");
    eval->add_option("--backbone", eval_model.backbone_path, "pretrained SALTW1 checkpoint")
        ->required();
    eval->add_option("--subtask", eval_subtask, "comma-separated class subset");
    eval->add_option("--split-point", eval_split, "split point");
    eval->add_option("--method", eval_method, "method whose artifacts are being evaluated");
    eval->add_option("--adapter", eval_adapter, "adapter SALTW1 (SALT methods)");
    eval->add_option("--head", eval_head, "trained open-head SALTW1 (Retrain/Tune)");
    eval->add_option("--p", eval_p, "evaluation packet loss rate");
    eval->add_option("--seed", eval_seed, "mask stream seed");
    eval->add_option("--batch", eval_batch, "evaluation batch size");

    // ------------------------------- sweep --------------------------------
    auto* sw = app.add_subcommand("sweep", "baseline matrix over loss rates or split points");
    sw->set_config("--config");
    CommonModelArgs sweep_model;
    ExperimentConfig scfg;
    std::string sweep_axis = "p", sweep_subtask = "0,1,2,3,4", sweep_split = "AfterBlock2";
    std::string sweep_out = "results.csv";
    std::string sweep_p_grid = "0,0.25,0.5,0.75";
    add_dataset_flags(sw, scfg.dataset);
    sw->add_option("--preset", sweep_model.preset, "backbone preset");
    sw->add_option("--classes", sweep_model.classes, "logit head width");
    sw->add_option("--backbone", sweep_model.backbone_path, "pretrained SALTW1 checkpoint")
        ->required();
    sw->add_option("--axis", sweep_axis, "sweep axis: p | split");
    sw->add_option("--p-grid", sweep_p_grid, "loss rates for --axis p");
    sw->add_option("--subtask", sweep_subtask, "comma-separated class subset");
    sw->add_option("--split-point", sweep_split, "fixed split point for --axis p");
    sw->add_option("--p", scfg.loss_rate, "fixed loss rate for --axis split");
    sw->add_option("--theta", scfg.bandwidth_bps, "bandwidth, bits/s");
    sw->add_option("--seed", scfg.base_seed, "base seed");
    sw->add_option("--trials", scfg.trials, "trials per cell");
    sw->add_option("--batch", scfg.batch_size, "batch size");
    sw->add_option("--lr", scfg.lr, "learning rate");
    sw->add_option("--max-epochs", scfg.max_epochs, "epoch budget");
    sw->add_option("--patience", scfg.patience, "early-stopping patience");
    sw->add_option("--train-cap", scfg.train_cap, "subtask train-sample cap (0 = all)");
    sw->add_flag("--deterministic-latency", scfg.deterministic_latency,
                 "model compute time from MAC counts (bit-reproducible CSV)");
    sw->add_option("--out", sweep_out, "results CSV path");

    // ------------------------------ latency -------------------------------
    auto* lat = app.add_subcommand("latency", "evaluate the communication-latency model");
    uint64_t lat_vz = 262144, lat_batch = 128, lat_epochs = 0, lat_samples = 0;
    double lat_theta = 80e6;
    lat->add_option("--vz-bits", lat_vz, "latent size per sample, bits");
    lat->add_option("--batch", lat_batch, "batch size B");
    lat->add_option("--theta", lat_theta, "bandwidth, bits/s");
    lat->add_option("--epochs", lat_epochs, "training epochs E (with --samples: total latency)");
    lat->add_option("--samples", lat_samples, "training set size N");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pre) {
            auto [train, test] = load_dataset(pre_data);
            Backbone bb = build_backbone(backbone_preset(pre_preset, pre_classes), pre_seed);
            const PretrainReport report = pretrain_backbone(bb, train, test, pre_epochs, pre_batch,
                                                            pre_lr, pre_seed, pre_patience);
            NamedTensors named;
            bb.layers->collect_named(named);
            save_saltw(pre_out, named);
            std::printf("pretrained %s for %d epochs: train acc %.4f, test acc %.4f\n",
                        pre_preset.c_str(), report.epochs_run, report.train_accuracy,
                        report.test_accuracy);
            std::printf("checkpoint: %s (sha256 %s)\n", pre_out.c_str(),
                        sha256_hex(encode_saltw(named)).c_str());
            if (!pre_manifest.empty()) {
                std::string text;
                for (SplitPoint p : kAllSplitPoints) {
                    text += split_manifest(bb, split_at(bb, p, HeadMode::Closed)) + "\n";
                }
                write_text(pre_manifest, text);
            }
        } else if (*adapt) {
            acfg.subtask_classes = parse_subtask(adapt_subtask);
            acfg.preset = adapt_model.preset;
            acfg.split_point = split_point_from(adapt_split);
            acfg.method = method_from(adapt_method);
            const Backbone bb = adapt_model.load();
            auto [train, test] = load_dataset(acfg.dataset);
            TrialModel first;
            const ExperimentResult result = run_experiment(acfg, bb, train, test, &first);
            print_summary(result);
            const std::string csv = results_csv_header() + result_csv_rows(result);
            if (!adapt_out.empty()) {
                write_text(adapt_out, csv);
            } else {
                std::fputs(csv.c_str(), stdout);
            }
            if (!adapt_save_adapter.empty()) {
                if (!first.adapter) throw ConfigurationError("--save-adapter needs a SALT method");
                save_saltw(adapt_save_adapter, decode_saltw(first.adapter->image()));
            }
            if (!adapt_save_head.empty()) {
                if (!first.split.open_head()) {
                    throw ConfigurationError("--save-head needs an open-head method");
                }
                save_saltw(adapt_save_head, decode_saltw(first.split.open_head()->image()));
            }
        } else if (*eval) {
            const Backbone bb = eval_model.load();
            const Method method = method_from(eval_method);
            TrialModel model = build_trial_model(bb, split_point_from(eval_split), method, eval_seed);
            if (!eval_adapter.empty()) {
                if (!model.adapter) throw ConfigurationError("--adapter needs a SALT method");
                model.adapter->load(load_saltw(eval_adapter));
            }
            if (!eval_head.empty()) {
                if (!model.split.open_head()) {
                    throw ConfigurationError("--head needs an open-head method");
                }
                model.split.open_head()->load(load_saltw(eval_head));
            }
            auto [train, test] = load_dataset(eval_data);
            SubtaskSpec spec;
            spec.class_subset = parse_subtask(eval_subtask);
            spec.val_fraction = 0.0;
            const Subtask task = make_subtask(train, test, spec, eval_seed);
            const double acc = evaluate_personalized(model, task.test,
                                                     {eval_p, 80e6, Rng::derive(eval_seed, 404)},
                                                     eval_batch);
            std::printf("personalized top-1 accuracy: %.4f (p=%g, %lld test samples)\n", acc,
                        eval_p, static_cast<long long>(task.test.count()));
        } else if (*sw) {
            scfg.subtask_classes = parse_subtask(sweep_subtask);
            scfg.preset = sweep_model.preset;
            scfg.split_point = split_point_from(sweep_split);
            const Backbone bb = sweep_model.load();
            auto [train, test] = load_dataset(scfg.dataset);
            const std::vector<Method> methods = {Method::Original, Method::Retrain, Method::Tune,
                                                 Method::SaltInsertion, Method::SaltResidual};
            std::vector<ExperimentConfig> grid;
            if (sweep_axis == "p") {
                std::istringstream is(sweep_p_grid);
                std::string tok;
                while (std::getline(is, tok, ',')) {
                    for (Method m : methods) {
                        ExperimentConfig cfg = scfg;
                        cfg.loss_rate = std::strtod(tok.c_str(), nullptr);
                        cfg.method = m;
                        grid.push_back(cfg);
                    }
                }
            } else if (sweep_axis == "split") {
                for (SplitPoint p : kAllSplitPoints) {
                    for (Method m : methods) {
                        ExperimentConfig cfg = scfg;
                        cfg.split_point = p;
                        cfg.method = m;
                        grid.push_back(cfg);
                    }
                }
            } else {
                throw ConfigurationError("unknown sweep axis '" + sweep_axis + "'");
            }
            const std::string csv = sweep(grid, bb, train, test);
            write_text(sweep_out, csv);
            std::printf("wrote %zu result rows to %s\n",
                        static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1,
                        sweep_out.c_str());
        } else if (*lat) {
            const double per_batch = comm_latency_per_batch(lat_vz, lat_batch, lat_theta);
            std::printf("per_batch_s=%.12g\n", per_batch);
            if (lat_epochs > 0 && lat_samples > 0) {
                const double total = comm_latency_total(lat_epochs, lat_samples, lat_batch, per_batch);
                const uint64_t batches = (lat_samples + lat_batch - 1) / lat_batch;
                std::printf("batches_per_epoch=%llu\n", static_cast<unsigned long long>(batches));
                std::printf("total_s=%.12g\n", total);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
