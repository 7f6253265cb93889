#include "salt/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include "salt/ops.hpp"

namespace salt {

namespace {

using Clock = std::chrono::steady_clock;

// fixed rate for the deterministic compute-latency model
constexpr double kModelMacsPerSecond = 2.0e9;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

const char* method_name(Method m) {
    switch (m) {
        case Method::Original: return "Original";
        case Method::Retrain: return "Retrain";
        case Method::Tune: return "Tune";
        case Method::SaltInsertion: return "SALT-Insertion";
        case Method::SaltResidual: return "SALT-Residual";
    }
    throw ConfigurationError("unknown method enum value");
}

Method method_from(const std::string& name) {
    for (Method m : {Method::Original, Method::Retrain, Method::Tune, Method::SaltInsertion,
                     Method::SaltResidual}) {
        if (name == method_name(m)) return m;
    }
    throw ConfigurationError("unknown method '" + name + "'");
}

bool method_trains(Method m) { return m != Method::Original; }

bool method_uses_open_head(Method m) { return m == Method::Retrain || m == Method::Tune; }

std::string config_to_kv(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "dataset.source=" << c.dataset.source << "\n";
    os << "dataset.root=" << c.dataset.root << "\n";
    os << "dataset.blob_classes=" << c.dataset.blob_classes << "\n";
    os << "dataset.blob_train=" << c.dataset.blob_train << "\n";
    os << "dataset.blob_test=" << c.dataset.blob_test << "\n";
    os << "dataset.blob_noise=" << fmt_double(c.dataset.blob_noise) << "\n";
    os << "dataset.blob_seed=" << c.dataset.blob_seed << "\n";
    os << "subtask_classes=";
    for (size_t i = 0; i < c.subtask_classes.size(); ++i) {
        if (i) os << ",";
        os << c.subtask_classes[i];
    }
    os << "\n";
    os << "preset=" << c.preset << "\n";
    os << "split_point=" << split_point_name(c.split_point) << "\n";
    os << "method=" << method_name(c.method) << "\n";
    os << "loss_rate=" << fmt_double(c.loss_rate) << "\n";
    os << "eval_loss_rate=" << fmt_double(c.eval_loss_rate) << "\n";
    os << "bandwidth_bps=" << fmt_double(c.bandwidth_bps) << "\n";
    os << "base_seed=" << c.base_seed << "\n";
    os << "trials=" << c.trials << "\n";
    os << "batch_size=" << c.batch_size << "\n";
    os << "lr=" << fmt_double(c.lr) << "\n";
    os << "max_epochs=" << c.max_epochs << "\n";
    os << "patience=" << c.patience << "\n";
    os << "min_delta=" << fmt_double(c.min_delta) << "\n";
    os << "val_fraction=" << fmt_double(c.val_fraction) << "\n";
    os << "train_cap=" << c.train_cap << "\n";
    os << "deterministic_latency=" << (c.deterministic_latency ? 1 : 0) << "\n";
    return os.str();
}

ExperimentConfig config_from_kv(const std::string& text) {
    ExperimentConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigurationError("bad config line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "dataset.source") c.dataset.source = val;
        else if (key == "dataset.root") c.dataset.root = val;
        else if (key == "dataset.blob_classes") c.dataset.blob_classes = std::stoi(val);
        else if (key == "dataset.blob_train") c.dataset.blob_train = std::stoll(val);
        else if (key == "dataset.blob_test") c.dataset.blob_test = std::stoll(val);
        else if (key == "dataset.blob_noise") c.dataset.blob_noise = std::strtod(val.c_str(), nullptr);
        else if (key == "dataset.blob_seed") c.dataset.blob_seed = std::stoull(val);
        else if (key == "subtask_classes") {
            c.subtask_classes.clear();
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ',')) {
                if (!tok.empty()) c.subtask_classes.push_back(std::stoi(tok));
            }
        } else if (key == "preset") c.preset = val;
        else if (key == "split_point") c.split_point = split_point_from(val);
        else if (key == "method") c.method = method_from(val);
        else if (key == "loss_rate") c.loss_rate = std::strtod(val.c_str(), nullptr);
        else if (key == "eval_loss_rate") c.eval_loss_rate = std::strtod(val.c_str(), nullptr);
        else if (key == "bandwidth_bps") c.bandwidth_bps = std::strtod(val.c_str(), nullptr);
        else if (key == "base_seed") c.base_seed = std::stoull(val);
        else if (key == "trials") c.trials = std::stoi(val);
        else if (key == "batch_size") c.batch_size = std::stoi(val);
        else if (key == "lr") c.lr = std::strtod(val.c_str(), nullptr);
        else if (key == "max_epochs") c.max_epochs = std::stoi(val);
        else if (key == "patience") c.patience = std::stoi(val);
        else if (key == "min_delta") c.min_delta = std::strtod(val.c_str(), nullptr);
        else if (key == "val_fraction") c.val_fraction = std::strtod(val.c_str(), nullptr);
        else if (key == "train_cap") c.train_cap = std::stoll(val);
        else if (key == "deterministic_latency") c.deterministic_latency = val == "1";
        else throw ConfigurationError("unknown config key '" + key + "'");
    }
    return c;
}

double t_quantile_975(int df) {
    static const double table[30] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                     2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                     2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                     2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) throw ConfigurationError("t quantile needs df >= 1");
    if (df <= 30) return table[df - 1];
    return 1.96;
}

Stats mean_ci95(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return s;
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    const double sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    s.ci95 = t_quantile_975(static_cast<int>(xs.size()) - 1) * sd /
             std::sqrt(static_cast<double>(xs.size()));
    return s;
}

TrialModel build_trial_model(const Backbone& pretrained, SplitPoint point, Method method,
                             uint64_t seed) {
    TrialModel tm{pretrained.clone(), {}, nullptr};
    if (method_uses_open_head(method)) {
        tm.split = split_at(tm.backbone, point, HeadMode::Open);
        if (method == Method::Retrain) tm.split.open_head()->reinit(Rng::derive(seed, 101));
    } else {
        tm.split = split_at(tm.backbone, point, HeadMode::Closed);
        if (method == Method::SaltInsertion || method == Method::SaltResidual) {
            const AdapterKind kind =
                method == Method::SaltResidual ? AdapterKind::Residual : AdapterKind::Insertion;
            tm.adapter = std::make_shared<Adapter>(kind, tm.split.latent_shape()[0],
                                                   Rng::derive(seed, 202));
        }
    }
    return tm;
}

namespace {

Tensor batch_images(const Dataset& ds, int64_t begin, int64_t end) {
    const int64_t elems = shape_numel(ds.sample_shape);
    Shape shape = ds.sample_shape;
    shape.insert(shape.begin(), end - begin);
    Tensor x = Tensor::zeros(shape);
    std::memcpy(x.data(), ds.images.data() + begin * elems,
                static_cast<size_t>((end - begin) * elems) * sizeof(float));
    return x;
}

Tensor model_logits(const TrialModel& model, const Tensor& x, Channel& uplink) {
    Tensor z;
    if (model.split.head_mode() == HeadMode::Closed) {
        z = model.split.head()->forward(x);
    } else {
        z = model.split.open_head()->forward(nullptr, x, false);
    }
    Tensor zprime = model.adapter ? model.adapter->forward(nullptr, z, false) : z;
    const Tensor received = uplink.apply_uplink(zprime);
    return model.split.tail()->forward(received);
}

} // namespace

double evaluate_personalized(const TrialModel& model, const Dataset& test,
                             const ChannelConfig& eval_channel, int batch_size) {
    if (test.count() == 0) throw ConfigurationError("empty test set");
    Channel uplink(eval_channel);
    int64_t correct = 0;
    for (int64_t at = 0; at < test.count(); at += batch_size) {
        const int64_t hi = std::min<int64_t>(test.count(), at + batch_size);
        const Tensor logits = model_logits(model, batch_images(test, at, hi), uplink);
        const int64_t K = logits.dim(1);
        for (int64_t r = 0; r < hi - at; ++r) {
            const float* row = logits.data() + r * K;
            int64_t arg = 0;
            for (int64_t k = 1; k < K; ++k) {
                if (row[k] > row[arg]) arg = k; // ties resolve to the lowest index
            }
            if (arg == test.labels[static_cast<size_t>(at + r)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.count());
}

PretrainReport pretrain_backbone(Backbone& backbone, const Dataset& train, const Dataset& test,
                                 int max_epochs, int batch_size, double lr, uint64_t seed,
                                 int patience, double min_delta, double val_fraction) {
    std::vector<int32_t> all_classes(static_cast<size_t>(train.num_classes));
    for (int32_t c = 0; c < train.num_classes; ++c) all_classes[static_cast<size_t>(c)] = c;
    const Subtask split =
        make_subtask(train, test, {all_classes, val_fraction, 0}, Rng::derive(seed, 11));

    std::vector<Parameter*> params;
    backbone.layers->collect_params(params);
    AdamOptimizer adam(params, lr);
    Rng shuffle(Rng::derive(seed, 12));

    auto eval_loss = [&](const Dataset& ds) {
        double total = 0.0;
        for (int64_t at = 0; at < ds.count(); at += batch_size) {
            const int64_t hi = std::min<int64_t>(ds.count(), at + batch_size);
            const Tensor logits = backbone.forward(nullptr, batch_images(ds, at, hi), false);
            std::vector<int32_t> labels(ds.labels.begin() + at, ds.labels.begin() + hi);
            total += static_cast<double>(softmax_cross_entropy_with_grad(logits, labels).loss) *
                     static_cast<double>(hi - at);
        }
        return total / static_cast<double>(ds.count());
    };
    auto accuracy = [&](const Dataset& ds) {
        int64_t correct = 0;
        for (int64_t at = 0; at < ds.count(); at += batch_size) {
            const int64_t hi = std::min<int64_t>(ds.count(), at + batch_size);
            const Tensor logits = backbone.forward(nullptr, batch_images(ds, at, hi), false);
            const int64_t K = logits.dim(1);
            for (int64_t r = 0; r < hi - at; ++r) {
                const float* row = logits.data() + r * K;
                int64_t arg = 0;
                for (int64_t k = 1; k < K; ++k)
                    if (row[k] > row[arg]) arg = k;
                if (arg == ds.labels[static_cast<size_t>(at + r)]) ++correct;
            }
        }
        return static_cast<double>(correct) / static_cast<double>(std::max<int64_t>(1, ds.count()));
    };

    PretrainReport report;
    std::vector<double> val_losses;
    std::vector<uint8_t> best_image;
    const int64_t elems = shape_numel(split.train.sample_shape);
    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        const auto order = shuffle.permutation(split.train.count());
        for (int64_t at = 0; at < split.train.count(); at += batch_size) {
            const int64_t hi = std::min<int64_t>(split.train.count(), at + batch_size);
            Shape shape = split.train.sample_shape;
            shape.insert(shape.begin(), hi - at);
            Tensor x = Tensor::zeros(shape);
            std::vector<int32_t> labels;
            labels.reserve(static_cast<size_t>(hi - at));
            for (int64_t i = at; i < hi; ++i) {
                const int64_t row = order[static_cast<size_t>(i)];
                std::memcpy(x.data() + (i - at) * elems, split.train.sample(row),
                            static_cast<size_t>(elems) * sizeof(float));
                labels.push_back(split.train.labels[static_cast<size_t>(row)]);
            }
            Tape tape;
            const Tensor logits = backbone.forward(&tape, x, true);
            const Tensor loss = softmax_cross_entropy(&tape, logits, labels);
            if (!std::isfinite(loss.item())) {
                throw DivergenceError("pretraining loss is not finite at epoch " +
                                      std::to_string(epoch));
            }
            tape.backward(loss);
            adam.step();
        }
        val_losses.push_back(eval_loss(split.val.count() ? split.val : split.train));
        report.epochs_run = epoch;
        const EarlyStopResult es = early_stop(val_losses, patience, min_delta, max_epochs);
        if (es.best_epoch == epoch) best_image = backbone.image();
        if (es.stopped_early) break;
    }
    if (!best_image.empty()) load_into_layer(*backbone.layers, decode_saltw(best_image));
    report.train_accuracy = accuracy(split.train);
    report.test_accuracy = accuracy(split.test);
    return report;
}

namespace {

InputPool pool_from(const Dataset& ds) {
    InputPool pool;
    pool.sample_shape = ds.sample_shape;
    pool.data = ds.images;
    pool.ids = ds.ids;
    return pool;
}

std::unordered_map<uint32_t, int32_t> label_store_from(std::initializer_list<const Dataset*> sets) {
    std::unordered_map<uint32_t, int32_t> store;
    for (const Dataset* ds : sets) {
        for (size_t i = 0; i < ds->ids.size(); ++i) store[ds->ids[i]] = ds->labels[i];
    }
    return store;
}

double inference_latency(const TrialModel& model, const Dataset& test, int batch_size,
                         double theta, bool deterministic) {
    const int64_t rows = std::min<int64_t>(test.count(), batch_size);
    const Tensor x = batch_images(test, 0, rows);
    Channel lossless({0.0, theta, 0});
    const uint64_t macs0 = mac_counter().load();
    const auto t0 = Clock::now();
    (void)model_logits(model, x, lossless);
    const double wall = seconds_since(t0);
    const double comp = deterministic
                            ? static_cast<double>(mac_counter().load() - macs0) / kModelMacsPerSecond
                            : wall;
    // inference ships a single uplink payload
    const uint64_t vz = payload_bits(shape_numel(model.split.latent_shape()));
    return comp + static_cast<double>(vz * static_cast<uint64_t>(rows)) / theta;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Backbone& pretrained,
                                const Dataset& full_train, const Dataset& full_test,
                                TrialModel* keep_first) {
    if (cfg.trials < 1) throw ConfigurationError("trials must be >= 1");
    ExperimentResult result;
    result.config = cfg;

    for (int trial = 0; trial < cfg.trials; ++trial) {
        const uint64_t seed = Rng::derive(cfg.base_seed, static_cast<uint64_t>(trial));
        TrialResult tr;
        tr.seed = seed;
        const Subtask task = make_subtask(full_train, full_test,
                                          {cfg.subtask_classes, cfg.val_fraction, cfg.train_cap},
                                          seed);
        TrialModel model = build_trial_model(pretrained, cfg.split_point, cfg.method, seed);

        if (method_trains(cfg.method)) {
            const ChannelConfig uplink{cfg.loss_rate, cfg.bandwidth_bps, Rng::derive(seed, 303)};
            const ChannelConfig client_ch{cfg.loss_rate, cfg.bandwidth_bps, Rng::derive(seed, 304)};
            ServerSession server(model.split.tail(), label_store_from({&task.train, &task.val}),
                                 uplink);
            std::unique_ptr<ClientSession> client;
            if (method_uses_open_head(cfg.method)) {
                client = std::make_unique<ClientSession>(model.split.open_head(),
                                                         pool_from(task.train), pool_from(task.val),
                                                         client_ch, cfg.lr);
            } else {
                client = std::make_unique<ClientSession>(model.split.head(), model.adapter,
                                                         pool_from(task.train), pool_from(task.val),
                                                         client_ch, cfg.lr);
            }
            TrainSchedule schedule;
            schedule.batch_size = cfg.batch_size;
            schedule.max_epochs = cfg.max_epochs;
            schedule.patience = cfg.patience;
            schedule.min_delta = cfg.min_delta;
            schedule.shuffle_seed = Rng::derive(seed, 505);
            const TrainingTrace trace = run_training(*client, server, schedule);
            tr.aborted = trace.aborted;
            tr.abort_reason = trace.abort_reason;
            tr.epochs = trace.stop_epoch;
            tr.comp_s = cfg.deterministic_latency
                            ? static_cast<double>(trace.macs) / kModelMacsPerSecond
                            : trace.comp_s;
            tr.comm_s = trace.comm_s;
        }
        tr.total_s = tr.comp_s + tr.comm_s;

        const ChannelConfig eval_ch{cfg.resolved_eval_p(), cfg.bandwidth_bps, Rng::derive(seed, 404)};
        tr.accuracy = evaluate_personalized(model, task.test, eval_ch, cfg.batch_size);
        tr.inf_s = inference_latency(model, task.test, cfg.batch_size, cfg.bandwidth_bps,
                                     cfg.deterministic_latency);
        result.trials.push_back(std::move(tr));
        if (trial == 0 && keep_first) *keep_first = std::move(model);
    }

    std::vector<double> acc, eps, tot, inf;
    for (const auto& t : result.trials) {
        acc.push_back(t.accuracy);
        if (t.epochs) eps.push_back(static_cast<double>(*t.epochs));
        tot.push_back(t.total_s);
        inf.push_back(t.inf_s);
    }
    result.accuracy = mean_ci95(acc);
    result.epochs = mean_ci95(eps);
    result.total_s = mean_ci95(tot);
    result.inf_s = mean_ci95(inf);
    return result;
}

std::string results_csv_header() {
    return "dataset,subtask,split_point,method,p,theta_bits_per_s,trial,seed,accuracy,epochs,"
           "comp_s,comm_s,total_s,inf_s\n";
}

std::string result_csv_rows(const ExperimentResult& result) {
    const ExperimentConfig& c = result.config;
    std::string subtask;
    for (size_t i = 0; i < c.subtask_classes.size(); ++i) {
        if (i) subtask += ";";
        subtask += std::to_string(c.subtask_classes[i]);
    }
    std::ostringstream os;
    for (size_t i = 0; i < result.trials.size(); ++i) {
        const TrialResult& t = result.trials[i];
        os << c.dataset.source << "," << subtask << "," << split_point_name(c.split_point) << ","
           << method_name(c.method) << "," << fmt_double(c.loss_rate) << ","
           << fmt_double(c.bandwidth_bps) << "," << i << "," << t.seed << ","
           << fmt_double(t.accuracy) << ",";
        if (t.epochs) os << *t.epochs;
        os << "," << fmt_double(t.comp_s) << "," << fmt_double(t.comm_s) << ","
           << fmt_double(t.total_s) << "," << fmt_double(t.inf_s) << "\n";
    }
    return os.str();
}

std::string sweep(const std::vector<ExperimentConfig>& configs, const Backbone& pretrained,
                  const Dataset& full_train, const Dataset& full_test) {
    std::string csv = results_csv_header();
    for (const auto& cfg : configs) {
        const ExperimentResult r = run_experiment(cfg, pretrained, full_train, full_test);
        csv += result_csv_rows(r);
    }
    return csv;
}

} // namespace salt
