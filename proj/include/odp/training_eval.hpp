#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "odp/bgarn.hpp"

namespace odp {

// ---- loss and metrics --------------------------------------------------

/// Mean over elements of 0.5 e^2 / beta (|e| < beta) or |e| - beta/2.
double smooth_l1(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y, double beta);

double combined_loss(const Eigen::VectorXd& d_hat, const Eigen::VectorXd& d,
                     const Eigen::MatrixXd& g_hat, const Eigen::MatrixXd& g,
                     double eta_d, double eta_o, double beta);

struct Metrics {
    double rmse = 0, mape = 0, mae = 0;
    long long count = 0;
    bool defined = false;  // false when no entry passed the threshold
};

/// Streaming metric accumulation over entries with ground truth >= threshold.
/// MAPE uses |e| / (y + 1).
class MetricAccum {
public:
    explicit MetricAccum(double threshold) : threshold_(threshold) {}
    void add(double y_hat, double y);
    void add_all(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y);
    Metrics finalize() const;
    double threshold() const { return threshold_; }

private:
    double threshold_;
    double se_ = 0, ape_ = 0, ae_ = 0;
    long long z_ = 0;
};

/// One-shot metrics over a pair of arrays.
Metrics compute_metrics(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y, double threshold);

// ---- samples and splits --------------------------------------------------

/// All target slots tau whose four history slices fit in [1, T]. The last
/// entry can be T+1 (the true forecasting target, which has no ground truth
/// yet); training and evaluation skip it, predict consumes it.
std::vector<int> make_samples(int T, int l, int P);

struct Split {
    std::vector<int> train, val, test;
};

/// Chronological split: floor(train_frac N) / floor(val_frac N) / remainder.
Split chronological_split(const std::vector<int>& targets, double train_frac, double val_frac);

// ---- optimization --------------------------------------------------

class Adam {
public:
    Adam(ad::ParamStore& ps, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);
    void step();

private:
    ad::ParamStore* ps_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

// ---- training loop --------------------------------------------------

struct TrainSettings {
    int epochs = 200;
    int batch_size = 32;
    double clip_norm = 10.0;
    double lr = 1e-3;
    std::uint64_t seed = 42;
};

struct EpochRecord {
    int epoch;
    double train_loss;
    double val_loss;
    double wall_seconds;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    double ttps = 0;  // mean training wall-time per sample, seconds
    int best_epoch = 0;
    double best_val = 0;
    std::vector<double> postclip_norms;  // recorded gradient norm after clipping
};

/// Generic mini-batch loop: per-sample tapes with gradient accumulation
/// (scaled to the batch mean), global-norm clipping, Adam, and
/// best-validation parameter selection (parameters are left at the best
/// epoch's values). `forward` builds the loss node for one target slot;
/// `snapshot_extra`/`restore_extra` carry non-parameter state (BN running
/// statistics) along with the snapshot. Throws on non-finite loss.
TrainResult train_loop(ad::ParamStore& ps,
                       const std::function<ad::Var(ad::Tape&, int tau, bool train)>& forward,
                       std::vector<int> train_targets, const std::vector<int>& val_targets,
                       const TrainSettings& ts,
                       const std::function<std::vector<Eigen::MatrixXd>()>& snapshot_extra = {},
                       const std::function<void(const std::vector<Eigen::MatrixXd>&)>&
                           restore_extra = {});

// ---- checkpointing --------------------------------------------------

struct Checkpoint {
    std::string config_echo;  // key=value lines describing the trained model
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

    const Eigen::MatrixXd* find(const std::string& name) const;
};

/// Single-file binary format, bit-exact round-trip.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// ---- evaluation --------------------------------------------------

struct ReportRow {
    std::string task;  // "demand" or "od"
    double threshold;
    Metrics m;
};

/// Pooled metrics over all targets (clamping predictions at 0), one row per
/// task and threshold. `predict` returns the raw (unclamped) pair for tau.
std::vector<ReportRow> evaluate_targets(
    const std::function<std::pair<Eigen::VectorXd, Eigen::MatrixXd>(int tau)>& predict,
    const Dataset& ds, const std::vector<int>& targets, const std::vector<double>& thresholds);

/// Report format: header line, then "task, threshold, rmse, mape, mae, count"
/// rows; undefined metrics print as "undefined". ttps, when nonnegative, is
/// echoed as a trailing comment line.
void write_report(const std::string& path, const std::vector<ReportRow>& rows, double ttps);

}  // namespace odp
