#pragma once

// Synthetic stand-ins for the two training tasks: learning a classifier from
// bags of samples with hidden label order, and a noisy-copy sequence task
// trained with a position-wise or an alignment loss.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lincomb/alignment.hpp"
#include "lincomb/matrix.hpp"
#include "lincomb/tape.hpp"

namespace lincomb::experiments {

// Datasets

struct BagDatasetSpec {
    std::size_t d = 10;  // classes
    std::size_t n = 5000;
    std::size_t feature_dim = 10;
    double separation = 3.0;
    std::uint64_t seed = ad::kDefaultSeed;

    void validate() const;
};

struct LabeledSet {
    Matrix features;  // n x feature_dim
    std::vector<int> labels;
};

struct BagDataset {
    std::size_t classes = 0;
    LabeledSet train;  // 80%
    LabeledSet test;   // 20%
};

/// Isotropic unit-variance Gaussian clusters around class means drawn once
/// from N(0, 2 separation^2 / feature_dim * I).
BagDataset gen_bag_dataset(const BagDatasetSpec& spec);

struct BagBatch {
    std::vector<std::size_t> samples;  // indices into the training set
    Matrix labels;                     // b x d one-hot, rows in hidden shuffled order
};

/// Shuffle with the epoch seed, cut into bags of b (remainder dropped), keep
/// bags passing filter_bag(threshold), then hide the label order.
std::vector<BagBatch> make_bags(const LabeledSet& train, std::size_t classes, std::size_t b, double threshold,
                                std::uint64_t epoch_seed);

inline constexpr int kPad = 0;
inline constexpr int kEos = 1;

struct SeqTaskSpec {
    std::size_t vocab = 8;  // includes pad and EOS
    std::size_t min_len = 3;
    std::size_t max_len = 6;
    double drop = 0.1;    // per source token
    double insert = 0.05; // random token inserted after a source position
    std::size_t n = 2000;
    std::uint64_t seed = ad::kDefaultSeed;

    void validate() const;
};

struct SeqExample {
    std::vector<int> source;
    std::vector<int> target;  // ends with kEos
};

struct SeqDataset {
    std::size_t vocab = 0;
    std::vector<SeqExample> train;  // 80%
    std::vector<SeqExample> test;   // 20%
};

SeqDataset gen_seq_dataset(const SeqTaskSpec& spec);

// JSON lines: bags {"split","features","label"}, sequences {"split","source","target"}.
void write_jsonl(const BagDataset& data, const std::filesystem::path& path);
void write_jsonl(const SeqDataset& data, const std::filesystem::path& path);

// Training

enum class LossKind { MLE, Matching, GSA };
enum class FeedKind { Softmax, GumbelST };
enum class OptimizerKind { Adam, Sgd };

std::string to_string(LossKind k);
std::string to_string(FeedKind k);
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);
LossKind parse_loss(const std::string& s);
FeedKind parse_feed(const std::string& s);

struct TrainConfig {
    LossKind loss = LossKind::Matching;
    FeedKind feed = FeedKind::Softmax;
    std::size_t bag_size = 4;
    double gamma = 1.5;
    GapGradient gap_gradient = GapGradient::Through;
    std::size_t epochs = 30;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr = 1e-3;
    std::size_t batch_size = 96;
    std::uint64_t seed = ad::kDefaultSeed;
    double threshold = 0.75;
    std::size_t hidden = 64;
    ad::GumbelConfig gumbel{};
    bool parallel = true;

    void validate() const;
};

/// Task defaults used by the CLI and the acceptance runs.  The sequence task
/// prices gaps at 3x: at 1.5 the decoder learns to skip tokens on this corpus.
TrainConfig bag_defaults();
TrainConfig seq_defaults();

struct MetricsRow {
    std::size_t epoch = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
    double seconds = 0.0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

struct TrainResult {
    std::vector<MetricsRow> metrics;
    ad::ParamStore params;
};

/// Raised when a solve fails mid-run; rows already emitted stay with the sink.
class TrainingAborted : public Error {
public:
    TrainingAborted(const Error& cause, std::size_t epoch)
        : Error(cause.code(), "training aborted at epoch " + std::to_string(epoch) + ": " + cause.what()),
          epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// MLP classifier.  MLE uses per-sample labels (the supervised baseline);
/// Matching sees only bags.  Epoch 0 is the untrained model.
TrainResult train_bags(const BagDataset& data, const TrainConfig& cfg, const MetricsSink& sink = {});

/// Fraction of correct argmax predictions; takes true per-sample labels only.
double evaluate_accuracy(const ad::ParamStore& params, const LabeledSet& set);

struct SeqEval {
    double alignment_cost = 0.0;  // mean GSA z* of greedy decodes against targets
    double exact_match = 0.0;     // fraction of decodes equal to the target
};

/// Tanh RNN encoder and self-fed decoder.  Epoch 0 is the untrained model.
TrainResult train_seq(const SeqDataset& data, const TrainConfig& cfg, const MetricsSink& sink = {});

SeqEval evaluate_seq(const ad::ParamStore& params, const std::vector<SeqExample>& set, std::size_t vocab,
                     double gamma);

/// Greedy decode of one source, stopping after EOS or `max_steps`.
std::vector<int> greedy_decode(const ad::ParamStore& params, const std::vector<int>& source, std::size_t vocab,
                               std::size_t max_steps, Matrix* log_probs = nullptr);

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out, bool header = true);

}  // namespace lincomb::experiments
