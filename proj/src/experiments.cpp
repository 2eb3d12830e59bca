#include "lincomb/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "lincomb/alignment.hpp"
#include "lincomb/assignment.hpp"

namespace lincomb::experiments {

namespace {

std::mt19937_64 seeded(std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

class Clock {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Recorder {
    std::vector<MetricsRow>& rows;
    const MetricsSink& sink;
    const Clock& clock;

    void operator()(std::size_t epoch, const char* split, const char* metric, double value) {
        MetricsRow r{epoch, split, metric, value, clock.seconds()};
        rows.push_back(r);
        if (sink) sink(r);
    }
};

Matrix one_hot(const std::vector<int>& cls, std::size_t d) {
    Matrix y(cls.size(), d);
    for (std::size_t r = 0; r < cls.size(); ++r) y(r, static_cast<std::size_t>(cls[r])) = 1.0;
    return y;
}

int argmax(std::span<const double> row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

// Datasets

void BagDatasetSpec::validate() const {
    if (d < 2) fail(ErrorCode::InvalidArgument, "bag dataset needs d >= 2 classes");
    if (n < d) fail(ErrorCode::InvalidArgument, "bag dataset needs n >= d samples");
    if (feature_dim == 0) fail(ErrorCode::InvalidArgument, "bag dataset needs feature_dim >= 1");
    if (!(separation >= 0.0) || !std::isfinite(separation))
        fail(ErrorCode::InvalidArgument, "class separation must be finite and nonnegative");
}

BagDataset gen_bag_dataset(const BagDatasetSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    // Expected distance between two class means is about 2 * separation.
    std::normal_distribution<double> center(0.0,
                                            spec.separation * std::sqrt(2.0 / static_cast<double>(spec.feature_dim)));
    std::normal_distribution<double> noise(0.0, 1.0);

    Matrix means(spec.d, spec.feature_dim);
    for (double& x : means.data()) x = center(rng);

    Matrix X(spec.n, spec.feature_dim);
    std::vector<int> y(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        y[i] = static_cast<int>(i % spec.d);
        for (std::size_t f = 0; f < spec.feature_dim; ++f)
            X(i, f) = means(static_cast<std::size_t>(y[i]), f) + noise(rng);
    }
    std::vector<std::size_t> order(spec.n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n_train = spec.n * 4 / 5;
    BagDataset out;
    out.classes = spec.d;
    auto fill = [&](LabeledSet& set, std::size_t begin, std::size_t end) {
        set.features = Matrix(end - begin, spec.feature_dim);
        for (std::size_t i = begin; i < end; ++i) {
            std::copy(X.row(order[i]).begin(), X.row(order[i]).end(), set.features.row(i - begin).begin());
            set.labels.push_back(y[order[i]]);
        }
    };
    fill(out.train, 0, n_train);
    fill(out.test, n_train, spec.n);
    return out;
}

std::vector<BagBatch> make_bags(const LabeledSet& train, std::size_t classes, std::size_t b, double threshold,
                                std::uint64_t epoch_seed) {
    if (b == 0) fail(ErrorCode::InvalidArgument, "bag size must be at least 1");
    auto rng = seeded(epoch_seed, b);
    std::vector<std::size_t> order(train.labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<BagBatch> bags;
    std::vector<int> cls(b);
    std::vector<std::size_t> hidden(b);
    for (std::size_t start = 0; start + b <= order.size(); start += b) {
        for (std::size_t r = 0; r < b; ++r) cls[r] = train.labels[order[start + r]];
        if (!filter_bag(cls, threshold)) continue;
        std::iota(hidden.begin(), hidden.end(), 0);
        std::shuffle(hidden.begin(), hidden.end(), rng);
        BagBatch bag;
        bag.samples.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(start + b));
        bag.labels = Matrix(b, classes);
        for (std::size_t r = 0; r < b; ++r) bag.labels(r, static_cast<std::size_t>(cls[hidden[r]])) = 1.0;
        bags.push_back(std::move(bag));
    }
    return bags;
}

void SeqTaskSpec::validate() const {
    if (vocab < 3) fail(ErrorCode::InvalidArgument, "vocab must be >= 3 (pad and EOS are reserved)");
    if (min_len < 1 || max_len < min_len) fail(ErrorCode::InvalidArgument, "need 1 <= min_len <= max_len");
    if (!(drop >= 0.0 && drop < 1.0) || !(insert >= 0.0 && insert < 1.0))
        fail(ErrorCode::InvalidArgument, "drop and insert probabilities must lie in [0, 1)");
    if (n < 5) fail(ErrorCode::InvalidArgument, "need at least 5 examples");
}

SeqDataset gen_seq_dataset(const SeqTaskSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> token(2, static_cast<int>(spec.vocab) - 1);
    std::uniform_int_distribution<std::size_t> length(spec.min_len, spec.max_len);
    std::bernoulli_distribution drop(spec.drop), insert(spec.insert);

    std::vector<SeqExample> all(spec.n);
    for (SeqExample& ex : all) {
        ex.source.resize(length(rng));
        for (int& t : ex.source) t = token(rng);
        for (int t : ex.source) {
            if (!drop(rng)) ex.target.push_back(t);
            if (insert(rng)) ex.target.push_back(token(rng));
        }
        ex.target.push_back(kEos);
    }
    SeqDataset out;
    out.vocab = spec.vocab;
    const std::size_t n_train = spec.n * 4 / 5;
    out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    return out;
}

void write_jsonl(const BagDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
    auto emit = [&](const LabeledSet& set, const char* split) {
        for (std::size_t i = 0; i < set.labels.size(); ++i) {
            nlohmann::json j;
            j["split"] = split;
            j["features"] = std::vector<double>(set.features.row(i).begin(), set.features.row(i).end());
            j["label"] = set.labels[i];
            out << j.dump() << '\n';
        }
    };
    emit(data.train, "train");
    emit(data.test, "test");
}

void write_jsonl(const SeqDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
    auto emit = [&](const std::vector<SeqExample>& set, const char* split) {
        for (const SeqExample& ex : set)
            out << nlohmann::json{{"split", split}, {"source", ex.source}, {"target", ex.target}}.dump() << '\n';
    };
    emit(data.train, "train");
    emit(data.test, "test");
}

// Config

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::MLE:
            return "mle";
        case LossKind::Matching:
            return "matching";
        case LossKind::GSA:
            break;
    }
    return "gsa";
}

std::string to_string(FeedKind k) { return k == FeedKind::Softmax ? "softmax" : "gumbel"; }

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    fail(ErrorCode::InvalidArgument, "unknown optimizer '" + s + "' (expected adam or sgd)");
}

LossKind parse_loss(const std::string& s) {
    if (s == "mle") return LossKind::MLE;
    if (s == "matching") return LossKind::Matching;
    if (s == "gsa") return LossKind::GSA;
    fail(ErrorCode::InvalidArgument, "unknown loss '" + s + "' (expected mle, matching or gsa)");
}

FeedKind parse_feed(const std::string& s) {
    if (s == "softmax") return FeedKind::Softmax;
    if (s == "gumbel") return FeedKind::GumbelST;
    fail(ErrorCode::InvalidArgument, "unknown feed '" + s + "' (expected softmax or gumbel)");
}

void TrainConfig::validate() const {
    if (bag_size < 1) fail(ErrorCode::InvalidArgument, "bag size must be at least 1");
    if (loss == LossKind::GSA && !(gamma > 1.0))
        fail(ErrorCode::InvalidArgument, "gap scale gamma must satisfy gamma > 1");
    if (!(threshold > 0.0 && threshold <= 1.0))
        fail(ErrorCode::InvalidArgument, "bag threshold must lie in (0, 1]");
    if (!(lr > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
    if (hidden == 0) fail(ErrorCode::InvalidArgument, "hidden size must be positive");
    gumbel.validate();
}

// Bag classifier

namespace {

void optimizer_step(ad::ParamStore& params, const ad::Gradients& grads, const TrainConfig& cfg) {
    if (cfg.optimizer == OptimizerKind::Sgd)
        ad::sgd_step(params, grads, cfg.lr);
    else
        ad::adam_step(params, grads, ad::AdamConfig{cfg.lr});
}

ad::Var mlp_logits(ad::Tape& t, const std::vector<ad::Var>& p, const Matrix& X) {
    auto h = ad::relu(ad::add(ad::matmul(t.constant(X), p[0]), p[1]));
    return ad::add(ad::matmul(h, p[2]), p[3]);
}

Matrix gather_rows(const Matrix& X, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy(X.row(idx[r]).begin(), X.row(idx[r]).end(), out.row(r).begin());
    return out;
}

}  // namespace

double evaluate_accuracy(const ad::ParamStore& params, const LabeledSet& set) {
    if (set.labels.empty()) return 0.0;
    ad::Tape t;
    std::vector<ad::Var> p;
    for (std::size_t i = 0; i < params.size(); ++i) p.push_back(t.constant(params.value(i)));
    const Matrix& logits = mlp_logits(t, p, set.features).value();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < set.labels.size(); ++r) correct += argmax(logits.row(r)) == set.labels[r];
    return static_cast<double>(correct) / static_cast<double>(set.labels.size());
}

TrainResult train_bags(const BagDataset& data, const TrainConfig& cfg, const MetricsSink& sink) {
    cfg.validate();
    const std::size_t b = cfg.bag_size, d = data.classes;
    if (cfg.loss == LossKind::GSA) fail(ErrorCode::InvalidArgument, "bag task takes mle or matching loss");
    if (cfg.loss == LossKind::MLE && b != 1)
        fail(ErrorCode::InvalidArgument, "mle needs per-sample labels (bag_size = 1)");
    if (cfg.batch_size % b != 0) fail(ErrorCode::InvalidArgument, "batch size must be a multiple of the bag size");
    if (std::ceil(cfg.threshold * static_cast<double>(b) - 1e-12) > static_cast<double>(d))
        fail(ErrorCode::InvalidArgument, "bag threshold unattainable: needs more distinct classes than exist");

    TrainResult res{{}, ad::ParamStore(cfg.seed)};
    ad::ParamStore& params = res.params;
    const std::size_t f = data.train.features.cols();
    params.add_glorot("W1", f, cfg.hidden);
    params.add_zeros("b1", 1, cfg.hidden);
    params.add_glorot("W2", cfg.hidden, d);
    params.add_zeros("b2", 1, d);

    Clock clock;
    Recorder rec{res.metrics, sink, clock};
    rec(0, "test", "accuracy", evaluate_accuracy(params, data.test));

    const std::size_t per_batch = cfg.batch_size / b;
    // Any failure inside an epoch aborts the run; rows already recorded stay.
    auto run_epoch = [&](std::size_t epoch) {
        auto bags = make_bags(data.train, d, b, cfg.threshold, cfg.seed * 1000003 + epoch);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first + per_batch <= bags.size(); first += per_batch) {
            std::vector<std::size_t> idx;
            std::vector<CombLayer> layers;
            Matrix Y(cfg.batch_size, d);
            for (std::size_t k = 0; k < per_batch; ++k) {
                const BagBatch& bag = bags[first + k];
                idx.insert(idx.end(), bag.samples.begin(), bag.samples.end());
                for (std::size_t r = 0; r < b; ++r)
                    std::copy(bag.labels.row(r).begin(), bag.labels.row(r).end(), Y.row(k * b + r).begin());
                if (cfg.loss == LossKind::Matching) layers.push_back(matching_layer(bag.labels));
            }
            ad::Tape t;
            auto p = params.bind(t);
            auto logp = ad::log_softmax(mlp_logits(t, p, gather_rows(data.train.features, idx)));
            ad::Var loss;
            if (cfg.loss == LossKind::MLE) {
                loss = ad::nll(logp, Y);
            } else {
                auto z = ad::comb_node_batch(logp, layers, cfg.parallel);
                loss = ad::scale(ad::sum(z), 1.0 / static_cast<double>(cfg.batch_size));
            }
            t.backward(loss);
            optimizer_step(params, params.gradients(t, p), cfg);
            loss_sum += loss.scalar();
            ++batches;
        }
        rec(epoch, "train", "loss", batches ? loss_sum / static_cast<double>(batches) : 0.0);
        rec(epoch, "train", "bags", static_cast<double>(bags.size()));
        rec(epoch, "test", "accuracy", evaluate_accuracy(params, data.test));
    };
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        try {
            run_epoch(epoch);
        } catch (const Error& e) {
            throw TrainingAborted(e, epoch);
        }
    }
    return res;
}

TrainConfig bag_defaults() {
    TrainConfig c;
    c.loss = LossKind::Matching;
    c.bag_size = 4;
    c.epochs = 30;
    c.optimizer = OptimizerKind::Sgd;
    c.lr = 0.03;
    c.batch_size = 96;
    return c;
}

TrainConfig seq_defaults() {
    TrainConfig c;
    c.loss = LossKind::GSA;
    c.feed = FeedKind::Softmax;
    c.bag_size = 1;
    c.gamma = 3.0;
    c.epochs = 20;
    c.optimizer = OptimizerKind::Adam;
    c.lr = 1e-3;
    c.batch_size = 32;
    return c;
}

// Sequence model

namespace {

enum SeqParam : std::size_t { Embed, EncWx, EncWh, EncB, DecWy, DecWc, DecWh, DecB, OutW, OutB, kSeqParams };

constexpr std::size_t kEmbedDim = 16;

void init_seq_params(ad::ParamStore& p, std::size_t V, std::size_t H) {
    p.add_glorot("embed", V, kEmbedDim);
    p.add_glorot("enc_wx", kEmbedDim, H);
    p.add_glorot("enc_wh", H, H);
    p.add_zeros("enc_b", 1, H);
    p.add_glorot("dec_wy", V, H);
    p.add_glorot("dec_wc", H, H);
    p.add_glorot("dec_wh", H, H);
    p.add_zeros("dec_b", 1, H);
    p.add_glorot("out_w", H, V);
    p.add_zeros("out_b", 1, V);
}

// Final hidden state per source; finished rows are held by a mask.
ad::Var encode(ad::Tape& t, const std::vector<ad::Var>& p, const std::vector<const std::vector<int>*>& sources) {
    const std::size_t B = sources.size(), H = p[EncWh].cols();
    std::size_t maxL = 0;
    for (const auto* s : sources) maxL = std::max(maxL, s->size());
    ad::Var h = t.constant(Matrix(B, H));
    for (std::size_t step = 0; step < maxL; ++step) {
        std::vector<std::size_t> tok(B);
        Matrix keep(B, H), hold(B, H);
        bool ragged = false;
        for (std::size_t i = 0; i < B; ++i) {
            const bool live = step < sources[i]->size();
            tok[i] = live ? static_cast<std::size_t>((*sources[i])[step]) : static_cast<std::size_t>(kPad);
            ragged = ragged || !live;
            for (std::size_t c = 0; c < H; ++c) (live ? keep : hold)(i, c) = 1.0;
        }
        auto x = ad::embed(p[Embed], tok);
        auto next = ad::tanh(ad::add(ad::add(ad::matmul(x, p[EncWx]), ad::matmul(h, p[EncWh])), p[EncB]));
        h = ragged ? ad::add(ad::mul(next, t.constant(keep)), ad::mul(h, t.constant(hold))) : next;
    }
    return h;
}

struct Decoder {
    const std::vector<ad::Var>& p;
    ad::Var context_term;  // c Wc
    ad::Var state;

    Decoder(ad::Tape&, const std::vector<ad::Var>& params, ad::Var context)
        : p(params), context_term(ad::matmul(context, params[DecWc])), state(context) {}

    ad::Var step(ad::Var feed) {
        state = ad::tanh(ad::add(
            ad::add(ad::add(ad::matmul(feed, p[DecWy]), context_term), ad::matmul(state, p[DecWh])), p[DecB]));
        return ad::add(ad::matmul(state, p[OutW]), p[OutB]);
    }
};

Matrix start_feed(std::size_t B, std::size_t V) {
    Matrix m(B, V);
    for (std::size_t i = 0; i < B; ++i) m(i, kPad) = 1.0;
    return m;
}

std::vector<ad::Var> constants(ad::Tape& t, const ad::ParamStore& params) {
    std::vector<ad::Var> p;
    for (std::size_t i = 0; i < params.size(); ++i) p.push_back(t.constant(params.value(i)));
    return p;
}

// Position-wise loss needs one row per target token.  The alignment loss
// decodes one row per source token plus EOS, so the lengths may differ.
std::size_t decode_rows(const SeqExample& ex, LossKind loss) {
    return loss == LossKind::GSA ? ex.source.size() + 1 : ex.target.size();
}

}  // namespace

std::vector<int> greedy_decode(const ad::ParamStore& params, const std::vector<int>& source, std::size_t vocab,
                               std::size_t max_steps, Matrix* log_probs) {
    ad::Tape t;
    auto p = constants(t, params);
    Decoder dec(t, p, encode(t, p, {&source}));
    ad::Var feed = t.constant(start_feed(1, vocab));
    std::vector<int> out;
    std::vector<double> rows;
    for (std::size_t s = 0; s < max_steps; ++s) {
        const Matrix& lp = ad::log_softmax(dec.step(feed)).value();
        rows.insert(rows.end(), lp.data().begin(), lp.data().end());
        const int tok = argmax(lp.row(0));
        out.push_back(tok);
        if (tok == kEos) break;
        Matrix next(1, vocab);
        next(0, static_cast<std::size_t>(tok)) = 1.0;
        feed = t.constant(std::move(next));
    }
    if (log_probs) {
        *log_probs = Matrix(out.size(), vocab);
        std::copy(rows.begin(), rows.end(), log_probs->data().begin());
    }
    return out;
}

SeqEval evaluate_seq(const ad::ParamStore& params, const std::vector<SeqExample>& set, std::size_t vocab,
                     double gamma) {
    SeqEval ev;
    if (set.empty()) return ev;
    for (const SeqExample& ex : set) {
        Matrix lp;
        auto decoded = greedy_decode(params, ex.source, vocab, 2 * ex.source.size() + 1, &lp);
        AlignGrid grid{matching_cost(lp, one_hot(ex.target, vocab)), gamma};
        ev.alignment_cost += solve_gsa(grid).z_star;
        ev.exact_match += decoded == ex.target;
    }
    ev.alignment_cost /= static_cast<double>(set.size());
    ev.exact_match /= static_cast<double>(set.size());
    return ev;
}

TrainResult train_seq(const SeqDataset& data, const TrainConfig& cfg, const MetricsSink& sink) {
    cfg.validate();
    if (cfg.loss == LossKind::Matching) fail(ErrorCode::InvalidArgument, "sequence task takes mle or gsa loss");
    // Evaluation aligns with cfg.gamma under either loss.
    if (!(cfg.gamma > 1.0)) fail(ErrorCode::InvalidArgument, "gap scale gamma must satisfy gamma > 1");
    const std::size_t V = data.vocab;
    if (V < 3) fail(ErrorCode::InvalidArgument, "vocab must be >= 3");

    TrainResult res{{}, ad::ParamStore(cfg.seed)};
    ad::ParamStore& params = res.params;
    init_seq_params(params, V, cfg.hidden);

    Clock clock;
    Recorder rec{res.metrics, sink, clock};
    auto evaluate = [&](std::size_t epoch) {
        SeqEval ev = evaluate_seq(params, data.test, V, cfg.gamma);
        rec(epoch, "test", "alignment_cost", ev.alignment_cost);
        rec(epoch, "test", "exact_match", ev.exact_match);
    };
    evaluate(0);

    auto noise = seeded(cfg.seed, 0x6e6f697365ULL);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    // Any failure inside an epoch aborts the run; rows already recorded stay.
    auto run_epoch = [&](std::size_t epoch) {
        const double tau = cfg.gumbel.tau_at(epoch - 1);
        auto shuffle_rng = seeded(cfg.seed, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, order.size() - first);
            std::vector<const std::vector<int>*> sources;
            std::size_t maxT = 0;
            for (std::size_t i = 0; i < B; ++i) {
                const SeqExample& ex = data.train[order[first + i]];
                sources.push_back(&ex.source);
                maxT = std::max(maxT, decode_rows(ex, cfg.loss));
            }

            ad::Tape t;
            auto p = params.bind(t);
            Decoder dec(t, p, encode(t, p, sources));
            ad::Var feed = t.constant(start_feed(B, V));
            std::vector<ad::Var> steps;
            for (std::size_t s = 0; s < maxT; ++s) {
                auto logits = dec.step(feed);
                steps.push_back(ad::log_softmax(logits));
                if (s + 1 == maxT) break;
                feed = cfg.feed == FeedKind::Softmax ? ad::softmax(ad::scale(logits, 1.0 / tau))
                                                     : ad::gumbel_softmax_st(logits, tau, noise);
            }
            // Row s*B + i of the stack is step s of sequence i; regroup by sequence.
            auto stacked = ad::stack_rows(steps);
            std::vector<std::size_t> idx;
            std::vector<int> flat_targets;
            std::vector<CombLayer> layers;
            for (std::size_t i = 0; i < B; ++i) {
                const SeqExample& ex = data.train[order[first + i]];
                const std::size_t rows = decode_rows(ex, cfg.loss);
                for (std::size_t s = 0; s < rows; ++s) idx.push_back(s * B + i);
                flat_targets.insert(flat_targets.end(), ex.target.begin(), ex.target.end());
                if (cfg.loss == LossKind::GSA)
                    layers.push_back(
                        gsa_layer(one_hot(ex.target, V), rows, cfg.gamma, AlignOptions{cfg.gap_gradient, {}}));
            }
            auto logp = ad::embed(stacked, idx);
            ad::Var loss = cfg.loss == LossKind::MLE ? ad::nll(logp, one_hot(flat_targets, V))
                                                     : ad::mean(ad::comb_node_batch(logp, layers, cfg.parallel));
            t.backward(loss);
            optimizer_step(params, params.gradients(t, p), cfg);
            loss_sum += loss.scalar();
            ++batches;
        }
        rec(epoch, "train", "loss", loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
        rec(epoch, "train", "tau", tau);
        evaluate(epoch);
    };
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        try {
            run_epoch(epoch);
        } catch (const Error& e) {
            throw TrainingAborted(e, epoch);
        }
    }
    return res;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out, bool header) {
    if (header) out << "epoch,split,metric,value,seconds\n";
    char buf[64];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        out << r.epoch << ',' << r.split << ',' << r.metric << ',' << buf << ',';
        std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
        out << buf << '\n';
    }
}

}  // namespace lincomb::experiments
