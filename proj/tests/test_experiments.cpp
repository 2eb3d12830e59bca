#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "lincomb/experiments.hpp"

using namespace lincomb;
using namespace lincomb::experiments;

namespace {

std::vector<double> values_of(const std::vector<MetricsRow>& rows, const std::string& metric) {
    std::vector<double> out;
    for (const auto& r : rows)
        if (r.metric == metric) out.push_back(r.value);
    return out;
}

BagDataset small_bags(double separation = 3.0) {
    BagDatasetSpec s;
    s.n = 1000;
    s.separation = separation;
    return gen_bag_dataset(s);
}

SeqDataset small_seq() {
    SeqTaskSpec s;
    s.n = 200;
    return gen_seq_dataset(s);
}

}  // namespace

TEST_CASE("bag dataset is seeded and split 80/20") {
    BagDatasetSpec s;
    auto a = gen_bag_dataset(s), b = gen_bag_dataset(s);
    CHECK(a.train.features == b.train.features);
    CHECK(a.train.labels == b.train.labels);
    CHECK(a.test.labels == b.test.labels);
    CHECK(a.train.labels.size() == 4000);
    CHECK(a.test.labels.size() == 1000);
    s.seed += 1;
    CHECK_FALSE(gen_bag_dataset(s).train.features == a.train.features);

    s.d = 1;
    CHECK_THROWS_AS(gen_bag_dataset(s), Error);
}

TEST_CASE("supervised baseline separates the default clusters") {
    auto data = gen_bag_dataset({});
    TrainConfig c = bag_defaults();
    c.loss = LossKind::MLE;
    c.bag_size = 1;
    auto acc = values_of(train_bags(data, c).metrics, "accuracy");
    CHECK(acc.back() > 0.95);
}

TEST_CASE("separation zero leaves chance accuracy") {
    auto data = small_bags(0.0);
    TrainConfig c = bag_defaults();
    c.loss = LossKind::MLE;
    c.bag_size = 1;
    c.epochs = 10;
    auto acc = values_of(train_bags(data, c).metrics, "accuracy");
    CHECK(std::abs(acc.back() - 0.1) < 0.06);
}

TEST_CASE("make_bags") {
    auto data = small_bags();
    SUBCASE("singletons are supervised samples") {
        auto bags = make_bags(data.train, 10, 1, 1.0, 7);
        REQUIRE(bags.size() == data.train.labels.size());
        for (const auto& bag : bags) {
            REQUIRE(bag.samples.size() == 1);
            CHECK(bag.labels(0, static_cast<std::size_t>(data.train.labels[bag.samples[0]])) == 1.0);
        }
    }
    SUBCASE("threshold 0.75 at b=8 keeps at least 6 classes") {
        auto bags = make_bags(data.train, 10, 8, 0.75, 7);
        REQUIRE_FALSE(bags.empty());
        for (const auto& bag : bags) {
            std::set<int> cls;
            for (auto i : bag.samples) cls.insert(data.train.labels[i]);
            CHECK(cls.size() >= 6);
        }
    }
    SUBCASE("label rows are a permutation of the sample labels") {
        for (const auto& bag : make_bags(data.train, 10, 4, 0.5, 3)) {
            std::multiset<int> from_samples, from_rows;
            for (auto i : bag.samples) from_samples.insert(data.train.labels[i]);
            for (std::size_t r = 0; r < 4; ++r)
                for (std::size_t k = 0; k < 10; ++k)
                    if (bag.labels(r, k) == 1.0) from_rows.insert(static_cast<int>(k));
            CHECK(from_samples == from_rows);
        }
    }
    SUBCASE("epoch seeds reshuffle and remainders drop") {
        auto a = make_bags(data.train, 10, 3, 0.1, 1), b = make_bags(data.train, 10, 3, 0.1, 2);
        CHECK(a.size() == data.train.labels.size() / 3);
        CHECK(a.front().samples != b.front().samples);
        auto again = make_bags(data.train, 10, 3, 0.1, 1);
        CHECK(again.front().samples == a.front().samples);
    }
}

TEST_CASE("bag size one matches the supervised trajectory") {
    auto data = small_bags();
    TrainConfig c = bag_defaults();
    c.epochs = 3;
    c.bag_size = 1;
    c.threshold = 1.0;
    c.loss = LossKind::MLE;
    auto mle = train_bags(data, c).metrics;
    c.loss = LossKind::Matching;
    auto matching = train_bags(data, c).metrics;
    REQUIRE(mle.size() == matching.size());
    for (std::size_t i = 0; i < mle.size(); ++i) {
        CAPTURE(i);
        CHECK(mle[i].metric == matching[i].metric);
        CHECK(std::abs(mle[i].value - matching[i].value) <= 1e-12 * (1.0 + std::abs(mle[i].value)));
    }
}

TEST_CASE("train_bags config checks") {
    auto data = small_bags();
    TrainConfig c = bag_defaults();
    c.epochs = 1;
    SUBCASE("mle needs singletons") {
        c.loss = LossKind::MLE;
        CHECK_THROWS_AS(train_bags(data, c), Error);
    }
    SUBCASE("unattainable threshold") {
        c.bag_size = 16;
        c.batch_size = 96;
        c.threshold = 0.75;
        CHECK_THROWS_AS(train_bags(data, c), Error);
    }
    SUBCASE("batch must hold whole bags") {
        c.batch_size = 30;
        CHECK_THROWS_AS(train_bags(data, c), Error);
    }
    SUBCASE("gsa is a sequence loss") {
        c.loss = LossKind::GSA;
        CHECK_THROWS_AS(train_bags(data, c), Error);
    }
}

TEST_CASE("bag training is deterministic and emits rows through the sink") {
    auto data = small_bags();
    TrainConfig c = bag_defaults();
    c.epochs = 2;
    std::vector<MetricsRow> streamed;
    auto a = train_bags(data, c, [&](const MetricsRow& r) { streamed.push_back(r); });
    auto b = train_bags(data, c);
    REQUIRE(a.metrics.size() == b.metrics.size());
    CHECK(streamed.size() == a.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) CHECK(a.metrics[i].value == b.metrics[i].value);
    for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params.value(i) == b.params.value(i));
    CHECK(a.metrics.front().epoch == 0);
    CHECK(a.metrics.back().epoch == 2);
}

TEST_CASE("sequence corpus") {
    SUBCASE("clean copy") {
        SeqTaskSpec s;
        s.drop = s.insert = 0.0;
        for (const auto& ex : gen_seq_dataset(s).train) {
            auto expect = ex.source;
            expect.push_back(kEos);
            CHECK(ex.target == expect);
        }
    }
    SUBCASE("drop rate shortens targets") {
        SeqTaskSpec s;
        s.drop = 0.1;
        s.insert = 0.0;
        s.n = 10000;
        auto data = gen_seq_dataset(s);
        double src = 0.0, tgt = 0.0;
        for (const auto* set : {&data.train, &data.test})
            for (const auto& ex : *set) {
                src += static_cast<double>(ex.source.size());
                tgt += static_cast<double>(ex.target.size());
            }
        const double expect = 0.9 * src + 10000.0;
        CHECK(std::abs(tgt - expect) / expect < 0.02);
    }
    SUBCASE("seeded and bounded") {
        SeqTaskSpec s;
        auto a = gen_seq_dataset(s), b = gen_seq_dataset(s);
        REQUIRE(a.train.size() == b.train.size());
        for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].target == b.train[i].target);
        for (const auto& ex : a.train) {
            CHECK(ex.source.size() >= s.min_len);
            CHECK(ex.source.size() <= s.max_len);
            for (int t : ex.source) CHECK(t >= 2);
            CHECK(ex.target.back() == kEos);
        }
    }
    SUBCASE("reserved tokens need room") {
        SeqTaskSpec s;
        s.vocab = 2;
        CHECK_THROWS_AS(gen_seq_dataset(s), Error);
    }
}

TEST_CASE("gumbel tau column follows the schedule") {
    auto data = small_seq();
    TrainConfig c = seq_defaults();
    c.feed = FeedKind::GumbelST;
    c.gamma = 1.5;
    c.epochs = 10;
    auto tau = values_of(train_seq(data, c).metrics, "tau");
    const std::vector<double> expect{5.0, 4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0, 1.0};
    CHECK(tau == expect);
}

TEST_CASE("sequence training") {
    auto data = small_seq();
    TrainConfig c = seq_defaults();
    c.epochs = 2;
    SUBCASE("deterministic for both feeds and losses") {
        for (auto loss : {LossKind::MLE, LossKind::GSA})
            for (auto feed : {FeedKind::Softmax, FeedKind::GumbelST}) {
                c.loss = loss;
                c.feed = feed;
                auto a = train_seq(data, c), b = train_seq(data, c);
                REQUIRE(a.metrics.size() == b.metrics.size());
                for (std::size_t i = 0; i < a.metrics.size(); ++i) CHECK(a.metrics[i].value == b.metrics[i].value);
            }
    }
    SUBCASE("gamma must exceed one") {
        c.gamma = 1.0;
        CHECK_THROWS_AS(train_seq(data, c), Error);
        c.loss = LossKind::MLE;
        CHECK_THROWS_AS(train_seq(data, c), Error);
    }
    SUBCASE("matching is a bag loss") {
        c.loss = LossKind::Matching;
        CHECK_THROWS_AS(train_seq(data, c), Error);
    }
    SUBCASE("training lowers alignment cost") {
        c.epochs = 3;
        auto cost = values_of(train_seq(data, c).metrics, "alignment_cost");
        CHECK(cost.back() < cost.front());
    }
}

TEST_CASE("greedy decode stops at EOS and reports its rows") {
    auto data = small_seq();
    TrainConfig c = seq_defaults();
    c.epochs = 1;
    auto res = train_seq(data, c);
    Matrix lp;
    auto out = greedy_decode(res.params, data.test[0].source, data.vocab, 9, &lp);
    REQUIRE_FALSE(out.empty());
    CHECK(out.size() <= 9);
    CHECK(lp.rows() == out.size());
    CHECK(lp.cols() == data.vocab);
    for (std::size_t i = 0; i + 1 < out.size(); ++i) CHECK(out[i] != kEos);
}

TEST_CASE("metrics csv") {
    std::vector<MetricsRow> rows{{0, "test", "accuracy", 0.1, 0.0}, {1, "train", "loss", 1.0 / 3.0, 0.5}};
    std::ostringstream os;
    write_metrics_csv(rows, os);
    CHECK(os.str() ==
          "epoch,split,metric,value,seconds\n0,test,accuracy,0.10000000000000001,0.000\n"
          "1,train,loss,0.33333333333333331,0.500\n");
}

TEST_CASE("enum names round-trip") {
    for (auto k : {LossKind::MLE, LossKind::Matching, LossKind::GSA}) CHECK(parse_loss(to_string(k)) == k);
    for (auto k : {FeedKind::Softmax, FeedKind::GumbelST}) CHECK(parse_feed(to_string(k)) == k);
    for (auto k : {OptimizerKind::Adam, OptimizerKind::Sgd}) CHECK(parse_optimizer(to_string(k)) == k);
    CHECK_THROWS_AS(parse_loss("ce"), Error);
}
