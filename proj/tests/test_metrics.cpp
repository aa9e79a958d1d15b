#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "doctest.h"
#include "fewshot/errors.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/rng.hpp"
#include "support/reference_oracles.hpp"

using namespace fewshot;

namespace {

const std::vector<std::string> kFigureLabels = {
    "O", "O", "O",
    "AddToPlaylist:artist", "AddToPlaylist:artist",
    "O", "AddToPlaylist:playlist_owner", "O",
    "AddToPlaylist:playlist", "AddToPlaylist:playlist",
    "AddToPlaylist:playlist", "AddToPlaylist:playlist"};

std::vector<std::string> random_sequence(Rng& rng, bool bio) {
    static const std::vector<std::string> io_labels = {"O", "a", "b", "c"};
    static const std::vector<std::string> bio_labels = {
        "O", "B-a", "I-a", "B-b", "I-b", "c"};
    const auto& alphabet = bio ? bio_labels : io_labels;
    std::size_t length = rng.index(12);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < length; ++i)
        out.push_back(alphabet[rng.index(alphabet.size())]);
    return out;
}

}  // namespace

TEST_CASE("intent accuracy counts exact matches") {
    CHECK(ic_accuracy({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(ic_accuracy({1, 2, 3}, {4, 5, 6}) == doctest::Approx(0.0));
    CHECK(ic_accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(ic_accuracy({1, 2}, {1}), ValidationError);
}

TEST_CASE("span extraction reproduces the worked utterance") {
    std::vector<Span> spans = extract_spans(kFigureLabels);
    REQUIRE(spans.size() == 3);
    CHECK(spans[0] == Span{"AddToPlaylist:artist", 3, 5});
    CHECK(spans[1] == Span{"AddToPlaylist:playlist_owner", 6, 7});
    CHECK(spans[2] == Span{"AddToPlaylist:playlist", 8, 12});
}

TEST_CASE("all-outside sequence yields no spans") {
    CHECK(extract_spans({"O", "O", "O"}).empty());
    CHECK(extract_spans({}).empty());
}

TEST_CASE("explicit begin markers split runs") {
    std::vector<Span> spans = extract_spans({"B-x", "I-x", "B-x"});
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == Span{"x", 0, 2});
    CHECK(spans[1] == Span{"x", 2, 3});

    // Begin markers behind an intent prefix work the same way.
    spans = extract_spans({"Play:B-x", "Play:I-x", "Play:B-x"});
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == Span{"Play:x", 0, 2});
    CHECK(spans[1] == Span{"Play:x", 2, 3});
}

TEST_CASE("span extraction agrees with the brute-force enumerator") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        bool bio = trial % 2 == 1;
        std::vector<std::string> labels = random_sequence(rng, bio);
        auto ours = extract_spans(labels);
        auto expected = reference::spans(labels);
        INFO("trial ", trial);
        CHECK(ours == expected);
    }
}

TEST_CASE("span F1 on identical sequences is one") {
    std::vector<std::vector<std::string>> labels = {kFigureLabels};
    EpisodeMetrics m = span_f1(labels, labels);
    CHECK(m.slot_f1 == doctest::Approx(1.0));
    CHECK(m.matched_spans == 3);
}

TEST_CASE("predicting one of three gold spans scores F1 one half") {
    std::vector<std::vector<std::string>> gold = {
        {"a", "O", "b", "O", "c"}};
    std::vector<std::vector<std::string>> predicted = {
        {"a", "O", "O", "O", "O"}};
    EpisodeMetrics m = span_f1(predicted, gold);
    CHECK(m.slot_precision == doctest::Approx(1.0));
    CHECK(m.slot_recall == doctest::Approx(1.0 / 3.0));
    CHECK(m.slot_f1 == doctest::Approx(0.5));
}

TEST_CASE("a shifted boundary is both a false positive and false negative") {
    std::vector<std::vector<std::string>> gold = {{"a", "a", "O", "O"}};
    std::vector<std::vector<std::string>> predicted = {{"a", "a", "a", "O"}};
    EpisodeMetrics m = span_f1(predicted, gold);
    CHECK(m.matched_spans == 0);
    CHECK(m.predicted_spans == 1);
    CHECK(m.gold_spans == 1);
    CHECK(m.slot_f1 == doctest::Approx(0.0));
}

TEST_CASE("span F1 agrees with the brute-force scorer on random batches") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<std::string>> predicted, gold;
        std::size_t utterances = 1 + rng.index(4);
        for (std::size_t u = 0; u < utterances; ++u) {
            bool bio = rng.index(2) == 1;
            std::vector<std::string> g = random_sequence(rng, bio);
            std::vector<std::string> p = random_sequence(rng, bio);
            p.resize(g.size(), "O");
            gold.push_back(std::move(g));
            predicted.push_back(std::move(p));
        }
        EpisodeMetrics ours = span_f1(predicted, gold);
        reference::F1 expected = reference::span_f1(predicted, gold);
        CHECK(ours.matched_spans == expected.matched);
        CHECK(ours.predicted_spans == expected.predicted);
        CHECK(ours.gold_spans == expected.gold);
        CHECK(ours.slot_f1 == doctest::Approx(expected.f1).epsilon(1e-12));
    }
}

TEST_CASE("span F1 is symmetric in prediction and gold") {
    std::vector<std::vector<std::string>> a = {{"a", "a", "O", "b"}};
    std::vector<std::vector<std::string>> b = {{"a", "O", "b", "b"}};
    EpisodeMetrics forward = span_f1(a, b);
    EpisodeMetrics backward = span_f1(b, a);
    CHECK(forward.slot_precision == doctest::Approx(backward.slot_recall));
    CHECK(forward.slot_recall == doctest::Approx(backward.slot_precision));
    CHECK(forward.slot_f1 == doctest::Approx(backward.slot_f1));
}

TEST_CASE("empty sides follow the zero convention") {
    std::vector<std::vector<std::string>> none = {{"O", "O"}};
    std::vector<std::vector<std::string>> some = {{"a", "O"}};
    EpisodeMetrics m = span_f1(none, some);
    CHECK(m.slot_precision == 0.0);
    CHECK(m.slot_recall == 0.0);
    CHECK(m.slot_f1 == 0.0);
    EpisodeMetrics empty = span_f1(none, none);
    CHECK(empty.slot_f1 == 0.0);
}

TEST_CASE("span F1 rejects mismatched token counts") {
    CHECK_THROWS_AS(span_f1({{"a", "O"}}, {{"a"}}), ValidationError);
}

TEST_CASE("aggregation follows seed means then cross-seed deviation") {
    auto episodes_with_mean = [](double value) {
        std::vector<EpisodeMetrics> group(4);
        for (auto& m : group) {
            m.intent_accuracy = value;
            m.slot_f1 = value / 2;
        }
        return group;
    };
    std::vector<std::vector<EpisodeMetrics>> per_seed = {
        episodes_with_mean(0.5), episodes_with_mean(0.6),
        episodes_with_mean(0.7)};
    AggregateReport report = aggregate(per_seed, {1, 2, 3});
    CHECK(report.intent_accuracy.mean == doctest::Approx(0.6));
    CHECK(report.intent_accuracy.std_dev == doctest::Approx(0.1));
    CHECK(report.slot_f1.mean == doctest::Approx(0.3));
    CHECK(report.episodes_per_seed == 4);
    // Identical episodes within a seed: no episode-level spread.
    CHECK(report.intent_accuracy.seed_episode_stds[0] == doctest::Approx(0.0));
}

TEST_CASE("single seed aggregates with zero cross-seed deviation") {
    std::vector<EpisodeMetrics> group(3);
    group[0].intent_accuracy = 0.2;
    group[1].intent_accuracy = 0.4;
    group[2].intent_accuracy = 0.9;
    AggregateReport report = aggregate({group}, {7});
    CHECK(report.intent_accuracy.mean == doctest::Approx(0.5));
    CHECK(report.intent_accuracy.std_dev == 0.0);
}

TEST_CASE("aggregation is invariant to episode order") {
    std::vector<EpisodeMetrics> group(3);
    group[0].slot_f1 = 0.1;
    group[1].slot_f1 = 0.5;
    group[2].slot_f1 = 0.9;
    auto shuffled = group;
    std::swap(shuffled[0], shuffled[2]);
    AggregateReport a = aggregate({group}, {1});
    AggregateReport b = aggregate({shuffled}, {1});
    CHECK(a.slot_f1.mean == doctest::Approx(b.slot_f1.mean));
    CHECK(a.slot_f1.seed_episode_stds[0] ==
          doctest::Approx(b.slot_f1.seed_episode_stds[0]));
}

TEST_CASE("aggregation rejects uneven seed groups") {
    std::vector<EpisodeMetrics> three(3), two(2);
    CHECK_THROWS_AS(aggregate({three, two}, {1, 2}), ValidationError);
    CHECK_THROWS_AS(aggregate({}, {}), ValidationError);
}
