#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "cmap/cascade.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cmap;

namespace {

using fixture::chain;
using fixture::random_bank;
using fixture::singletons;

}  // namespace

TEST_CASE("identity chain triggers exactly the routed neurons with score 1") {
    const auto m = chain({{"a", 3, 4}, {"b", 3, 4}, {"c", 3, 4}});
    KernelBank bank;
    auto ab = fixture::blank_kernel(m, "a", "b", 1);
    ab.at(1, 0, 0, 0) = 1.0f;
    auto bc = fixture::blank_kernel(m, "b", "c", 1);
    bc.at(2, 1, 0, 0) = 1.0f;
    bank.add(ab, m);
    bank.add(bc, m);
    const auto clusters = singletons(m);
    const auto r = run_cascade(m, bank, clusters, "c0");
    REQUIRE(r.layers.size() == 2);
    REQUIRE(r.layers[0].triggered.size() == 1);
    CHECK(r.layers[0].triggered[0].neuron.key() == "b:1");
    CHECK(r.layers[0].triggered[0].score == 1.0);
    CHECK(r.layers[0].triggered[0].cluster_id == "c4");
    REQUIRE(r.layers[1].triggered.size() == 1);
    CHECK(r.layers[1].triggered[0].neuron.key() == "c:2");
    CHECK(r.layers[1].triggered[0].score == 1.0);
    REQUIRE(r.layers[0].edges.size() == 1);
    CHECK(r.layers[0].edges[0].src.key() == "a:0");
    CHECK(r.layers[0].edges[0].dst.key() == "b:1");
    CHECK(r.layers[0].edges[0].strength == 1.0);
    CHECK_FALSE(r.layers[0].triggered[0].in_class_summary.has_value());
}

TEST_CASE("all-zero kernels trigger nothing") {
    const auto m = chain({{"a", 4, 4}, {"b", 4, 2}, {"c", 4, 2}});
    KernelBank bank;
    for (const auto& c : m.connections) bank.add(fixture::blank_kernel(m, c.src_layer, c.dst_layer, 3), m);
    const auto r = run_cascade(m, bank, singletons(m), "c1");
    REQUIRE(r.layers.size() == 2);
    for (const auto& l : r.layers) {
        CHECK(l.triggered.empty());
        CHECK(l.edges.empty());
    }
}

TEST_CASE("random chains match a dense propagation oracle") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto m = chain({{"a", 10, 8}, {"b", 9, 4}, {"c", 8, 4}, {"d", 7, 2}});
        const int size = seed % 3 == 0 ? 1 : 3;
        const auto bank = random_bank(m, seed, size);
        std::vector<NeuronCluster> clusters{{"c0", "a", {1, 4, 7}, {}}};
        const int top = 2 + static_cast<int>(seed % 4);
        CascadeConfig cfg;
        cfg.trigger_top_n = top;
        const auto r = run_cascade(m, bank, clusters, "c0", cfg);
        const auto expected = oracle::cascade(m, bank, 0, {1, 4, 7}, top);
        REQUIRE(r.layers.size() == expected.size());
        for (std::size_t l = 0; l < expected.size(); ++l) {
            std::vector<int> got;
            for (const auto& t : r.layers[l].triggered) {
                got.push_back(t.neuron.channel);
                CHECK(std::isfinite(t.score));
                CHECK(t.score > 0.0);
                CHECK(t.score <= 1.0);
                CHECK(t.cluster_id == t.neuron.key());
            }
            CHECK(got == expected[l]);
            CHECK(static_cast<int>(got.size()) <= top);
            for (const auto& e : r.layers[l].edges) CHECK(e.strength > 0.0);
        }
    }
}

TEST_CASE("zeroing one layer's outgoing kernels truncates the cascade there") {
    const auto m = chain({{"a", 6, 4}, {"b", 6, 4}, {"c", 6, 4}, {"d", 6, 4}});
    auto bank = random_bank(m, 4, 3);
    bank.add(fixture::blank_kernel(m, "b", "c", 3), m);
    CascadeConfig cfg;
    cfg.trigger_top_n = 6;
    const auto r = run_cascade(m, bank, singletons(m), "c0", cfg);
    REQUIRE(r.layers.size() == 3);
    CHECK_FALSE(r.layers[0].triggered.empty());
    CHECK(r.layers[1].triggered.empty());
    CHECK(r.layers[2].triggered.empty());
}

TEST_CASE("seeding the last layer yields an empty cascade") {
    const auto m = chain({{"a", 3, 4}, {"b", 3, 4}});
    const auto bank = random_bank(m, 2, 3);
    const auto clusters = singletons(m);
    CHECK(run_cascade(m, bank, clusters, "c5").layers.empty());
}

TEST_CASE("errors: unknown cluster, missing kernels, bad config") {
    const auto m = chain({{"a", 3, 4}, {"b", 3, 4}, {"c", 3, 4}});
    KernelBank partial;
    partial.add(fixture::blank_kernel(m, "a", "b", 1), m);
    auto clusters = singletons(m);
    CHECK_THROWS_WITH_AS(run_cascade(m, partial, clusters, "c99"), doctest::Contains("unknown cluster"), Error);
    auto ab = fixture::blank_kernel(m, "a", "b", 1);
    ab.at(0, 0, 0, 0) = 1.0f;
    partial.add(ab, m);
    CHECK_THROWS_WITH_AS(run_cascade(m, partial, clusters, "c0"), doctest::Contains("missing kernel b -> c"), Error);
    CascadeConfig bad;
    bad.trigger_top_n = 0;
    CHECK_THROWS_AS(run_cascade(m, random_bank(m, 1, 1), clusters, "c0", bad), Error);
}

TEST_CASE("class context splits triggered clusters") {
    const auto m = chain({{"a", 4, 4}, {"b", 4, 4}});
    KernelBank bank;
    auto ab = fixture::blank_kernel(m, "a", "b", 1);
    ab.at(1, 0, 0, 0) = 1.0f;
    ab.at(2, 0, 0, 0) = 0.5f;
    bank.add(ab, m);
    const auto clusters = singletons(m);  // b:1 is c5, b:2 is c6
    ClassGraph g;
    g.class_label = "x";
    g.nodes.push_back({"c5", "b", {1}, {1}, 3.0});
    const auto r = run_cascade(m, bank, clusters, "c0", {}, &g);
    REQUIRE(r.layers[0].triggered.size() == 2);
    CHECK(r.layers[0].triggered[0].cluster_id == "c5");
    CHECK(r.layers[0].triggered[0].in_class_summary == true);
    CHECK(r.layers[0].triggered[1].cluster_id == "c6");
    CHECK(r.layers[0].triggered[1].in_class_summary == false);
    CHECK(r.layers[0].triggered[1].score == doctest::Approx(0.5));
    CHECK(r.class_label == "x");

    const auto j = cascade_to_json(r);
    CHECK(j.at("layers")[0].at("triggered")[0].at("in_class_summary") == true);
    CHECK(cascade_to_json(cascade_from_json(json::parse(j.dump()))) == j);
}

TEST_CASE("without normalization raw sums are reported, without relu negatives never trigger") {
    const auto m = chain({{"a", 2, 2}, {"b", 3, 2}});
    KernelBank bank;
    auto ab = fixture::blank_kernel(m, "a", "b", 1);
    ab.at(0, 0, 0, 0) = 2.0f;
    ab.at(0, 1, 0, 0) = 1.0f;
    ab.at(1, 0, 0, 0) = -1.0f;
    bank.add(ab, m);
    std::vector<NeuronCluster> clusters{{"c0", "a", {0, 1}, {}}};
    CascadeConfig cfg;
    cfg.normalize = false;
    cfg.relu = false;
    const auto r = run_cascade(m, bank, clusters, "c0", cfg);
    REQUIRE(r.layers[0].triggered.size() == 1);
    CHECK(r.layers[0].triggered[0].score == 3.0);
    REQUIRE(r.layers[0].edges.size() == 2);
    CHECK(r.layers[0].edges[0].strength == 2.0);
    CHECK(r.layers[0].edges[1].strength == 1.0);
}

TEST_CASE("cascade is deterministic") {
    const auto m = chain({{"a", 10, 8}, {"b", 9, 4}, {"c", 8, 4}});
    const auto bank = random_bank(m, 77, 3);
    const auto clusters = singletons(m);
    CHECK(cascade_to_json(run_cascade(m, bank, clusters, "c3")).dump() ==
          cascade_to_json(run_cascade(m, bank, clusters, "c3")).dump());
}
