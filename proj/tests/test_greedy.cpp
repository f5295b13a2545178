#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace eqrom;

namespace {

GreedyConfig small_config(int max_iters)
{
    GreedyConfig c;
    const ParameterBox box;
    c.reference = box.centroid();
    c.train = parameter_grid(box, 2, 3, c.reference);
    c.grid.steps = 4;
    c.eps_pod_u = 1e-3;
    c.eps_pod_sigma = 1e-3;
    c.delta = 1e-5;
    c.max_iters = max_iters;
    c.stop_tol = 1e-12;
    c.stagnation_tol = 0.0;
    return c;
}

GreedyResult run(const GreedyConfig& c)
{
    return pod_greedy(eqrom::test::shared_plate(1, 1), BoundaryConditions::plate(), Loading{}, c);
}

const GreedyResult& two_iterations()
{
    static const GreedyResult r = run(small_config(2));
    return r;
}

} // namespace

TEST(Greedy, ParameterGridVariesNuFastest)
{
    const ParameterBox box;
    const auto g = parameter_grid(box, 2, 3, box.centroid());
    ASSERT_EQ(g.size(), 6u);
    EXPECT_EQ(g[0].nu, box.nu_min);
    EXPECT_EQ(g[1].nu, box.nu_max);
    EXPECT_EQ(g[0].a_pui, box.a_min);
    EXPECT_EQ(g[5].a_pui, box.a_max);
    const auto pinned = parameter_grid(box, 1, 2, {0.25, 7.0});
    EXPECT_EQ(pinned[0].nu, 0.25);
    EXPECT_EQ(pinned[1].nu, 0.25);
}

TEST(Greedy, SweepTableIsAPermutationWithConsistentArgmax)
{
    const auto& r = two_iterations();
    ASSERT_FALSE(r.trace.iterations.empty());
    const auto& first = r.trace.iterations.front();
    ASSERT_EQ(first.table.size(), 6u);
    double best = -1.0;
    Index arg = -1;
    for (std::size_t i = 0; i < first.table.size(); ++i) {
        const auto& e = first.table[i];
        EXPECT_EQ(e.index, static_cast<Index>(i));
        ASSERT_TRUE(e.ok) << e.error;
        EXPECT_GE(e.indicator, 0.0);
        if (e.indicator > best) {
            best = e.indicator;
            arg = e.index;
        }
    }
    EXPECT_EQ(first.max_indicator, best);
    EXPECT_EQ(first.argmax, arg);
}

TEST(Greedy, NextSampleIsPreviousArgmax)
{
    const auto& r = two_iterations();
    ASSERT_EQ(r.trace.iterations.size(), 2u);
    EXPECT_EQ(r.trace.sampled.front(), ParameterBox{}.centroid());
    const auto& second = r.trace.iterations[1];
    const Parameter expected = small_config(2).train[static_cast<std::size_t>(r.trace.iterations[0].argmax)];
    EXPECT_EQ(second.sampled, expected);
    EXPECT_EQ(r.trace.stop_reason, "maximum number of iterations");
}

TEST(Greedy, BasesAreHierarchical)
{
    const auto one = run(small_config(1));
    const auto& two = two_iterations();
    const Matrix& a = one.artifacts->zu.modes;
    const Matrix& b = two.artifacts->zu.modes;
    ASSERT_GE(b.cols(), a.cols());
    EXPECT_EQ(b.leftCols(a.cols()), a);
    EXPECT_EQ(two.trace.iterations[0].n_u, one.trace.iterations[0].n_u);
    EXPECT_GE(two.trace.iterations[1].n_u, two.trace.iterations[0].n_u);
}

TEST(Greedy, SingletonTrainingSetResamplesWithoutRecomputation)
{
    auto c = small_config(3);
    c.train = {c.reference};
    const auto r = run(c);
    ASSERT_EQ(r.trace.sampled.size(), 1u);
    ASSERT_EQ(r.trajectories.size(), 1u);
    ASSERT_GE(r.trace.iterations.size(), 2u);
    const auto& again = r.trace.iterations[1];
    EXPECT_TRUE(again.resampled);
    EXPECT_EQ(again.n_u, r.trace.iterations[0].n_u);
    EXPECT_EQ(again.max_indicator, r.trace.iterations[0].max_indicator);
    EXPECT_EQ(again.hf_time, 0.0);
}

TEST(Greedy, LooseToleranceStopsAfterFirstIteration)
{
    auto c = small_config(4);
    c.stop_tol = 1e3;
    const auto r = run(c);
    EXPECT_EQ(r.trace.iterations.size(), 1u);
    EXPECT_EQ(r.trace.stop_reason, "max indicator below stop tolerance");
}

TEST(Greedy, SweepIsIndependentOfThreadCount)
{
    const auto& r = two_iterations();
    const auto c = small_config(1);
    const ElastoplasticParams base = c.base;
    const auto serial = indicator_sweep(r.artifacts, c.train, base, c.grid, c.newton, 1);
    const auto threaded = indicator_sweep(r.artifacts, c.train, base, c.grid, c.newton, 3);
    ASSERT_EQ(serial.size(), threaded.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        EXPECT_EQ(serial[i].index, threaded[i].index);
        EXPECT_EQ(serial[i].indicator, threaded[i].indicator);
    }
    for (std::size_t i = 1; i < serial.size(); ++i) {
        EXPECT_GE(serial[i - 1].indicator, serial[i].indicator);
    }
}

TEST(Greedy, InvalidInputsAreRejected)
{
    auto c = small_config(1);
    c.train.clear();
    EXPECT_THROW(run(c), InputError);
    c = small_config(1);
    c.eps_pod_u = 1.5;
    EXPECT_THROW(run(c), InputError);
    c = small_config(1);
    c.train.push_back({0.6, 1.0});
    EXPECT_THROW(run(c), InputError);
    EXPECT_THROW(indicator_sweep(nullptr, c.train, c.base, c.grid, c.newton), InputError);
    auto empty = std::make_shared<RomArtifacts>();
    EXPECT_THROW(indicator_sweep(empty, c.train, c.base, c.grid, c.newton), InputError);
}
