#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include <switchbsde/instances.hpp>
#include <switchbsde/lattice.hpp>

#include "oracles.hpp"

using namespace swbsde;

namespace {

CompensatorSpec linear_intensity() {
    CompensatorSpec c;
    c.lambda = [](double t) { return t; };
    c.lambda_bound = 1.0;
    c.marks = {"e"};
    c.phi = [](double, std::size_t) { return 1.0; };
    return c;
}

/// Terminal expectation by backward induction through step_coefficients.
double backward_expectation(const ChainGrid& g, const StateFunction& xi) {
    LatticeField v(g);
    for (std::size_t i = 0; i < g.slice_size(g.n_steps); ++i) {
        v.slice(g.n_steps)[i] = xi(g.state(g.node(g.n_steps, i)));
    }
    ChildValues c(g.n_marks);
    for (int k = g.n_steps - 1; k >= 0; --k) {
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const auto node = g.node(k, i);
            gather_children(v, g, node, c);
            v.slice(k)[i] = step_coefficients(c, node, g).expectation;
        }
    }
    return v.root();
}

}  // namespace

TEST(BuildChain, LinearIntensityJumpProbabilities) {
    const auto g = build_chain(linear_intensity(), 1.0, 4, {});
    const std::vector<double> expected{0.0, 0.0625, 0.125, 0.1875};
    ASSERT_EQ(g.jump_probs.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(g.jump_probs[k][0], expected[k]);
        EXPECT_DOUBLE_EQ(g.no_jump_prob[k], 1.0 - expected[k]);
    }
    EXPECT_DOUBLE_EQ(g.cumulative_A[4], 0.375);
    EXPECT_DOUBLE_EQ(g.sqrt_dt, 0.5);
}

TEST(BuildChain, MarkSplit) {
    const auto g = build_chain(CompensatorSpec::constant(2.0, {"a", "b"}, {0.25, 0.75}), 1.0, 10, {});
    for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_DOUBLE_EQ(g.jump_probs[k][0], 0.05);
        EXPECT_DOUBLE_EQ(g.jump_probs[k][1], 0.15);
    }
}

TEST(BuildChain, InvalidArguments) {
    const auto c = CompensatorSpec::constant(1.0, {"e"}, {1.0});
    EXPECT_THROW(build_chain(c, 1.0, 0, {}), std::invalid_argument);
    EXPECT_THROW(build_chain(c, 0.0, 4, {}), std::invalid_argument);
    EXPECT_THROW(build_chain(CompensatorSpec::constant(-1.0, {"e"}, {1.0}), 1.0, 4, {}), std::invalid_argument);
}

TEST(BuildChain, ReferenceLawOverflow) {
    try {
        build_chain(CompensatorSpec::constant(5.0, {"e"}, {1.0}), 1.0, 4, {});
        FAIL() << "expected StabilityViolation";
    } catch (const StabilityViolation& e) {
        EXPECT_EQ(e.mode, StabilityViolation::reference);
        EXPECT_DOUBLE_EQ(e.value, 1.25);
        EXPECT_EQ(e.suggested_steps, 5);
    }
}

TEST(BuildChain, KernelOverflowNamesWorstMode) {
    const auto c = CompensatorSpec::constant(1.0, {"e"}, {1.0});
    try {
        build_chain(c, 1.0, 1, {KernelField::constant(1.5), KernelField::constant(2.0)});
        FAIL() << "expected StabilityViolation";
    } catch (const StabilityViolation& e) {
        EXPECT_EQ(e.mode, 1u);
        EXPECT_EQ(e.step, 0);
        EXPECT_DOUBLE_EQ(e.value, 2.0);
        EXPECT_EQ(e.suggested_steps, 2);
    }
    // The suggested step count is enough.
    EXPECT_NO_THROW(build_chain(c, 1.0, 2, {KernelField::constant(1.5), KernelField::constant(2.0)}));
}

TEST(BuildChain, SuggestedStepsAlwaysSuffice) {
    oracle_test::Gen gen(3);
    for (int trial = 0; trial < 200; ++trial) {
        const double lam = gen.uniform(0.5, 20.0);
        const double rho = gen.uniform(0.0, 2.0);
        const auto c = CompensatorSpec::constant(lam, {"e"}, {1.0});
        const int n = gen.integer(1, 10);
        try {
            build_chain(c, 1.0, n, {KernelField::constant(rho)});
        } catch (const StabilityViolation& e) {
            EXPECT_GT(e.suggested_steps, n);
            EXPECT_NO_THROW(build_chain(c, 1.0, e.suggested_steps, {KernelField::constant(rho)}));
        }
    }
}

TEST(ChainGrid, IndexRoundTrip) {
    const auto g = build_chain(instances::instance_a(12).problem, 12, 5);
    std::size_t total = 0;
    for (int k = 0; k <= g.n_steps; ++k) {
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const auto s = g.node(k, i);
            EXPECT_EQ(g.index(s), i);
            EXPECT_LE(std::abs(s.w), k);
            EXPECT_EQ((s.w + k) % 2, 0);
            EXPECT_LE(s.n, std::min(k, 5));
        }
        total += g.slice_size(k);
    }
    EXPECT_EQ(total, g.total_nodes());
}

TEST(ChainGrid, JumpCountSaturates) {
    const auto g = build_chain(instances::instance_a(6).problem, 6, 2);
    const NodeState s{3, 1, 2};
    EXPECT_EQ(g.child(s, 1, true).n, 2);
    EXPECT_EQ(g.child(s, 0, true).w, 0);
}

TEST(StepCoefficients, HandExample) {
    const auto g = build_chain(CompensatorSpec::constant(2.0, {"e"}, {1.0}), 1.0, 10, {});
    ChildValues v(1);
    v.no_jump = {1.0, 3.0};
    v.jump[0] = {5.0};
    v.jump[1] = {7.0};
    const auto c = step_coefficients(v, NodeState{0, 0, 0}, g);
    // p = 0.2: branches 0.8 * 1 + 0.2 * 5 = 1.8 and 0.8 * 3 + 0.2 * 7 = 3.8.
    EXPECT_NEAR(c.expectation, 2.8, 1e-15);
    EXPECT_NEAR(c.z, 1.0 / std::sqrt(0.1), 1e-12);
    EXPECT_NEAR(c.u[0], 4.0, 1e-15);
    EXPECT_NEAR(c.jump_conditional[0], 6.0, 1e-15);
    EXPECT_NEAR(c.no_jump_conditional, 2.0, 1e-15);
}

TEST(StepCoefficients, AffineChildren) {
    // next = a + b W + c n: z recovers b, u recovers c.
    const auto g = build_chain(CompensatorSpec::constant(1.0, {"x", "y"}, {0.5, 0.5}), 1.0, 16, {});
    const double a = 0.3, b = -1.7, c = 0.9;
    const NodeState node{4, 2, 1};
    ChildValues v(2);
    for (int br = 0; br < 2; ++br) {
        const auto nj = g.state(g.child(node, br, false));
        const auto j = g.state(g.child(node, br, true));
        v.no_jump[static_cast<std::size_t>(br)] = a + b * nj.w + c * nj.n;
        v.jump[static_cast<std::size_t>(br)] = {a + b * j.w + c * j.n, a + b * j.w + c * j.n};
    }
    const auto s = step_coefficients(v, node, g);
    EXPECT_NEAR(s.z, b, 1e-12);
    EXPECT_NEAR(s.u[0], c, 1e-12);
    EXPECT_NEAR(s.u[1], c, 1e-12);
    const auto here = g.state(node);
    EXPECT_NEAR(s.expectation, a + b * here.w + c * (here.n + g.delta_A[4]), 1e-12);
}

TEST(StepCoefficients, RejectsMissingOrMalformedChildren) {
    const auto g = build_chain(CompensatorSpec::constant(1.0, {"x", "y"}, {0.5, 0.5}), 1.0, 4, {});
    ChildValues wrong(1);
    EXPECT_THROW(step_coefficients(wrong, NodeState{}, g), std::invalid_argument);
    ChildValues missing(2);
    missing.jump[1][1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(step_coefficients(missing, NodeState{}, g), std::invalid_argument);
}

TEST(StepCoefficients, ReweightingIdentity) {
    // E^rho[next] = E[next] + sum_m (rho_m - 1) p_m u_m.
    oracle_test::Gen gen(11);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t marks = static_cast<std::size_t>(gen.integer(1, 4));
        std::vector<double> w(marks);
        double tot = 0.0;
        for (auto& x : w) tot += (x = gen.uniform(0.05, 1.0));
        for (auto& x : w) x /= tot;
        std::vector<std::string> labels(marks, "m");
        const int N = gen.integer(4, 30);
        const auto g = build_chain(CompensatorSpec::constant(gen.uniform(0.0, 0.45 * N), labels, w), 1.0, N, {});
        const auto rho = gen.kernel_values(marks, 2.0);
        ChildValues v(marks);
        for (int b = 0; b < 2; ++b) {
            v.no_jump[static_cast<std::size_t>(b)] = gen.uniform(-10.0, 10.0);
            for (auto& x : v.jump[static_cast<std::size_t>(b)]) x = gen.uniform(-10.0, 10.0);
        }
        const int k = gen.integer(0, N - 1);
        const NodeState node{k, k % 2 == 0 ? 0 : 1, 0};
        const auto s = step_coefficients(v, node, g);
        double corr = 0.0;
        for (std::size_t m = 0; m < marks; ++m) corr += (rho[m] - 1.0) * g.jump_probs[static_cast<std::size_t>(k)][m] * s.u[m];
        EXPECT_NEAR(reweighted_expectation(v, node, g, rho), s.expectation + corr, 1e-12);
    }
}

TEST(StepCoefficients, UnitKernelReweightingIsIdentity) {
    const auto g = build_chain(CompensatorSpec::constant(3.0, {"x", "y"}, {0.4, 0.6}), 1.0, 10, {});
    ChildValues v(2);
    v.no_jump = {0.5, -1.0};
    v.jump[0] = {2.0, 4.0};
    v.jump[1] = {-3.0, 1.0};
    const NodeState node{2, 0, 1};
    EXPECT_NEAR(reweighted_expectation(v, node, g, KernelField::constant(1.0)),
                step_coefficients(v, node, g).expectation, 1e-15);
}

TEST(StepLikelihood, ExpectationOfRatioIsOne) {
    const auto g = build_chain(CompensatorSpec::constant(3.0, {"x", "y"}, {0.4, 0.6}), 1.0, 10, {});
    const std::vector<double> rho{1.7, 0.2};
    const auto& p = g.jump_probs[3];
    double e = g.no_jump_prob[3] * step_likelihood_ratio(g, 3, rho, -1);
    for (int m = 0; m < 2; ++m) e += p[static_cast<std::size_t>(m)] * step_likelihood_ratio(g, 3, rho, m);
    EXPECT_NEAR(e, 1.0, 1e-15);
}

TEST(NodeProbabilities, SlicesSumToOne) {
    const auto g = build_chain(instances::three_mode_linear(30).problem, 30);
    const auto prob = node_probabilities(g);
    for (int k = 0; k <= g.n_steps; ++k) {
        double s = 0.0;
        for (double x : prob.slice(k)) {
            EXPECT_GE(x, 0.0);
            s += x;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(NodeProbabilities, JumpCountMarginalMatchesBernoulliLaw) {
    const auto g = build_chain(linear_intensity(), 1.0, 12, {});
    const auto prob = node_probabilities(g);
    std::vector<double> q;
    for (int k = 0; k < 12; ++k) q.push_back(1.0 - g.no_jump_prob[static_cast<std::size_t>(k)]);
    const auto law = oracle_test::bernoulli_count_law(q);
    std::vector<double> marginal(13, 0.0);
    for (std::size_t i = 0; i < g.slice_size(12); ++i) marginal[static_cast<std::size_t>(g.node(12, i).n)] += prob.slice(12)[i];
    for (std::size_t n = 0; n <= 12; ++n) EXPECT_NEAR(marginal[n], law[n], 1e-14);
}

TEST(NodeProbabilities, SaturatedLevelCollectsTail) {
    const auto g = build_chain(CompensatorSpec::constant(4.0, {"e"}, {1.0}), 1.0, 10, {}, 2);
    const auto prob = node_probabilities(g);
    const auto law = oracle_test::bernoulli_count_law(std::vector<double>(10, 0.4));
    double tail = 0.0;
    for (std::size_t n = 2; n < law.size(); ++n) tail += law[n];
    double top = 0.0;
    for (std::size_t i = 0; i < g.slice_size(10); ++i) {
        if (g.node(10, i).n == 2) top += prob.slice(10)[i];
    }
    EXPECT_NEAR(top, tail, 1e-14);
}

TEST(NodeProbabilities, BrownianMarginalIsBinomial) {
    const auto g = build_chain(CompensatorSpec::constant(1.0, {"e"}, {1.0}), 1.0, 9, {});
    const auto prob = node_probabilities(g);
    for (int j = 0; j <= 9; ++j) {
        double p = 0.0;
        for (std::size_t i = 0; i < g.slice_size(9); ++i) {
            if (g.node(9, i).w == 2 * j - 9) p += prob.slice(9)[i];
        }
        EXPECT_NEAR(p, std::tgamma(10.0) / (std::tgamma(j + 1.0) * std::tgamma(10.0 - j)) / 512.0, 1e-13);
    }
}

TEST(Tower, BackwardInductionMatchesFullTree) {
    oracle_test::Gen gen(23);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = oracle_test::random_problem(gen, 1, static_cast<std::size_t>(gen.integer(1, 3)), 8);
        auto mode = p.modes[0];
        mode.kernel = KernelField::constant(1.0);
        mode.running_f = constant_function(0.0);
        mode.running_g = constant_function(0.0);
        const auto g = build_chain(p.compensator, p.horizon, 8, {});
        const double tree = oracle_test::tree_value(mode, p.compensator, p.horizon, 8);
        EXPECT_NEAR(backward_expectation(g, mode.terminal), tree, 1e-12);
    }
}

TEST(Tower, ForwardAndBackwardAgree) {
    const auto inst = instances::instance_a(20);
    const auto g = build_chain(inst.problem, 20, 7);
    const auto prob = node_probabilities(g);
    const auto& xi = inst.problem.modes[0].terminal;
    double forward = 0.0;
    for (std::size_t i = 0; i < g.slice_size(20); ++i) forward += prob.slice(20)[i] * xi(g.state(g.node(20, i)));
    EXPECT_NEAR(forward, backward_expectation(g, xi), 1e-12);
}

TEST(Sampling, ReferencePathFrequencies) {
    const auto g = build_chain(CompensatorSpec::constant(2.0, {"a", "b"}, {0.3, 0.7}), 1.0, 10, {});
    double jumps_a = 0.0, ups = 0.0;
    const std::size_t n = 20000;
    for (std::size_t i = 0; i < n; ++i) {
        const auto path = sample_reference_path(g, 4, i);
        EXPECT_EQ(path.weight, 1.0);
        for (int k = 0; k < 10; ++k) {
            jumps_a += path.jump[static_cast<std::size_t>(k)] == 0 ? 1.0 : 0.0;
            ups += path.brownian[static_cast<std::size_t>(k)] > 0 ? 1.0 : 0.0;
        }
    }
    const double trials = 10.0 * n;
    EXPECT_LE(std::abs(jumps_a / trials - 0.06), 4.0 * std::sqrt(0.06 * 0.94 / trials));
    EXPECT_LE(std::abs(ups / trials - 0.5), 4.0 * std::sqrt(0.25 / trials));
}

TEST(Sampling, PathNodesAndMarkedPath) {
    const auto g = build_chain(CompensatorSpec::constant(1.0, {"a", "b"}, {0.5, 0.5}), 1.0, 4, {});
    PathSample path;
    path.brownian = {1, 1, -1, 1};
    path.jump = {-1, 1, -1, 0};
    const auto nodes = path.nodes(g);
    ASSERT_EQ(nodes.size(), 5u);
    EXPECT_EQ(nodes[4], (NodeState{4, 2, 2}));
    EXPECT_EQ(nodes[2], (NodeState{2, 2, 1}));
    const auto marked = to_marked_path(g, path);
    ASSERT_EQ(marked.events.size(), 2u);
    EXPECT_DOUBLE_EQ(marked.events[0].time, 0.5);
    EXPECT_EQ(marked.events[0].mark, 1u);
    EXPECT_DOUBLE_EQ(marked.events[1].time, 1.0);
}
