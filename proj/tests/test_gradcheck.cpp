#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "rrwkv/gradcheck.hpp"
#include "support.hpp"

using namespace rrwkv;

namespace {

ModelConfig small_model(Variant variant, MediumMode mode = MediumMode::gate_literal) {
  ModelConfig cfg;
  cfg.d = 4;
  cfg.layers = 2;
  cfg.vocab = 7;
  cfg.variant = variant;
  cfg.medium.s = 3;
  cfg.medium.C = 3;
  cfg.medium.c_max = 16;
  cfg.medium.medium = mode;
  return cfg;
}

double last_row_ce(const Model& model, const Matrix& x0, int target) {
  const Matrix logits = forward_embedded(model, x0);
  const auto row = logits.row(logits.rows() - 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : row) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : row) sum += std::exp(z - mx);
  return mx + std::log(sum) - row[static_cast<std::size_t>(target)];
}

}  // namespace

TEST(RelativeError, Formula) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(-1.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 0.0), 1e-2);
}

TEST(FiniteDiff, Quadratic) {
  const auto f = [](std::span<const double> x) { return 3 * x[0] * x[0] + x[0] * x[1] - 2 * x[1]; };
  const Vector g = finite_diff(f, Vector{1.0, -2.0});
  EXPECT_NEAR(g[0], 6 - 2, 1e-8);
  EXPECT_NEAR(g[1], 1 - 2, 1e-8);
}

TEST(FiniteDiff, NonFiniteObjectiveNamesCoordinate) {
  const auto f = [](std::span<const double> x) { return x[1] > 0.5 ? std::numeric_limits<double>::infinity() : x[0]; };
  try {
    finite_diff(f, Vector{0.0, 0.5});
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(CheckGradients, FlagsWrongAnalyticAndSkipsKinks) {
  Vector theta{0.7, 0.0, -0.3};
  Vector analytic{2 * 0.7, 1.0, 0.0};  // d/dx of x0^2 + relu(x1) + relu(x2)
  const auto eval = [&] {
    Evaluation e;
    e.loss = theta[0] * theta[0] + std::max(theta[1], 0.0) + std::max(theta[2], 0.0);
    e.branches = {theta[1] > 0, theta[2] > 0};
    return e;
  };
  GradReport good = check_gradients(eval, {{"theta", theta, analytic}});
  EXPECT_EQ(good.checked(), 2u);
  EXPECT_EQ(good.skipped(), 1u);
  EXPECT_TRUE(good.passed());
  EXPECT_EQ(theta, (Vector{0.7, 0.0, -0.3}));

  analytic[0] = 1.5;
  const GradReport bad = check_gradients(eval, {{"theta", theta, analytic}});
  EXPECT_FALSE(bad.passed());
  EXPECT_NEAR(bad.max_rel_error(), relative_error(1.5, 1.4), 1e-6);
  ASSERT_NE(bad.worst(), nullptr);
  EXPECT_EQ(bad.worst()->parameter, "theta");

  good.merge(bad);
  EXPECT_EQ(good.entries.size(), 1u);
  EXPECT_FALSE(good.passed());
  EXPECT_EQ(good.checked(), 4u);
}

TEST(GradReport, CsvLayout) {
  GradReport r;
  r.entries.push_back({"layers.0.head", 0.5, 0.25, 1.0, 3, 0});
  std::ostringstream os;
  r.write_csv(os);
  EXPECT_EQ(os.str(), "parameter,analytic,numeric,rel_error\nlayers.0.head,0.5,0.25,1\n");
}

TEST(BlockGradients, AllBlocksAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    EXPECT_TRUE(check_wkv_block(seed).passed()) << seed;
    EXPECT_TRUE(check_time_mix_block(seed).passed()) << seed;
    EXPECT_TRUE(check_channel_mix_block(seed).passed()) << seed;
    for (MediumMode mode : {MediumMode::gate_literal, MediumMode::gated_pool})
      EXPECT_TRUE(check_medium_block(seed, mode).passed()) << seed;
    for (MappingMode mapping : {MappingMode::causal, MappingMode::paper_literal})
      EXPECT_TRUE(check_excited_mix_block(seed, mapping).passed()) << seed;
  }
}

TEST(BlockGradients, ReportsNameEveryInput) {
  const GradReport r = check_time_mix_block(1);
  std::vector<std::string> names;
  for (const auto& e : r.entries) names.push_back(e.parameter);
  EXPECT_NE(std::find(names.begin(), names.end(), "time_mix.input"), names.end());
  EXPECT_GT(r.checked(), 0u);
}

TEST(ModelGradients, BothVariantsAndModes) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (Variant v : {Variant::rwkv, Variant::rrwkv}) {
      const GradReport r = check_model(small_model(v), seed, 10);
      EXPECT_TRUE(r.passed()) << "seed " << seed << " worst " << r.worst()->parameter << " " << r.max_rel_error();
    }
    const GradReport pooled = check_model(small_model(Variant::rrwkv, MediumMode::gated_pool), seed, 10);
    EXPECT_TRUE(pooled.passed()) << seed;
  }
}

TEST(LongRangeProfile, MatchesIndependentFiniteDifference) {
  for (Variant v : {Variant::rwkv, Variant::rrwkv}) {
    const Model model = Model::init(small_model(v), 21);
    Rng rng(21);
    Matrix x0 = rng.normal_matrix(9, 4, 1.0);
    const Vector profile = long_range_profile(model, x0, 3);
    ASSERT_EQ(profile.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) {
      double norm2 = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        const double keep = x0(i, c);
        const double h = 1e-6;
        x0(i, c) = keep + h;
        const double up = last_row_ce(model, x0, 3);
        x0(i, c) = keep - h;
        const double down = last_row_ce(model, x0, 3);
        x0(i, c) = keep;
        const double g = (up - down) / (2 * h);
        norm2 += g * g;
      }
      EXPECT_NEAR(profile[i], std::sqrt(norm2), 1e-6 * std::max(1.0, profile[i])) << i;
      EXPECT_DOUBLE_EQ(long_range_probe(model, x0, i, 3), profile[i]);
    }
    EXPECT_GT(profile[0], 0.0);
    EXPECT_THROW(long_range_probe(model, x0, 9), ContractViolation);
  }
}
