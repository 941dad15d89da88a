#pragma once

// Central-difference verification of the analytic backward passes, and the
// long-range gradient attenuation probe.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rrwkv/backward.hpp"
#include "rrwkv/rrwkv.hpp"

namespace rrwkv {

inline constexpr double kDefaultFdEps = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// (f(theta + eps e_i) - f(theta - eps e_i)) / 2 eps for every coordinate.
// Throws DomainError if f returns a non-finite value.
Vector finite_diff(const std::function<double(std::span<const double>)>& f, const Vector& theta,
                   double eps = kDefaultFdEps);

struct GradEntry {
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradReport {
  std::vector<GradEntry> entries;  // one per parameter tensor, worst coordinate

  double max_rel_error() const;
  const GradEntry* worst() const;
  std::size_t checked() const;
  std::size_t skipped() const;
  bool passed(double tol = kGradTolerance) const { return max_rel_error() < tol; }
  // Keeps the worse entry per parameter name.
  void merge(const GradReport& other);
  void write_csv(std::ostream& os) const;
};

// Objective value plus the discrete branch pattern (ReLU signs, max argmax)
// at the evaluated point. A perturbation that changes the pattern straddles a
// kink and is excluded from the comparison.
struct Evaluation {
  double loss = 0.0;
  std::vector<std::uint8_t> branches;
};

struct CheckTarget {
  std::string name;
  std::span<double> values;          // perturbed in place, restored afterwards
  std::span<const double> analytic;  // same length
};

GradReport check_gradients(const std::function<Evaluation()>& evaluate, const std::vector<CheckTarget>& targets,
                           double eps = kDefaultFdEps);

// Branch pattern of a recorded model evaluation.
std::vector<std::uint8_t> branch_signature(const GradTape& tape);

// Per-block checks on random instances. Each block's scalar objective is
// sum(Coef * output) for a fixed random Coef.
GradReport check_wkv_block(std::uint64_t seed, std::size_t T = 12, std::size_t d = 4);
GradReport check_time_mix_block(std::uint64_t seed, std::size_t T = 10, std::size_t d = 4);
GradReport check_channel_mix_block(std::uint64_t seed, std::size_t T = 8, std::size_t d = 4);
GradReport check_medium_block(std::uint64_t seed, MediumMode mode, std::size_t T = 12, std::size_t d = 4);
GradReport check_excited_mix_block(std::uint64_t seed, MappingMode mapping, std::size_t T = 12, std::size_t d = 4);

// Whole model: masked cross-entropy over every position with random targets.
// Checks every parameter tensor and the embedded inputs.
GradReport check_model(const ModelConfig& cfg, std::uint64_t seed, std::size_t T, double eps = kDefaultFdEps);

// L2 norm of d(loss at the final position)/d(x_i) for every input position i.
// The loss is the cross-entropy of the last logit row against `target`.
Vector long_range_profile(const Model& model, const Matrix& x0, int target = 0);
double long_range_probe(const Model& model, const Matrix& x0, std::size_t i, int target = 0);

}  // namespace rrwkv
