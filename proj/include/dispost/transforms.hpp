#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dispost/errors.hpp"
#include "dispost/numeric.hpp"

namespace dispost {

// How a block of unconstrained working-space reals maps to the model's
// natural parameter space.
enum class BlockKind {
  Real,      // identity
  Positive,  // exp
  Simplex,   // softmax with the last coordinate pinned to 0
};

struct ParameterBlock {
  std::string name;
  BlockKind kind = BlockKind::Real;
  std::size_t size = 0;  // constrained size; a simplex block has size - 1 free coordinates

  std::size_t free_size() const { return kind == BlockKind::Simplex ? size - 1 : size; }
};

class ParameterLayout {
 public:
  ParameterLayout() = default;
  explicit ParameterLayout(std::vector<ParameterBlock> blocks) : blocks_(std::move(blocks)) {
    for (const auto& b : blocks_) {
      if (b.kind == BlockKind::Simplex && b.size < 2) throw UsageError("simplex block needs size >= 2");
    }
  }

  void add(std::string name, BlockKind kind, std::size_t size) {
    if (kind == BlockKind::Simplex && size < 2) throw UsageError("simplex block needs size >= 2");
    blocks_.push_back({std::move(name), kind, size});
  }

  const std::vector<ParameterBlock>& blocks() const { return blocks_; }

  std::size_t unconstrained_dim() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.free_size();
    return n;
  }
  std::size_t constrained_dim() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size;
    return n;
  }

 private:
  std::vector<ParameterBlock> blocks_;
};

// Softmax over (u_0, ..., u_{K-2}, 0).
inline void softmax_pinned(std::span<const double> free, std::span<double> out) {
  if (out.size() != free.size() + 1) throw UsageError("softmax_pinned: output must be one longer than input");
  double max = 0.0;
  for (double u : free) max = std::max(max, u);
  double total = 0.0;
  for (std::size_t k = 0; k < free.size(); ++k) {
    out[k] = std::exp(free[k] - max);
    total += out[k];
  }
  out.back() = std::exp(-max);
  total += out.back();
  for (double& p : out) p /= total;
}

// Log of the softmax, computed without forming the probabilities first.
inline void log_softmax_pinned(std::span<const double> free, std::span<double> out) {
  if (out.size() != free.size() + 1) throw UsageError("log_softmax_pinned: output must be one longer than input");
  double max = 0.0;
  for (double u : free) max = std::max(max, u);
  double total = std::exp(-max);
  for (double u : free) total += std::exp(u - max);
  const double log_norm = max + std::log(total);
  for (std::size_t k = 0; k < free.size(); ++k) out[k] = free[k] - log_norm;
  out.back() = -log_norm;
}

// Inverse of softmax_pinned: u_k = log p_k - log p_{K-1}.
inline void simplex_to_free(std::span<const double> p, std::span<double> free) {
  if (free.size() + 1 != p.size()) throw UsageError("simplex_to_free: size mismatch");
  const double last = std::log(p.back());
  for (std::size_t k = 0; k < free.size(); ++k) free[k] = std::log(p[k]) - last;
}

// Natural-space view of a parameter point, one vector per layout block.
struct ConstrainedParameters {
  std::vector<std::vector<double>> blocks;

  const std::vector<double>& operator[](std::size_t i) const { return blocks[i]; }
};

inline ConstrainedParameters to_constrained(const ParameterLayout& layout, std::span<const double> theta) {
  if (theta.size() != layout.unconstrained_dim()) throw UsageError("to_constrained: dimension mismatch");
  ConstrainedParameters out;
  std::size_t offset = 0;
  for (const auto& block : layout.blocks()) {
    std::vector<double> values(block.size);
    auto free = theta.subspan(offset, block.free_size());
    switch (block.kind) {
      case BlockKind::Real:
        std::copy(free.begin(), free.end(), values.begin());
        break;
      case BlockKind::Positive:
        for (std::size_t k = 0; k < free.size(); ++k) values[k] = std::exp(free[k]);
        break;
      case BlockKind::Simplex:
        softmax_pinned(free, values);
        break;
    }
    offset += block.free_size();
    out.blocks.push_back(std::move(values));
  }
  return out;
}

inline std::vector<double> to_unconstrained(const ParameterLayout& layout, const ConstrainedParameters& params) {
  if (params.blocks.size() != layout.blocks().size()) throw UsageError("to_unconstrained: block count mismatch");
  std::vector<double> theta;
  theta.reserve(layout.unconstrained_dim());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& block = layout.blocks()[b];
    const auto& values = params.blocks[b];
    if (values.size() != block.size) throw UsageError("to_unconstrained: block '" + block.name + "' has wrong size");
    switch (block.kind) {
      case BlockKind::Real:
        theta.insert(theta.end(), values.begin(), values.end());
        break;
      case BlockKind::Positive:
        for (double v : values) {
          if (!(v > 0.0)) throw UsageError("to_unconstrained: positive block has non-positive entry");
          theta.push_back(std::log(v));
        }
        break;
      case BlockKind::Simplex: {
        std::vector<double> free(block.size - 1);
        simplex_to_free(values, free);
        theta.insert(theta.end(), free.begin(), free.end());
        break;
      }
    }
  }
  return theta;
}

// log |det d(constrained free coords)/d(unconstrained)| for a simplex block:
// the Jacobian of the pinned softmax has determinant prod_k p_k.
inline double log_jacobian_simplex(std::span<const double> log_p) {
  double out = 0.0;
  for (double lp : log_p) out += lp;
  return out;
}

// Dirichlet prior on a softmax-parameterized simplex, expressed as a density
// over the unconstrained coordinates (Jacobian included).
inline double log_dirichlet_unconstrained(std::span<const double> log_p, std::span<const double> concentration) {
  double total = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < log_p.size(); ++k) {
    total += concentration[k];
    out += concentration[k] * log_p[k] - std::lgamma(concentration[k]);
  }
  return out + std::lgamma(total);
}

inline double log_dirichlet_unconstrained(std::span<const double> log_p, double concentration) {
  double out = 0.0;
  for (double lp : log_p) out += concentration * lp;
  const double k = static_cast<double>(log_p.size());
  return out + std::lgamma(k * concentration) - k * std::lgamma(concentration);
}

}  // namespace dispost
