#pragma once

#include <vector>

#include "rrwkv/rrwkv.hpp"

namespace rrwkv {

// Saved forward intermediates of one model evaluation, in execution order:
// embedding, each layer, the output norm and the head. backward() walks it in
// reverse; a tape is complete once the logits have been recorded.
struct GradTape {
  std::vector<int> ids;  // empty when the forward started from embeddings
  Matrix x0;             // embedded input, T x d
  std::vector<LayerTape> layers;
  LayerNormTape ln_out;
  Matrix head_input;     // LN_out(x_L)
  Matrix logits;
  bool complete = false;
};

}  // namespace rrwkv
