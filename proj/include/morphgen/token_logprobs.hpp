#pragma once

#include <string>
#include <vector>

#include "morphgen/error.hpp"

namespace morphgen {

// Per-token natural-log probabilities as reported by a backend.
struct TokenLogprobs {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::string backend;  // identity of the scoring model, recorded with fluency

  void check() const {
    if (tokens.size() != logprobs.size()) throw ValidationError("token/logprob length mismatch");
    for (double lp : logprobs) {
      if (!(lp <= 0.0)) throw ValidationError("log-probability above 0 or NaN");
    }
  }
};

}  // namespace morphgen
