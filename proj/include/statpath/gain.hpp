#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "statpath/errors.hpp"

namespace statpath {

/// One candidate response with a discrete set of possible outcomes: value
/// received per outcome and the probability of each. Options marked
/// exhaustive must have probabilities summing to 1.
struct ResponseOption {
  std::string label;
  std::vector<double> values;
  std::vector<double> probabilities;
  bool exhaustive = true;
};

struct RankedGain {
  std::string label;
  double expected = 0.0;
};

/// Probability-weighted value per option, ranked best first. Outcomes are
/// assumed independent across options; ties are broken by lexicographic
/// label order.
inline std::vector<RankedGain> expected_gain(
    const std::vector<ResponseOption>& options) {
  std::vector<RankedGain> out;
  out.reserve(options.size());
  for (const auto& opt : options) {
    if (opt.values.size() != opt.probabilities.size())
      throw config_error("response '" + opt.label +
                         "' has mismatched value/probability lengths");
    double total_p = 0.0;
    double gain = 0.0;
    for (std::size_t i = 0; i < opt.values.size(); ++i) {
      double p = opt.probabilities[i];
      if (!(p >= 0.0))
        throw validation_error("response '" + opt.label +
                               "' has a negative outcome probability");
      total_p += p;
      gain += opt.values[i] * p;
    }
    if (opt.exhaustive && std::abs(total_p - 1.0) > 1e-9)
      throw validation_error("response '" + opt.label +
                             "' declares exhaustive outcomes but "
                             "probabilities sum to " +
                             std::to_string(total_p));
    out.push_back({opt.label, gain});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedGain& a, const RankedGain& b) {
                     if (a.expected != b.expected)
                       return a.expected > b.expected;
                     return a.label < b.label;
                   });
  return out;
}

}  // namespace statpath
