#pragma once

#include <functional>
#include <string>

#include "occ/detectors.hpp"
#include "occ/network.hpp"
#include "occ/tensor.hpp"

namespace occ {

// Input-shaped attribution of a scalar normality score.
struct Attribution {
  Tensor values;
  double score_at_input = 0.0;
  double score_at_baseline = 0.0;  // integrated gradients only
};

enum class KdeScoreMode { log, raw };

// d score(KDE(f(x)))/dx: composes the analytic gradient of the KDE score
// with respect to f(x) with the encoder Jacobian in one reverse pass.
// Differentiates the log score by default; raw mode rescales by the density.
Attribution kde_input_gradient(const ModelBundle& model, const KdeModel& kde, const Tensor& x,
                               KdeScoreMode mode = KdeScoreMode::log);

struct ScoreGrad {
  double value = 0.0;
  Tensor grad;
};

using ScoreFn = std::function<ScoreGrad(const Tensor&)>;

// the end-to-end differentiable decision function score(KDE(f(.)))
ScoreFn kde_score_fn(const ModelBundle& model, const KdeModel& kde,
                     KdeScoreMode mode = KdeScoreMode::log);

// Midpoint-rule path integral from baseline to x:
// attr_i = (x_i - b_i) * mean_t grad_i(b + (t - 1/2)/steps * (x - b)).
// Exact for linear scores at any step count.
Attribution integrated_gradients(const ScoreFn& score_fn, const Tensor& x,
                                 const Tensor& baseline, int steps);

// quick terminal rendering of an attribution grid
std::string ascii_heatmap(const Tensor& values, std::size_t height, std::size_t width);

}  // namespace occ
