#include "occ/explain.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "occ/tape.hpp"

namespace occ {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor as_row(const Tensor& x) {
  if (x.rank() == 2) {
    require(x.rows() == 1, "explain: expected a single input");
    return x;
  }
  require(x.rank() == 1, "explain: expected a [d] or [1 x d] input");
  return Tensor({1, x.size()}, x.data());
}

}  // namespace

Attribution kde_input_gradient(const ModelBundle& model, const KdeModel& kde, const Tensor& x,
                               KdeScoreMode mode) {
  Tensor row = as_row(x);
  require(row.cols() == model.config.input_dim,
          "kde_input_gradient: input dimension does not match the encoder");
  require(kde.references.cols() == model.config.feature_dim(),
          "kde_input_gradient: KDE references do not match the encoder output dimension");

  Tape tape;
  NodeId input = tape.leaf(row, true);
  std::vector<NodeId> pn;
  ModelBundle& m = const_cast<ModelBundle&>(model);  // eval path, state untouched
  ModelGraph graph(tape, m);
  NodeId feat = graph.forward_f(input);
  const Tensor& fx = tape.value(feat);

  double log_score = score_kde(kde, fx)[0];
  std::vector<double> outer = kde_log_score_gradient(kde, fx.data().data(), fx.cols());
  double score = log_score;
  if (mode == KdeScoreMode::raw) {
    score = std::exp(log_score);
    for (double& g : outer) g *= score;  // d raw/df = raw * d log/df
  }

  NodeId composed = tape.inner_with(feat, Tensor({1, fx.cols()}, outer));
  auto grads = tape.backward(composed);

  Attribution attr;
  attr.values = Tensor(x.shape(), grads[input].data());
  attr.score_at_input = score;
  return attr;
}

ScoreFn kde_score_fn(const ModelBundle& model, const KdeModel& kde, KdeScoreMode mode) {
  return [&model, kde, mode](const Tensor& x) {
    Attribution a = kde_input_gradient(model, kde, x, mode);
    return ScoreGrad{a.score_at_input, a.values};
  };
}

Attribution integrated_gradients(const ScoreFn& score_fn, const Tensor& x,
                                 const Tensor& baseline, int steps) {
  require(steps >= 1, "integrated_gradients: steps must be >= 1");
  require(x.shape() == baseline.shape(), "integrated_gradients: baseline shape mismatch");

  Tensor sum_grad = Tensor::zeros(x.shape());
  for (int t = 1; t <= steps; ++t) {
    double c = (static_cast<double>(t) - 0.5) / static_cast<double>(steps);
    Tensor point(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      point[i] = baseline[i] + c * (x[i] - baseline[i]);
    ScoreGrad sg = score_fn(point);
    for (std::size_t i = 0; i < x.size(); ++i) sum_grad[i] += sg.grad[i];
  }

  Attribution attr;
  attr.values = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    attr.values[i] = (x[i] - baseline[i]) * sum_grad[i] / static_cast<double>(steps);
  attr.score_at_input = score_fn(x).value;
  attr.score_at_baseline = score_fn(baseline).value;
  return attr;
}

std::string ascii_heatmap(const Tensor& values, std::size_t height, std::size_t width) {
  require(values.size() == height * width, "ascii_heatmap: size does not match geometry");
  static const char* shades = " .:-=+*#%@";
  double lo = values[0], hi = values[0];
  for (std::size_t i = 0; i < values.size(); ++i) {
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  double span = hi - lo;
  std::ostringstream os;
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double v = values[i * width + j];
      int idx = span > 0.0 ? static_cast<int>((v - lo) / span * 9.999) : 0;
      os << shades[idx];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace occ
