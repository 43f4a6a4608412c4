#include "cbdsl/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cbdsl/kernels.hpp"

namespace cbdsl {

std::vector<std::size_t> ModelSpec::widths() const {
  std::vector<std::size_t> w{input_dim};
  if (kind == ModelKind::mlp) w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
  w.push_back(num_classes);
  return w;
}

std::size_t ModelSpec::parameter_count() const {
  const auto w = widths();
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) d += w[l + 1] * w[l] + w[l + 1];
  return d;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (kind == ModelKind::mlp) {
    if (hidden_dims.empty()) throw ConfigError("model: mlp needs at least one hidden layer");
    for (std::size_t h : hidden_dims)
      if (h == 0) throw ConfigError("model: hidden layer widths must be positive");
  }
}

ParameterVector init_parameters(const ModelSpec& spec, RngStream& rng, double scale) {
  ParameterVector w(spec.parameter_count());
  for (double& x : w.values) x = rng.uniform(-scale, scale);
  return w;
}

namespace {

class Network {
 public:
  Network(const ModelSpec& spec, const ParameterVector& w) : widths_(spec.widths()), w_(w.values) {
    if (w.size() != spec.parameter_count())
      throw std::invalid_argument("model: parameter dimension mismatch (got " + std::to_string(w.size()) +
                                  ", expected " + std::to_string(spec.parameter_count()) + ")");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(off);
      off += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    acts_.resize(widths_.size());
    for (std::size_t l = 0; l < widths_.size(); ++l) acts_[l].resize(widths_[l]);
  }

  std::size_t layers() const { return offsets_.size(); }
  std::size_t classes() const { return widths_.back(); }

  // Fills the activations; the last entry holds the logits.
  const std::vector<double>& forward(std::span<const double> x) {
    if (x.size() != widths_[0]) throw std::invalid_argument("model: feature dimension mismatch");
    std::copy(x.begin(), x.end(), acts_[0].begin());
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t in = widths_[l], out = widths_[l + 1];
      const double* W = w_.data() + offsets_[l];
      const double* b = W + out * in;
      const auto& a = acts_[l];
      auto& z = acts_[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
        z[o] = (l + 1 < layers() && s < 0.0) ? 0.0 : s;
      }
    }
    return acts_.back();
  }

  // Cross-entropy of the current logits; leaves softmax(z) - e_y in delta_.
  double output_loss(int y) {
    const auto& z = acts_.back();
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    delta_.resize(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) delta_[c] = std::exp(z[c] - lse);
    delta_[static_cast<std::size_t>(y)] -= 1.0;
    return lse - z[static_cast<std::size_t>(y)];
  }

  // Accumulates the gradient of the last output_loss() into grad.
  void backward(double* grad) {
    for (std::size_t l = layers(); l-- > 0;) {
      const std::size_t in = widths_[l], out = widths_[l + 1];
      const double* W = w_.data() + offsets_[l];
      double* gW = grad + offsets_[l];
      double* gb = gW + out * in;
      const auto& a = acts_[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta_[o];
        if (d == 0.0) continue;
        double* row = gW + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += d * a[i];
        gb[o] += d;
      }
      if (l == 0) break;
      next_.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta_[o];
        if (d == 0.0) continue;
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) next_[i] += row[i] * d;
      }
      for (std::size_t i = 0; i < in; ++i)
        if (a[i] <= 0.0) next_[i] = 0.0;
      delta_.swap(next_);
    }
  }

 private:
  std::vector<std::size_t> widths_;
  std::span<const double> w_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<double>> acts_;
  std::vector<double> delta_, next_;
};

void require_nonempty(const SampleView& samples, const char* what) {
  if (samples.size() == 0) throw std::invalid_argument(std::string(what) + ": empty sample set");
}

}  // namespace

LossAndGradient loss_and_gradient(const ModelSpec& spec, const ParameterVector& w,
                                  const SampleView& samples, Exec exec) {
  require_nonempty(samples, "gradient");
  Network probe(spec, w);  // validates dimensions before any parallel work
  const std::size_t D = w.size();
  std::vector<double> total;
  // Slot D carries the loss so one reduction serves both.
  kernels::reduce_blocks(samples.size(), D + 1, exec, total,
                         [&](std::size_t begin, std::size_t end, std::vector<double>& partial) {
                           Network net(spec, w);
                           for (std::size_t k = begin; k < end; ++k) {
                             net.forward(samples.row(k));
                             partial[D] += net.output_loss(samples.label(k));
                             net.backward(partial.data());
                           }
                         });
  const double n = static_cast<double>(samples.size());
  LossAndGradient out;
  out.loss = total[D] / n;
  total.resize(D);
  for (double& g : total) g /= n;
  out.gradient = ParameterVector(std::move(total));
  return out;
}

ParameterVector gradient(const ModelSpec& spec, const ParameterVector& w, const SampleView& samples,
                         Exec exec) {
  return loss_and_gradient(spec, w, samples, exec).gradient;
}

double loss(const ModelSpec& spec, const ParameterVector& w, const SampleView& samples, Exec exec) {
  require_nonempty(samples, "loss");
  Network probe(spec, w);
  std::vector<double> total;
  kernels::reduce_blocks(samples.size(), 1, exec, total,
                         [&](std::size_t begin, std::size_t end, std::vector<double>& partial) {
                           Network net(spec, w);
                           for (std::size_t k = begin; k < end; ++k) {
                             net.forward(samples.row(k));
                             partial[0] += net.output_loss(samples.label(k));
                           }
                         });
  return total[0] / static_cast<double>(samples.size());
}

std::vector<ParameterVector> class_gradients(const ModelSpec& spec, const ParameterVector& w,
                                             const SampleView& samples, Exec exec) {
  std::vector<std::vector<std::size_t>> by_class(spec.num_classes);
  for (std::size_t k = 0; k < samples.size(); ++k)
    by_class[static_cast<std::size_t>(samples.label(k))].push_back(samples.indices[k]);
  std::vector<ParameterVector> out(spec.num_classes);
  for (std::size_t c = 0; c < spec.num_classes; ++c)
    if (!by_class[c].empty()) out[c] = gradient(spec, w, {samples.data, by_class[c]}, exec);
  return out;
}

int predict(const ModelSpec& spec, const ParameterVector& w, std::span<const double> x) {
  Network net(spec, w);
  const auto& z = net.forward(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < z.size(); ++c)
    if (z[c] > z[best]) best = c;
  return static_cast<int>(best);
}

double accuracy(const ModelSpec& spec, const ParameterVector& w, const SampleView& samples, Exec exec) {
  require_nonempty(samples, "accuracy");
  Network probe(spec, w);
  std::vector<double> total;
  kernels::reduce_blocks(samples.size(), 1, exec, total,
                         [&](std::size_t begin, std::size_t end, std::vector<double>& partial) {
                           Network net(spec, w);
                           for (std::size_t k = begin; k < end; ++k) {
                             const auto& z = net.forward(samples.row(k));
                             std::size_t best = 0;
                             for (std::size_t c = 1; c < z.size(); ++c)
                               if (z[c] > z[best]) best = c;
                             if (static_cast<int>(best) == samples.label(k)) partial[0] += 1.0;
                           }
                         });
  return total[0] / static_cast<double>(samples.size());
}

}  // namespace cbdsl
