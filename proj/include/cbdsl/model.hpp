#pragma once

#include <cstddef>
#include <vector>

#include "cbdsl/core.hpp"
#include "cbdsl/data.hpp"

namespace cbdsl {

enum class ModelKind { softmax_regression, mlp };

// Fully connected classifier. softmax_regression has no hidden layers; mlp
// uses ReLU hidden layers. Parameters are flattened layer-major: for each
// layer its weight matrix (out x in, row-major) followed by its bias.
struct ModelSpec {
  ModelKind kind = ModelKind::softmax_regression;
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;

  std::size_t parameter_count() const;
  // Layer widths from input to output.
  std::vector<std::size_t> widths() const;
  void validate() const;
};

// Uniform in [-scale, scale] per entry.
ParameterVector init_parameters(const ModelSpec& spec, RngStream& rng, double scale = 0.05);

// Mean cross-entropy over the samples.
double loss(const ModelSpec& spec, const ParameterVector& w, const SampleView& samples,
            Exec exec = Exec::serial);

// Gradient of the mean cross-entropy.
ParameterVector gradient(const ModelSpec& spec, const ParameterVector& w, const SampleView& samples,
                         Exec exec = Exec::serial);

struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
};
LossAndGradient loss_and_gradient(const ModelSpec& spec, const ParameterVector& w,
                                  const SampleView& samples, Exec exec = Exec::serial);

// Mean gradient restricted to each class. Entry c is empty when the samples
// contain no example of class c.
std::vector<ParameterVector> class_gradients(const ModelSpec& spec, const ParameterVector& w,
                                             const SampleView& samples, Exec exec = Exec::serial);

// Argmax prediction; ties go to the lowest class index.
int predict(const ModelSpec& spec, const ParameterVector& w, std::span<const double> x);

double accuracy(const ModelSpec& spec, const ParameterVector& w, const SampleView& samples,
                Exec exec = Exec::serial);

}  // namespace cbdsl
