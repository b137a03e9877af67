#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flatff/rng.hpp"

namespace flatff {

/// Flat network weights; see MlpLayout for the index map.
using ParamVector = std::vector<double>;

/// Fully connected network: tanh on hidden layers, linear scalar output.
/// Only tanh is accepted; force matching needs second derivatives.
struct MlpArchitecture {
  std::vector<std::size_t> layer_sizes{8, 16, 16, 1};
  std::string activation = "tanh";

  void validate() const;
};

/// Layer l maps layer_sizes[l] inputs to layer_sizes[l+1] outputs. Its weight
/// matrix is stored row-major (output-major) followed by its bias vector.
class MlpLayout {
 public:
  explicit MlpLayout(const MlpArchitecture& arch);

  std::size_t layers() const { return sizes_.size() - 1; }
  std::size_t inputs(std::size_t l) const { return sizes_[l]; }
  std::size_t outputs(std::size_t l) const { return sizes_[l + 1]; }
  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const {
    return offsets_[l] + sizes_[l] * sizes_[l + 1];
  }
  std::size_t weight_index(std::size_t l, std::size_t row, std::size_t col) const {
    return offsets_[l] + row * sizes_[l] + col;
  }
  std::size_t size() const { return total_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t widest() const { return widest_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
  std::size_t widest_ = 0;
};

/// Glorot-uniform weights, zero biases.
ParamVector init_params(const MlpLayout& layout, Rng& rng);

/// Scratch buffers reused across atoms.
class MlpWorkspace {
 public:
  explicit MlpWorkspace(const MlpLayout& layout);

 private:
  friend double mlp_forward(const MlpLayout&, std::span<const double>,
                            std::span<const double>, MlpWorkspace&);
  friend double mlp_input_gradient(const MlpLayout&, std::span<const double>,
                                   std::span<const double>, std::span<double>,
                                   MlpWorkspace&);
  friend void mlp_weight_gradient(const MlpLayout&, std::span<const double>,
                                  std::span<const double>, std::span<const double>,
                                  double, std::span<double>, MlpWorkspace&);
  std::vector<std::vector<double>> act_;
  std::vector<std::vector<double>> tangent_;
  std::vector<std::vector<double>> pre_tangent_;
  std::vector<double> zbar_, zdbar_, abar_, adbar_, out_;
};

double mlp_forward(const MlpLayout& layout, std::span<const double> w,
                   std::span<const double> x, MlpWorkspace& ws);

/// Output value; fills `grad_x` with d(output)/dx.
double mlp_input_gradient(const MlpLayout& layout, std::span<const double> w,
                          std::span<const double> x, std::span<double> grad_x,
                          MlpWorkspace& ws);

/// grad += d/dw [ energy_weight * f(x; w) + (d f / dx)(x; w) . v ].
///
/// The second term is the weight derivative of a directional input
/// derivative, evaluated exactly by reverse-mode over a forward tangent pass.
void mlp_weight_gradient(const MlpLayout& layout, std::span<const double> w,
                         std::span<const double> x, std::span<const double> v,
                         double energy_weight, std::span<double> grad,
                         MlpWorkspace& ws);

}  // namespace flatff
