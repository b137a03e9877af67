#include "flatff/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flatff {

void MlpArchitecture::validate() const {
  if (layer_sizes.size() < 3) {
    throw std::invalid_argument("MLP needs an input, at least one hidden layer and an output");
  }
  for (std::size_t s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("MLP layer sizes must be >= 1");
  }
  if (layer_sizes.back() != 1) throw std::invalid_argument("MLP output must be scalar");
  if (activation != "tanh") {
    throw std::invalid_argument("activation '" + activation +
                                "' unsupported; force matching needs a twice "
                                "differentiable activation (tanh)");
  }
}

MlpLayout::MlpLayout(const MlpArchitecture& arch) : sizes_(arch.layer_sizes) {
  arch.validate();
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total_);
    total_ += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  widest_ = *std::max_element(sizes_.begin(), sizes_.end());
}

ParamVector init_params(const MlpLayout& layout, Rng& rng) {
  ParamVector w(layout.size(), 0.0);
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const double fan = static_cast<double>(layout.inputs(l) + layout.outputs(l));
    const double limit = std::sqrt(6.0 / fan);
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t begin = layout.weight_offset(l);
    const std::size_t end = layout.bias_offset(l);
    for (std::size_t q = begin; q < end; ++q) w[q] = dist(rng);
  }
  return w;
}

MlpWorkspace::MlpWorkspace(const MlpLayout& layout)
    : act_(layout.layers() + 1),
      tangent_(layout.layers() + 1),
      pre_tangent_(layout.layers()),
      zbar_(layout.widest()),
      zdbar_(layout.widest()),
      abar_(layout.widest()),
      adbar_(layout.widest()),
      out_(layout.widest()) {
  for (std::size_t l = 0; l <= layout.layers(); ++l) {
    const std::size_t n = l == 0 ? layout.inputs(0) : layout.outputs(l - 1);
    act_[l].resize(n);
    tangent_[l].resize(n);
    if (l < layout.layers()) pre_tangent_[l].resize(layout.outputs(l));
  }
}

namespace {

// out = W a + b for layer l.
void affine(const MlpLayout& layout, std::span<const double> w, std::size_t l,
            const double* a, double* out) {
  const std::size_t n_in = layout.inputs(l);
  const std::size_t n_out = layout.outputs(l);
  const double* W = w.data() + layout.weight_offset(l);
  const double* b = w.data() + layout.bias_offset(l);
  for (std::size_t o = 0; o < n_out; ++o) {
    double s = b[o];
    const double* row = W + o * n_in;
    for (std::size_t k = 0; k < n_in; ++k) s += row[k] * a[k];
    out[o] = s;
  }
}

// out = W a (no bias).
void linear(const MlpLayout& layout, std::span<const double> w, std::size_t l,
            const double* a, double* out) {
  const std::size_t n_in = layout.inputs(l);
  const std::size_t n_out = layout.outputs(l);
  const double* W = w.data() + layout.weight_offset(l);
  for (std::size_t o = 0; o < n_out; ++o) {
    double s = 0.0;
    const double* row = W + o * n_in;
    for (std::size_t k = 0; k < n_in; ++k) s += row[k] * a[k];
    out[o] = s;
  }
}

// out = W^T zbar.
void transpose_apply(const MlpLayout& layout, std::span<const double> w,
                     std::size_t l, const double* zbar, double* out) {
  const std::size_t n_in = layout.inputs(l);
  const std::size_t n_out = layout.outputs(l);
  const double* W = w.data() + layout.weight_offset(l);
  std::fill(out, out + n_in, 0.0);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double z = zbar[o];
    const double* row = W + o * n_in;
    for (std::size_t k = 0; k < n_in; ++k) out[k] += row[k] * z;
  }
}

void check_sizes(const MlpLayout& layout, std::span<const double> w,
                 std::span<const double> x) {
  if (w.size() != layout.size()) throw std::invalid_argument("weight vector length mismatch");
  if (x.size() != layout.input_size()) throw std::invalid_argument("MLP input length mismatch");
}

}  // namespace

double mlp_forward(const MlpLayout& layout, std::span<const double> w,
                   std::span<const double> x, MlpWorkspace& ws) {
  check_sizes(layout, w, x);
  std::copy(x.begin(), x.end(), ws.act_[0].begin());
  const std::size_t L = layout.layers();
  for (std::size_t l = 0; l < L; ++l) {
    double* out = l + 1 < L ? ws.act_[l + 1].data() : ws.out_.data();
    affine(layout, w, l, ws.act_[l].data(), out);
    if (l + 1 < L) {
      for (std::size_t o = 0; o < layout.outputs(l); ++o) out[o] = std::tanh(out[o]);
    }
  }
  return ws.out_[0];
}

double mlp_input_gradient(const MlpLayout& layout, std::span<const double> w,
                          std::span<const double> x, std::span<double> grad_x,
                          MlpWorkspace& ws) {
  const double e = mlp_forward(layout, w, x, ws);
  const std::size_t L = layout.layers();
  ws.zbar_[0] = 1.0;
  for (std::size_t l = L; l-- > 0;) {
    transpose_apply(layout, w, l, ws.zbar_.data(), ws.abar_.data());
    if (l == 0) break;
    const auto& a = ws.act_[l];
    for (std::size_t k = 0; k < a.size(); ++k) {
      ws.zbar_[k] = (1.0 - a[k] * a[k]) * ws.abar_[k];
    }
  }
  std::copy(ws.abar_.begin(), ws.abar_.begin() + static_cast<std::ptrdiff_t>(grad_x.size()),
            grad_x.begin());
  return e;
}

void mlp_weight_gradient(const MlpLayout& layout, std::span<const double> w,
                         std::span<const double> x, std::span<const double> v,
                         double energy_weight, std::span<double> grad,
                         MlpWorkspace& ws) {
  check_sizes(layout, w, x);
  const std::size_t L = layout.layers();
  std::copy(x.begin(), x.end(), ws.act_[0].begin());
  std::copy(v.begin(), v.end(), ws.tangent_[0].begin());

  // Forward: primal activations and their tangents along v.
  for (std::size_t l = 0; l + 1 < L; ++l) {
    double* a = ws.act_[l + 1].data();
    double* zd = ws.pre_tangent_[l].data();
    affine(layout, w, l, ws.act_[l].data(), a);
    linear(layout, w, l, ws.tangent_[l].data(), zd);
    for (std::size_t o = 0; o < layout.outputs(l); ++o) {
      a[o] = std::tanh(a[o]);
      ws.tangent_[l + 1][o] = (1.0 - a[o] * a[o]) * zd[o];
    }
  }

  // Reverse: adjoints of the pre-activations (zbar) and their tangents (zdbar).
  ws.zbar_[0] = energy_weight;
  ws.zdbar_[0] = 1.0;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t n_in = layout.inputs(l);
    const std::size_t n_out = layout.outputs(l);
    double* gW = grad.data() + layout.weight_offset(l);
    double* gb = grad.data() + layout.bias_offset(l);
    const double* a = ws.act_[l].data();
    const double* ad = ws.tangent_[l].data();
    for (std::size_t o = 0; o < n_out; ++o) {
      const double zb = ws.zbar_[o];
      const double zdb = ws.zdbar_[o];
      gb[o] += zb;
      double* row = gW + o * n_in;
      for (std::size_t k = 0; k < n_in; ++k) row[k] += zb * a[k] + zdb * ad[k];
    }
    if (l == 0) break;
    transpose_apply(layout, w, l, ws.zbar_.data(), ws.abar_.data());
    transpose_apply(layout, w, l, ws.zdbar_.data(), ws.adbar_.data());
    const double* zd = ws.pre_tangent_[l - 1].data();
    for (std::size_t k = 0; k < n_in; ++k) {
      const double g = 1.0 - a[k] * a[k];
      ws.zdbar_[k] = g * ws.adbar_[k];
      ws.zbar_[k] = g * ws.abar_[k] - 2.0 * a[k] * g * zd[k] * ws.adbar_[k];
    }
  }
}

}  // namespace flatff
