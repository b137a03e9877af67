#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <sstream>

#include "flatff/checkpoint.hpp"
#include "flatff/descriptor.hpp"
#include "flatff/errors.hpp"
#include "flatff/loss.hpp"
#include "flatff/mlp.hpp"
#include "flatff/model.hpp"
#include "test_util.hpp"

using namespace flatff;
using namespace flatff::testing;

namespace {

std::vector<TrainExample> small_dataset(std::int64_t n, std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_train = n;
  spec.n_val = 1;
  spec.n_atoms = 32;
  spec.sample_interval = 40;
  spec.burn_in_steps = 200;
  spec.seed = seed;
  return generate_dataset(spec, SimConfig{}, LjParams::truncated_shifted()).train;
}

/// Model with Glorot weights and random biases so no term vanishes.
NeuralForceField random_model(std::span<const TrainExample> data, std::uint64_t seed,
                              std::vector<std::size_t> hidden = {16, 16}) {
  Rng rng = make_stream(seed, "test-model");
  NeuralForceField m = make_initial_model(data, DescriptorConfig::uniform(), hidden, rng);
  ParamVector w = m.params();
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const MlpLayout& lay = m.layout();
  for (std::size_t l = 0; l < lay.layers(); ++l)
    for (std::size_t r = 0; r < lay.outputs(l); ++r) w[lay.bias_offset(l) + r] += u(rng);
  m.set_params(w);
  return m;
}

/// |a - b| <= rtol * max(|b|, floor) for every entry.
template <class A, class B>
void check_close(const A& a, const B& b, double rtol, double floor) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    INFO("index " << i << ": " << a[i] << " vs " << b[i]);
    CHECK(std::abs(a[i] - b[i]) <= rtol * std::max(std::abs(b[i]), floor));
  }
}

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out;
  for (const auto& x : v) out.insert(out.end(), x.e.begin(), x.e.end());
  return out;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Plain reverse-mode gradient of sum_i f(x_i) for a tanh MLP, written
/// independently of the library's weight-gradient routine.
std::vector<double> backprop_energy(const MlpLayout& lay, std::span<const double> w,
                                    const std::vector<std::vector<double>>& inputs) {
  std::vector<double> grad(lay.size(), 0.0);
  for (const auto& x : inputs) {
    std::vector<std::vector<double>> a{x};
    for (std::size_t l = 0; l < lay.layers(); ++l) {
      std::vector<double> z(lay.outputs(l));
      for (std::size_t r = 0; r < z.size(); ++r) {
        double s = w[lay.bias_offset(l) + r];
        for (std::size_t c = 0; c < lay.inputs(l); ++c) s += w[lay.weight_index(l, r, c)] * a[l][c];
        z[r] = l + 1 < lay.layers() ? std::tanh(s) : s;
      }
      a.push_back(z);
    }
    std::vector<double> delta{1.0};
    for (std::size_t l = lay.layers(); l-- > 0;) {
      std::vector<double> prev(lay.inputs(l), 0.0);
      for (std::size_t r = 0; r < lay.outputs(l); ++r) {
        grad[lay.bias_offset(l) + r] += delta[r];
        for (std::size_t c = 0; c < lay.inputs(l); ++c) {
          grad[lay.weight_index(l, r, c)] += delta[r] * a[l][c];
          prev[c] += delta[r] * w[lay.weight_index(l, r, c)];
        }
      }
      if (l > 0)
        for (std::size_t c = 0; c < prev.size(); ++c) prev[c] *= 1.0 - a[l][c] * a[l][c];
      delta = prev;
    }
  }
  return grad;
}

}  // namespace

TEST_CASE("smooth cutoff") {
  CHECK(smooth_cutoff(0.0, 2.5) == 1.0);
  CHECK(smooth_cutoff(1.25, 2.5) == doctest::Approx(0.5));
  CHECK(smooth_cutoff(2.5, 2.5) == 0.0);
  CHECK(smooth_cutoff(3.0, 2.5) == 0.0);
  CHECK(smooth_cutoff_derivative(2.5, 2.5) == 0.0);
  const double r = 1.7, h = 1e-6;
  CHECK(smooth_cutoff_derivative(r, 2.5) ==
        doctest::Approx((smooth_cutoff(r + h, 2.5) - smooth_cutoff(r - h, 2.5)) / (2 * h)).epsilon(1e-8));
}

TEST_CASE("uniform descriptor config") {
  const auto c = DescriptorConfig::uniform(8, 0.8, 2.5);
  REQUIRE(c.n_basis() == 8);
  CHECK(c.centers.front() == doctest::Approx(0.8));
  CHECK(c.centers.back() < 2.5);
  for (std::size_t k = 1; k < 8; ++k) CHECK(c.centers[k] > c.centers[k - 1]);
  CHECK(c.width == doctest::Approx(c.centers[1] - c.centers[0]));
  DescriptorConfig bad = c;
  bad.centers[3] = bad.centers[2];
  CHECK_THROWS(bad.validate());
}

TEST_CASE("describe: hand-evaluated cases") {
  const auto c = DescriptorConfig::uniform();
  auto one = [&](double r) {
    auto s = make_state({{3, 3, 3}, {3 + r, 3, 3}}, 8.0);
    return describe(s, 0, c, build_neighbor_table(s, c.r_max, 0.0));
  };
  SUBCASE("isolated atom") {
    auto s = make_state({{3, 3, 3}}, 8.0);
    for (double g : describe(s, 0, c, build_neighbor_table(s, c.r_max, 0.0))) CHECK(g == 0.0);
  }
  SUBCASE("neighbor at r_max") {
    for (double g : one(2.5)) CHECK(g == 0.0);
  }
  SUBCASE("neighbor on a center") {
    const std::size_t k = 3;
    const double r = c.centers[k];
    const auto g = one(r);
    const double fc = 0.5 * (std::cos(std::numbers::pi * r / 2.5) + 1.0);
    for (std::size_t j = 0; j < c.n_basis(); ++j) {
      const double d = r - c.centers[j];
      CHECK(g[j] == doctest::Approx(std::exp(-d * d / (2 * c.width * c.width)) * fc).epsilon(1e-14));
    }
    CHECK(g[k] == doctest::Approx(fc).epsilon(1e-14));
  }
}

TEST_CASE("radial basis derivative") {
  const auto c = DescriptorConfig::uniform();
  std::vector<double> phi(8), dphi(8), p(8), m(8), tmp(8);
  for (double r : {0.7, 1.12, 1.9, 2.45}) {
    radial_basis(c, r, phi.data(), dphi.data());
    radial_basis(c, r + 1e-6, p.data(), tmp.data());
    radial_basis(c, r - 1e-6, m.data(), tmp.data());
    for (std::size_t k = 0; k < 8; ++k)
      CHECK(dphi[k] == doctest::Approx((p[k] - m[k]) / 2e-6).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("descriptor invariances") {
  const auto c = DescriptorConfig::uniform();
  SystemState s = liquid_state(32, 5, 100);
  auto table = build_neighbor_table(s, c.r_max, 0.0);
  const auto base = compute_descriptors(s, c, table);
  SystemState moved = s;
  for (auto& x : moved.positions) x += Vec3(0.37, 1.1, -0.6);
  wrap_positions(moved);
  const auto shifted = compute_descriptors(moved, c, build_neighbor_table(moved, c.r_max, 0.0));
  check_close(shifted.values, base.values, 1e-12, 1e-3);
  // A 90 degree rotation about z maps the cubic box onto itself.
  SystemState rot = s;
  for (auto& x : rot.positions) x = Vec3(s.box_length - x[1], x[0], x[2]);
  wrap_positions(rot);
  const auto turned = compute_descriptors(rot, c, build_neighbor_table(rot, c.r_max, 0.0));
  check_close(turned.values, base.values, 1e-12, 1e-3);
}

TEST_CASE("mlp input gradient and initialisation") {
  MlpArchitecture arch{{5, 7, 3, 1}, "tanh"};
  const MlpLayout lay(arch);
  CHECK(lay.size() == 5 * 7 + 7 + 7 * 3 + 3 + 3 + 1);
  Rng rng = make_stream(1, "test-mlp");
  ParamVector w = init_params(lay, rng);
  for (std::size_t l = 0; l < lay.layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(lay.inputs(l) + lay.outputs(l)));
    for (std::size_t r = 0; r < lay.outputs(l); ++r) {
      CHECK(w[lay.bias_offset(l) + r] == 0.0);
      for (std::size_t col = 0; col < lay.inputs(l); ++col)
        CHECK(std::abs(w[lay.weight_index(l, r, col)]) <= bound);
    }
  }
  MlpWorkspace ws(lay);
  std::vector<double> x{0.3, -1.2, 0.5, 2.0, -0.1}, g(5);
  const double y = mlp_input_gradient(lay, w, x, g, ws);
  CHECK(y == mlp_forward(lay, w, x, ws));
  for (std::size_t k = 0; k < 5; ++k) {
    auto xp = x, xm = x;
    xp[k] += 1e-6;
    xm[k] -= 1e-6;
    CHECK(g[k] == doctest::Approx((mlp_forward(lay, w, xp, ws) - mlp_forward(lay, w, xm, ws)) / 2e-6).epsilon(1e-7));
  }
  CHECK_THROWS((MlpArchitecture{{5, 1}, "tanh"}.validate()));
  CHECK_THROWS((MlpArchitecture{{5, 4, 1}, "relu"}.validate()));
  CHECK_THROWS((MlpArchitecture{{5, 4, 2}, "tanh"}.validate()));
}

TEST_CASE("network forces match central differences") {
  const auto data = small_dataset(3, 2);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const NeuralForceField m = random_model(data, seed);
    SystemState s = liquid_state(32, seed + 10, 200);
    const auto r = evaluate_fresh(s, m);
    const auto fd = flatten(fd_forces(m, s, 1e-5));
    const auto f = flatten(r.forces);
    check_close(f, fd, 1e-5, 1e-2 * max_abs(fd));
  }
}

TEST_CASE("zero final layer gives bias times N and no force") {
  const auto data = small_dataset(2, 3);
  NeuralForceField m = random_model(data, 4);
  ParamVector w = m.params();
  const MlpLayout& lay = m.layout();
  const std::size_t last = lay.layers() - 1;
  for (std::size_t c = 0; c < lay.inputs(last); ++c) w[lay.weight_index(last, 0, c)] = 0.0;
  w[lay.bias_offset(last)] = -2.25;
  m.set_params(w);
  SystemState s = liquid_state(32, 6, 100);
  const auto r = evaluate_fresh(s, m);
  CHECK(r.energy == doctest::Approx(-2.25 * 32).epsilon(1e-14));
  CHECK(max_abs(r.forces) == 0.0);
}

TEST_CASE("energy invariances and extensivity") {
  const auto data = small_dataset(2, 4);
  const NeuralForceField m = random_model(data, 5);
  SystemState s = liquid_state(64, 7, 200);
  const auto base = evaluate_fresh(s, m);

  SystemState moved = s;
  for (auto& x : moved.positions) x += Vec3(-1.9, 0.2, 3.3);
  wrap_positions(moved);
  const auto t = evaluate_fresh(moved, m);
  CHECK(t.energy == doctest::Approx(base.energy).epsilon(1e-12));
  CHECK(max_abs_diff(t.forces, base.forces) < 1e-10);

  const auto big = evaluate_fresh(replicate(s, 2), m);
  CHECK(std::abs(big.energy - 8 * base.energy) <= 1e-8 * std::abs(8 * base.energy));
}

TEST_CASE("smooth across r_max") {
  const auto data = small_dataset(2, 5);
  const NeuralForceField m = random_model(data, 6);
  auto at = [&](double r) { return evaluate_fresh(make_state({{3, 4, 4}, {3 + r, 4, 4}}, 8.0), m); };
  const auto in = at(2.5 - 1e-6);
  const auto out = at(2.5 + 1e-6);
  const auto far = at(3.5);
  CHECK(out.energy == far.energy);
  CHECK(std::abs(in.energy - out.energy) < 1e-9);
  CHECK(max_abs(in.forces) < 1e-5);
  CHECK(max_abs(out.forces) == 0.0);
}

TEST_CASE("loss: analytic cases") {
  const auto data = small_dataset(2, 6);
  const NeuralForceField m = random_model(data, 7);
  const auto& w = m.params();

  // Labels equal to the model's own predictions.
  std::vector<TrainExample> exact = data;
  for (auto& ex : exact) {
    const auto r = evaluate_fresh(state_from_example(ex), m);
    ex.energy = r.energy;
    ex.forces = r.forces;
  }
  const LossValue zero = loss(exact, m, w);
  CHECK(zero.total == doctest::Approx(0.0).scale(1e-20));
  const auto g0 = loss_gradient(exact, m, w);
  CHECK(max_abs(g0) < 1e-8);

  std::vector<TrainExample> offset = exact;
  for (auto& ex : offset) ex.energy += 0.8;
  const LossValue lv = loss(offset, m, w, {1.0, 1.0});
  CHECK(lv.energy_term == doctest::Approx((0.8 / 32) * (0.8 / 32)).epsilon(1e-9));
  CHECK(lv.force_term == doctest::Approx(0.0).scale(1e-20));
  CHECK(lv.total == doctest::Approx(lv.energy_term).epsilon(1e-9));
}

TEST_CASE("loss: two-atom hand arithmetic") {
  const auto data = small_dataset(2, 7);
  NeuralForceField m = random_model(data, 8);
  ParamVector w = m.params();
  const MlpLayout& lay = m.layout();
  const std::size_t last = lay.layers() - 1;
  for (std::size_t c = 0; c < lay.inputs(last); ++c) w[lay.weight_index(last, 0, c)] = 0.0;
  w[lay.bias_offset(last)] = 0.5;  // E = 1.0, forces 0
  TrainExample ex;
  ex.positions = {{1, 1, 1}, {2, 1, 1}};
  ex.box_length = 8.0;
  ex.energy = -1.0;
  ex.forces = {{1, 0, -2}, {-1, 0, 2}};
  const std::vector<TrainExample> batch{ex};
  const LossValue lv = loss(batch, m, w, {2.0, 0.5});
  // energy: ((1 - (-1)) / 2)^2 = 1; force: (1 + 4 + 1 + 4) / 6
  CHECK(lv.energy_term == doctest::Approx(1.0));
  CHECK(lv.force_term == doctest::Approx(10.0 / 6.0));
  CHECK(lv.total == doctest::Approx(2.0 + 0.5 * 10.0 / 6.0));
  CHECK(lv.coefficients.energy == 2.0);
}

TEST_CASE("loss gradient matches central differences") {
  const auto data = small_dataset(4, 8);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const NeuralForceField m = random_model(data, 20 + seed, {8, 6});
    const std::span<const TrainExample> batch(data.data() + (seed - 1), 2);
    const ParamVector& w = m.params();
    const auto g = loss_gradient(batch, m, w);
    std::vector<double> fd(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      ParamVector p = w, q = w;
      p[k] += 1e-5;
      q[k] -= 1e-5;
      fd[k] = (loss(batch, m, p).total - loss(batch, m, q).total) / 2e-5;
    }
    check_close(g, fd, 1e-4, 1e-3 * max_abs(fd));
  }
}

TEST_CASE("energy-only gradient equals plain backpropagation") {
  const auto data = small_dataset(3, 9);
  const NeuralForceField m = random_model(data, 30);
  const LossCoefficients energy_only{1.0, 0.0};
  const auto g = loss_gradient(data, m, m.params(), energy_only);

  std::vector<double> expect(m.layout().size(), 0.0);
  const double nb = static_cast<double>(data.size());
  for (const auto& ex : data) {
    const SystemState s = state_from_example(ex);
    const auto ds = compute_descriptors(s, m.descriptors(),
                                        build_neighbor_table(s, m.descriptors().r_max, 0.0));
    std::vector<std::vector<double>> inputs(ds.n_atoms, std::vector<double>(ds.n_basis));
    for (std::size_t i = 0; i < ds.n_atoms; ++i) m.normalized_input(ds, i, inputs[i]);
    const double n = static_cast<double>(ex.size());
    const double e = evaluate_fresh(s, m).energy;
    const auto ge = backprop_energy(m.layout(), m.params(), inputs);
    for (std::size_t k = 0; k < expect.size(); ++k)
      expect[k] += 2.0 * (e - ex.energy) / (n * n) * ge[k] / nb;
  }
  check_close(g, expect, 1e-10, 1e-6 * max_abs(expect));
}

TEST_CASE("checkpoint round trip") {
  const auto data = small_dataset(2, 10);
  const NeuralForceField m = random_model(data, 40);
  TrainingMetadata meta;
  meta.optimizer = "sam";
  meta.rho = 0.005;
  meta.epochs = 12;
  meta.final_train_loss = 0.1 + 1e-17;
  meta.final_val_loss = 1.0 / 3.0;
  meta.best_val_loss = 0.3;
  meta.stop_reason = "converged";
  meta.seed = 99;
  std::stringstream buf;
  write_checkpoint(buf, m, meta);
  const std::string text = buf.str();
  const Checkpoint back = read_checkpoint(buf);
  CHECK(back.model.params() == m.params());
  CHECK(back.model.normalization().mean == m.normalization().mean);
  CHECK(back.model.normalization().scale == m.normalization().scale);
  CHECK(back.model.descriptors().centers == m.descriptors().centers);
  CHECK(back.model.architecture().layer_sizes == m.architecture().layer_sizes);
  CHECK(back.metadata.optimizer == "sam");
  CHECK(back.metadata.rho == 0.005);
  CHECK(back.metadata.final_val_loss == 1.0 / 3.0);
  CHECK(back.metadata.seed == 99);
  CHECK(back.metadata.force_loss_normalization == "per-component mean square");
  std::stringstream again;
  write_checkpoint(again, back.model, back.metadata);
  CHECK(again.str() == text);

  SystemState s = liquid_state(32, 3, 50);
  CHECK(evaluate_fresh(s, back.model).energy == evaluate_fresh(s, m).energy);

  std::istringstream broken(R"({"format":"flatff-model","version":42})");
  CHECK_THROWS(read_checkpoint(broken));
}

TEST_CASE("initial model bias is the mean per-atom energy") {
  const auto data = small_dataset(3, 11);
  Rng rng = make_stream(1, "init");
  const auto m = make_initial_model(data, DescriptorConfig::uniform(), {16, 16}, rng);
  double mean = 0.0;
  for (const auto& ex : data) mean += ex.energy / 32.0 / 3.0;
  CHECK(m.params()[m.layout().bias_offset(m.layout().layers() - 1)] == doctest::Approx(mean));
  for (std::size_t k = 0; k < 8; ++k) CHECK(m.normalization().scale[k] > 0.0);
}
