// Acceptance checks. One line per criterion: "criterion K: PASS|FAIL|SKIP ...".
//
//   acceptance                 criteria 1-6, 8 (controls) and 9
//   acceptance --slow          adds the multi-seed SAM vs Adam comparison (7)
//                              and the outlier-shape part of 8
//   acceptance --workdir DIR   where CLI runs and slow-suite tables are written

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flatff/config.hpp"
#include "flatff/errors.hpp"
#include "flatff/fidelity.hpp"
#include "flatff/loss.hpp"
#include "flatff/optim.hpp"
#include "flatff/pardomain.hpp"
#include "flatff/probes.hpp"
#include "flatff/trainer.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace flatff;
using namespace flatff::testing;

namespace {

// ---- pinned tolerances -------------------------------------------------------

constexpr int kGradientInstances = 10;
constexpr double kForceRtol = 1e-5;
constexpr double kGradientRtol = 1e-4;
constexpr double kFdFloor = 1e-3;  // relative errors use max(|b|, floor * max|b|)
constexpr double kFdStep = 1e-5;

constexpr std::int64_t kNveSteps = 10'000;
constexpr double kNveDriftTol = 1e-4;

constexpr std::int64_t kSharpnessSamples = 1000;
constexpr double kSharpnessLow = 0.9;
constexpr double kSharpnessHigh = 1.0;

constexpr double kBetaTrue = 0.29;
constexpr double kExactBetaTol = 1e-9;
constexpr int kCoverageTrials = 100;
constexpr int kCoverageRequired = 95;
constexpr int kCalibrationTrials = 10'000;

constexpr int kParallelConfigs = 20;
constexpr double kParallelTol = 1e-12;

constexpr std::int64_t kControlCap = 10'000;  // NVE steps
constexpr int kControlSeeds = 5;

// Multi-seed comparison.
constexpr int kTrainSeeds = 10;
constexpr int kSharperRequired = 8;
constexpr double kProbeRho = 0.05;
constexpr std::int64_t kSlowNveCap = 100'000;
const std::vector<std::int64_t> kSlowSizes{64, 256, 1024};
const std::vector<double> kSweepGrid{0.001, 0.005, 0.025};
constexpr int kSweepSeeds = 4;

// ---- reporting ----------------------------------------------------------------

struct Outcome {
  enum Status { pass, fail, skip } status = fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Outcome::pass : Outcome::fail, std::move(detail)};
}

std::string fmt(double x, int digits = 3) {
  std::ostringstream s;
  s << std::setprecision(digits) << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void log(const std::string& message) { std::cerr << "  [" << message << "]\n"; }

// ---- helpers ------------------------------------------------------------------

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out;
  for (const Vec3& x : v) out.insert(out.end(), {x[0], x[1], x[2]});
  return out;
}

/// max_k |a_k - b_k| / max(|b_k|, kFdFloor * max|b|)
double worst_relative(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0;
  for (double x : b) scale = std::max(scale, std::abs(x));
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a[k] - b[k]) / std::max(std::abs(b[k]), kFdFloor * scale));
  return worst;
}

Dataset small_dataset(std::int64_t n_train, std::int64_t n_val, std::int64_t n_atoms,
                      std::uint64_t seed) {
  DatasetSpec spec;
  spec.n_train = n_train;
  spec.n_val = n_val;
  spec.n_atoms = n_atoms;
  spec.burn_in_steps = 200;
  spec.sample_interval = 25;
  spec.seed = seed;
  return generate_dataset(spec, SimConfig{}, LjParams::truncated_shifted());
}

NeuralForceField perturbed_model(std::span<const TrainExample> data, std::uint64_t seed,
                                 std::vector<std::size_t> hidden) {
  Rng rng = make_stream(seed, "acceptance-model");
  NeuralForceField m = make_initial_model(data, DescriptorConfig::uniform(), hidden, rng);
  ParamVector w = m.params();
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const MlpLayout& lay = m.layout();
  for (std::size_t l = 0; l < lay.layers(); ++l)
    for (std::size_t r = 0; r < lay.outputs(l); ++r) w[lay.bias_offset(l) + r] += u(rng);
  m.set_params(w);
  return m;
}

std::shared_ptr<const Potential> oracle() {
  return std::make_shared<LennardJones>(LjParams::truncated_shifted());
}

// ---- criteria -------------------------------------------------------------------

Outcome gradient_exactness() {
  const Dataset data = small_dataset(kGradientInstances + 1, 1, 32, 11);
  double worst_force = 0.0, worst_grad = 0.0;
  for (int k = 0; k < kGradientInstances; ++k) {
    const auto seed = static_cast<std::uint64_t>(k + 1);
    const NeuralForceField m = perturbed_model(data.train, seed, {16, 16});
    const SystemState s = liquid_state(32, 100 + seed, 200);
    worst_force = std::max(worst_force, worst_relative(flatten(evaluate_fresh(s, m).forces),
                                                       flatten(fd_forces(m, s, kFdStep))));

    const NeuralForceField g = perturbed_model(data.train, 50 + seed, {8, 6});
    const std::span<const TrainExample> batch(data.train.data() + k, 2);
    const ParamVector& w = g.params();
    const auto analytic = loss_gradient(batch, g, w);
    std::vector<double> fd(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
      ParamVector p = w, q = w;
      p[j] += kFdStep;
      q[j] -= kFdStep;
      fd[j] = (loss(batch, g, p).total - loss(batch, g, q).total) / (2 * kFdStep);
    }
    worst_grad = std::max(worst_grad, worst_relative(analytic, fd));
  }
  return verdict(worst_force <= kForceRtol && worst_grad <= kGradientRtol,
                 std::to_string(kGradientInstances) + " instances; worst force rel err " +
                     fmt(worst_force) + " (rtol " + fmt(kForceRtol) +
                     "), worst loss-gradient rel err " + fmt(worst_grad) + " (rtol " +
                     fmt(kGradientRtol) + ")");
}

Outcome nve_conservation() {
  auto lj = oracle();
  NeighborListForces provider(lj, 0.3);
  Frame f = make_frame(liquid_state(64, 7), provider);
  const double e0 = kinetic_energy(f.state) + f.forces.energy;
  double worst = 0.0;
  for (std::int64_t k = 0; k < kNveSteps; ++k) {
    step_nve(f, provider, 0.002);
    worst = std::max(worst, std::abs(kinetic_energy(f.state) + f.forces.energy - e0) / std::abs(e0));
  }
  return verdict(worst < kNveDriftTol, "64-atom LJ liquid, " + std::to_string(kNveSteps) +
                                           " steps at dt 0.002: max |dE/E0| " + fmt(worst) +
                                           " (tol " + fmt(kNveDriftTol) + ")");
}

Outcome sam_correctness() {
  std::vector<std::vector<double>> calls;
  GradientFn quad = [&](std::span<const double> w, std::vector<double>& g) {
    calls.emplace_back(w.begin(), w.end());
    g.assign(w.begin(), w.end());
    LossValue v;
    for (double x : w) v.total += 0.5 * x * x;
    return v;
  };
  auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  };

  // rho = 0 is Adam, bitwise, over 50 steps.
  bool bitwise = true;
  ParamVector ws{0.3, -1.7, 2.2, 1e-3}, wa = ws;
  AdamState ss = AdamState::zeros(4), sa = ss;
  for (int k = 0; k < 50; ++k) {
    sam_update(ws, quad, ss, SamConfig{0.0});
    std::vector<double> g;
    quad(wa, g);
    adam_update(wa, g, sa);
    bitwise = bitwise && same(ws, wa) && same(ss.m, sa.m) && same(ss.v, sa.v);
  }

  // w = (3, 4), rho = 0.5: eps = rho g / |g| = (0.3, 0.4), g2 = grad at (3.3, 4.4).
  calls.clear();
  const ParamVector w{3.0, 4.0};
  const AdamState fresh = AdamState::zeros(2);
  auto [w_sam, s_sam] = sam_step(w, quad, fresh, SamConfig{0.5});
  const bool two_calls = calls.size() == 2;
  const bool perturbed = two_calls && std::abs(calls[1][0] - 3.3) < 1e-15 &&
                         std::abs(calls[1][1] - 4.4) < 1e-15;
  auto [w_ref, s_ref] = adam_step(w, std::vector<double>{3.3, 4.4}, fresh);
  const bool descent = std::abs(w_sam[0] - w_ref[0]) < 1e-15 && std::abs(w_sam[1] - w_ref[1]) < 1e-15;

  calls.clear();
  ParamVector wm{1.0, 2.0};
  AdamState sm = AdamState::zeros(2);
  for (int k = 0; k < 10; ++k) sam_update(wm, quad, sm, SamConfig{0.05});
  const bool budget = calls.size() == 20;

  return verdict(bitwise && two_calls && perturbed && descent && budget,
                 std::string("rho=0 bitwise Adam over 50 steps: ") + (bitwise ? "yes" : "no") +
                     "; hand example perturbed point (3.3, 4.4): " + (perturbed ? "yes" : "no") +
                     "; descent uses g2: " + (descent ? "yes" : "no") +
                     "; gradient calls per step: " + std::to_string(calls.size() / 10));
}

Outcome sharpness_estimator() {
  const double rho = 0.05;
  double lo = 1e300, hi = 0.0;
  int cases = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    for (std::size_t dim = 1; dim <= 4; ++dim)
      for (bool isotropic : {true, false}) {
        if (!isotropic && dim == 1) continue;
        // Anisotropic variant: lambda_max = 2 on axis 0, smaller elsewhere.
        std::vector<double> lambda(dim, isotropic ? 2.0 : 0.0);
        lambda[0] = 2.0;
        if (!isotropic && dim > 2) lambda[1] = 0.5;
        LossFn fn = [lambda](std::span<const double> x) {
          double s = 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) s += 0.5 * lambda[k] * x[k] * x[k];
          return s;
        };
        const std::vector<double> w(dim, 0.0);
        const auto est = measure_sharpness(fn, w, rho, kSharpnessSamples, seed);
        const double ratio = est.value / (0.5 * 2.0 * rho * rho);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        ++cases;
      }
  return verdict(lo >= kSharpnessLow && hi <= kSharpnessHigh * (1 + 1e-12),
                 std::to_string(cases) + " quadratics (dim 1-4, 10 seeds, " +
                     std::to_string(kSharpnessSamples) + " samples): estimate / (lambda rho^2 / 2) in [" +
                     fmt(lo, 6) + ", " + fmt(hi, 6) + "]");
}

Outcome power_law_fit() {
  std::vector<FitPoint> exact;
  for (double n : {64.0, 128.0, 256.0, 512.0, 1024.0}) exact.push_back({n, 1e5 * std::pow(n, -kBetaTrue)});
  const double exact_err = std::abs(fit_power_law(exact).beta - kBetaTrue);

  // ln t = ln alpha - beta ln N + eps, eps ~ N(0, 0.2) at N = 32 k, k = 1..100.
  auto coverage = [](Rng rng, int trials) {
    std::normal_distribution<double> noise(0.0, 0.2);
    int covered = 0;
    for (int trial = 0; trial < trials; ++trial) {
      std::vector<FitPoint> pts;
      for (int k = 1; k <= 100; ++k) {
        const double n = 32.0 * k;
        pts.push_back({n, 1e5 * std::pow(n, -kBetaTrue) * std::exp(noise(rng))});
      }
      const FitResult f = fit_power_law(pts);
      if (std::abs(f.beta - kBetaTrue) <= 2.0 * f.beta_stderr) ++covered;
    }
    return covered;
  };
  const int covered = coverage(make_stream(1, "acceptance-mc"), kCoverageTrials);
  const int calibration = coverage(make_stream(2, "acceptance-mc"), kCalibrationTrials);
  return verdict(exact_err < kExactBetaTol && covered >= kCoverageRequired,
                 "exact |d beta| " + fmt(exact_err) + " (tol " + fmt(kExactBetaTol) + "); " +
                     std::to_string(covered) + "/" + std::to_string(kCoverageTrials) +
                     " noisy trials within 2 stderr (need " + std::to_string(kCoverageRequired) +
                     "); long-run rate " + fmt(100.0 * calibration / kCalibrationTrials, 4) +
                     "% over " + std::to_string(kCalibrationTrials) + " trials");
}

/// Pairs (i < j, shift) within `range` as seen from owned atoms and ghosts.
std::set<PairKey> ghost_pairs(const Decomposition& d, const SystemState& s, double range) {
  const auto ghosts = exchange_ghosts(d, s);
  std::set<PairKey> out;
  const double r2 = range * range;
  for (int dom = 0; dom < d.grid.count(); ++dom) {
    struct Candidate {
      std::uint32_t index;
      ImageCount shift;
      Vec3 position;
    };
    std::vector<Candidate> seen;
    for (std::uint32_t j : d.owned[dom]) seen.push_back({j, {}, s.positions[j]});
    for (const GhostAtom& g : ghosts[dom]) seen.push_back({g.index, g.shift, g.position});
    for (std::uint32_t i : d.owned[dom])
      for (const Candidate& c : seen) {
        if (c.index == i) continue;
        const Vec3 dx = c.position - s.positions[i];
        if (dot(dx, dx) > r2) continue;
        if (i < c.index) {
          out.emplace(i, c.index, c.shift[0], c.shift[1], c.shift[2]);
        } else {
          out.emplace(c.index, i, -c.shift[0], -c.shift[1], -c.shift[2]);
        }
      }
  }
  return out;
}

Outcome parallel_equivalence() {
  auto lj = oracle();
  NeighborListForces provider(lj, 0.3);
  Frame f = make_frame(liquid_state(864, 31, 150), provider);
  std::vector<SystemState> configs;
  for (int k = 0; k < kParallelConfigs; ++k) {
    for (int s = 0; s < 10; ++s) step_nve(f, provider, 0.002);
    configs.push_back(f.state);
  }
  const Dataset data = small_dataset(4, 1, 32, 3);
  auto net = std::make_shared<NeuralForceField>(perturbed_model(data.train, 9, {16, 16}));

  double worst = 0.0;
  bool serial_bitwise = true;
  for (const std::shared_ptr<const Potential>& pot : {lj, std::shared_ptr<const Potential>(net)}) {
    for (const SystemState& s : configs) {
      const ForceResult ref = evaluate_fresh(s, *pot);
      const double scale = std::max(1.0, max_abs(ref.forces));
      for (int p : {1, 2, 4, 8}) {
        const ForceResult r = parallel_forces(pot, s, dims_for_workers(p));
        worst = std::max(worst, max_abs_diff(r.forces, ref.forces) / scale);
        if (p == 1) serial_bitwise = serial_bitwise && max_abs_diff(r.forces, ref.forces) == 0.0;
      }
    }
  }

  int pair_sets_equal = 0, pair_sets = 0;
  for (int k = 0; k < kParallelConfigs; k += 5)
    for (int p : {2, 4, 8}) {
      const Decomposition d = decompose(configs[k], dims_for_workers(p), 2.5, 0.0);
      ++pair_sets;
      if (ghost_pairs(d, configs[k], 2.5) == brute_force_pairs(configs[k], 2.5)) ++pair_sets_equal;
    }

  return verdict(worst <= kParallelTol && pair_sets_equal == pair_sets,
                 std::to_string(kParallelConfigs) + " configs x {LJ, network} x P in {1,2,4,8}: worst |dF| / max(1, max|F|) " +
                     fmt(worst) + " (tol " + fmt(kParallelTol) + "), P=1 bitwise " +
                     (serial_bitwise ? "yes" : "no") + "; ghost pair set == global pair set in " +
                     std::to_string(pair_sets_equal) + "/" + std::to_string(pair_sets) + " cases");
}

struct ControlResult {
  bool oracle_censored = true;
  bool random_fail = true;
  std::string detail;
};

ControlResult harness_controls() {
  ControlResult out;
  int oracle_runs = 0, oracle_censored = 0;
  for (double temperature : {preset("desk").ttf.temperature, preset("fragile").ttf.temperature}) {
    TtfProtocol p;
    p.n_atoms = 64;
    p.temperature = temperature;
    p.max_steps = p.nvt_steps + kControlCap;
    for (int s = 1; s <= kControlSeeds; ++s) {
      const TtfRecord r = run_ttf(oracle(), p, ForceBaseline{2.0, 1.0, "fixed"}, s);
      ++oracle_runs;
      if (r.failure_reason == FailureReason::censored) ++oracle_censored;
    }
  }
  out.oracle_censored = oracle_censored == oracle_runs;

  const Dataset data = small_dataset(8, 2, 64, 5);
  int random_failed = 0;
  std::int64_t longest = 0;
  for (int s = 1; s <= kControlSeeds; ++s) {
    Rng rng = make_stream(s, "init");
    auto model = std::make_shared<NeuralForceField>(
        make_initial_model(data.train, DescriptorConfig::uniform(), {16, 16}, rng));
    TtfProtocol p;
    p.n_atoms = 64;
    p.max_steps = p.nvt_steps + kControlCap;
    const TtfRecord r = run_ttf(model, p, compute_force_baseline(data.train), s);
    if (r.failure_reason != FailureReason::censored) ++random_failed;
    longest = std::max(longest, r.steps_survived);
  }
  out.random_fail = random_failed == kControlSeeds;
  out.detail = "oracle censored in " + std::to_string(oracle_censored) + "/" +
               std::to_string(oracle_runs) + " runs (T " + fmt(preset("desk").ttf.temperature) +
               " and " + fmt(preset("fragile").ttf.temperature) + ", cap " +
               std::to_string(kControlCap) + "); random-weight models failed in " +
               std::to_string(random_failed) + "/" + std::to_string(kControlSeeds) +
               " runs, longest " + std::to_string(longest) + " steps";
  return out;
}

// ---- slow suite -----------------------------------------------------------------

struct SlowResult {
  Outcome comparison;
  int failing_runs = 0;
  int rising_runs = 0;
};

LossFn validation_loss(const NeuralForceField& model, const Dataset& data,
                       std::vector<PreparedExample>& prepared,
                       std::unique_ptr<ForceFieldLoss>& holder) {
  holder = std::make_unique<ForceFieldLoss>(model, LossCoefficients{});
  prepared = holder->prepare(std::span<const TrainExample>(data.val));
  return [&](std::span<const double> w) {
    return holder->loss(std::span<const PreparedExample>(prepared), w).total;
  };
}

SlowResult sam_vs_adam(const fs::path& workdir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(workdir);
  const ExperimentConfig cfg = preset("fragile");
  const Dataset data = generate_dataset(cfg.dataset_spec(), cfg.system.sim, cfg.oracle);
  const DescriptorConfig desc = cfg.descriptor_config();
  const ForceBaseline baseline = compute_force_baseline(std::span<const TrainExample>(data.train),
                                                        cfg.ttf.baseline_measure);
  log("dataset ready, " + fmt(seconds_since(t0), 4) + " s");

  TtfProtocol protocol = cfg.ttf_protocol();
  protocol.max_steps = protocol.nvt_steps + kSlowNveCap;

  // Coarse rho sweep at the middle size, with run seeds disjoint from the evaluation.
  TtfProtocol sweep_protocol = protocol;
  sweep_protocol.n_atoms = kSlowSizes[1];
  sweep_protocol.seeds.clear();
  for (int s = 1; s <= kSweepSeeds; ++s) sweep_protocol.seeds.push_back(1000 + s);
  const SweepResult sweep =
      rho_sweep(data, desc, cfg.model.hidden, cfg.train, kSweepGrid, sweep_protocol, cfg.seed);
  double rho = 0.0, best = -1.0;
  {
    std::ofstream out(workdir / "rho_sweep.csv");
    out << "rho,mean_steps,failed,censored,error\n";
    for (const SweepRow& r : sweep.rows) {
      out << r.rho << ',' << r.mean_steps << ',' << r.failed << ',' << r.censored << ',' << r.error << '\n';
      if (r.error.empty() && r.mean_steps > best) {
        best = r.mean_steps;
        rho = r.rho;
      }
    }
  }
  log("sweep done, rho " + fmt(rho) + ", " + fmt(seconds_since(t0), 4) + " s");

  std::vector<TtfRecord> adam_records, sam_records;
  std::vector<double> adam_sharp, sam_sharp;
  std::ofstream sharp_csv(workdir / "sharpness.csv");
  sharp_csv << "train_seed,optimizer,rho,sharpness,best_val_loss,epochs\n" << std::setprecision(10);
  for (int k = 1; k <= kTrainSeeds; ++k) {
    for (bool use_sam : {false, true}) {
      TrainConfig tc = cfg.train;
      tc.optimizer = use_sam ? OptimizerKind::sam : OptimizerKind::adam;
      tc.rho = use_sam ? rho : 0.0;
      const auto trained = train_force_field(data, desc, cfg.model.hidden, tc, k);
      std::vector<PreparedExample> prepared;
      std::unique_ptr<ForceFieldLoss> holder;
      const LossFn fn = validation_loss(trained.model, data, prepared, holder);
      const double sharp =
          measure_sharpness(fn, trained.model.params(), kProbeRho, kSharpnessSamples, 1).value;
      (use_sam ? sam_sharp : adam_sharp).push_back(sharp);
      sharp_csv << k << ',' << to_string(tc.optimizer) << ',' << tc.rho << ',' << sharp << ','
                << trained.report.best_val_loss << ',' << trained.report.epochs_run << '\n';

      auto model = std::make_shared<NeuralForceField>(trained.model);
      TtfProtocol p = protocol;
      p.seeds = {static_cast<std::uint64_t>(k)};
      for (const TtfRecord& r : run_ttf_series(model, p, kSlowSizes, baseline, cfg.ttf.workers))
        (use_sam ? sam_records : adam_records).push_back(r);
      log("seed " + std::to_string(k) + " " + to_string(tc.optimizer) + " done, " +
          fmt(seconds_since(t0), 4) + " s");
    }
  }
  {
    std::ofstream out(workdir / "ttf.csv");
    write_ttf_csv(out, adam_records, "adam", 0.0);
    write_ttf_csv(out, sam_records, "sam", rho, false);
  }

  // (a) sharper baseline in >= 8 of 10 training seeds.
  int flatter = 0;
  for (int k = 0; k < kTrainSeeds; ++k) flatter += sam_sharp[k] < adam_sharp[k];

  // (b) mean t_failure per size (censored runs count at the cap).
  auto means = [](const std::vector<TtfRecord>& recs) {
    std::map<std::int64_t, std::pair<double, int>> acc;
    for (const TtfRecord& r : recs) {
      acc[r.n_atoms].first += static_cast<double>(r.steps_survived);
      acc[r.n_atoms].second += 1;
    }
    std::map<std::int64_t, double> out;
    for (const auto& [n, v] : acc) out[n] = v.first / v.second;
    return out;
  };
  const auto adam_mean = means(adam_records), sam_mean = means(sam_records);
  bool longer = true;
  std::string per_size;
  for (std::int64_t n : kSlowSizes) {
    longer = longer && sam_mean.at(n) >= adam_mean.at(n);
    per_size += " N" + std::to_string(n) + " " + fmt(sam_mean.at(n), 5) + " vs " + fmt(adam_mean.at(n), 5) + ";";
  }

  // (c) fitted exponents.
  std::string beta_text;
  bool flatter_scaling = false;
  try {
    const FitResult fa = fit_power_law(adam_records);
    const FitResult fs_ = fit_power_law(sam_records);
    flatter_scaling = fs_.beta <= fa.beta;
    beta_text = "beta sam " + fmt(fs_.beta) + " +- " + fmt(fs_.beta_stderr, 2) + " vs adam " +
                fmt(fa.beta) + " +- " + fmt(fa.beta_stderr, 2);
  } catch (const FitError& e) {
    beta_text = std::string("fit failed: ") + e.what();
  }

  SlowResult result;
  result.comparison = verdict(flatter >= kSharperRequired && longer && flatter_scaling,
                              "rho* " + fmt(rho) + "; (a) SAM flatter in " + std::to_string(flatter) +
                                  "/" + std::to_string(kTrainSeeds) + " seeds (need " +
                                  std::to_string(kSharperRequired) + "); (b) mean steps sam vs adam:" +
                                  per_size + " " + (longer ? "ok" : "not ok") + "; (c) " + beta_text +
                                  "; tables in " + workdir.string());

  for (const auto* recs : {&adam_records, &sam_records})
    for (const TtfRecord& r : *recs) {
      if (r.failure_reason == FailureReason::censored) continue;
      ++result.failing_runs;
      const OutlierTrend t = outlier_trend(r);
      if (t.late > t.early) ++result.rising_runs;
    }
  log("slow suite done, " + fmt(seconds_since(t0), 4) + " s");
  return result;
}

// ---- determinism through the CLI ---------------------------------------------

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" FLATFF_CLI_PATH "' " + args + " > cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// File contents with wall-clock columns removed.
std::string comparable(const fs::path& p) {
  const std::string name = p.filename().string();
  std::string text = slurp(p);
  if (name != "train_log.csv" && name != "scaling.csv") return text;
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (name == "train_log.csv") {
      out += line.substr(0, line.rfind(',')) + '\n';
    } else {
      // P,atoms,ms_per_step,speed,efficiency
      const auto second = line.find(',', line.find(',') + 1);
      out += line.substr(0, second) + '\n';
    }
  }
  return out;
}

Outcome determinism(const fs::path& workdir) {
  const std::string small =
      "--set system.n_atoms=32 dataset.n_train=24 dataset.n_val=4 dataset.burn_in_steps=200 "
      "dataset.sample_interval=20 train.max_epochs=30 model.hidden=[8,8] probe.samples=100 "
      "probe.scan_points=7 ttf.nvt_steps=100 ttf.max_steps=2100 ttf.n_seeds=3 ttf.sizes=[32,64] "
      "ttf.temperature=0.7 sweep.rho_grid=[0,0.01] parallel.atoms_per_domain=700 parallel.steps=2 ";
  const std::vector<std::pair<std::string, std::string>> stages{
      {"data", "gen-data"},
      {"adam", "train --data data/dataset.jsonl --optimizer adam"},
      {"sam", "train --data data/dataset.jsonl --optimizer sam --rho 0.01"},
      {"sim_nvt", "simulate --model oracle --ensemble nvt --steps 100 --every 20"},
      {"sim_nn", "simulate --model sam/model.json --ensemble nve --steps 100 --every 20"},
      {"ttf", "ttf --model adam/model.json --data data/dataset.jsonl"},
      {"sweep", "rho-sweep --data data/dataset.jsonl"},
      {"sharpness", "sharpness --model sam/model.json --data data/dataset.jsonl"},
      {"scan", "loss-scan --model sam/model.json --data data/dataset.jsonl"},
      {"fit", "fit ttf/ttf.csv"},
      {"bench", "bench-parallel --workers-list 1 2"},
  };
  std::vector<fs::path> roots;
  std::vector<std::vector<int>> codes(2);
  for (int run = 0; run < 2; ++run) {
    const fs::path root = workdir / ("determinism-" + std::to_string(run + 1));
    fs::remove_all(root);
    fs::create_directories(root);
    roots.push_back(root);
    for (const auto& [dir, args] : stages)
      codes[run].push_back(run_cli(root, small + args + " --out " + dir));
  }
  int identical = 0, files = 0;
  std::string mismatches, errors;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const std::string& dir = stages[k].first;
    if (codes[0][k] != 0 || codes[0][k] != codes[1][k])
      errors += " " + dir + "(exit " + std::to_string(codes[0][k]) + "/" + std::to_string(codes[1][k]) + ")";
    for (const auto& entry : fs::directory_iterator(roots[0] / dir)) {
      const std::string name = entry.path().filename().string();
      if (name == "manifest.json") continue;  // timestamps and wall time
      ++files;
      const fs::path other = roots[1] / dir / name;
      if (fs::exists(other) && comparable(entry.path()) == comparable(other)) {
        ++identical;
      } else {
        mismatches += " " + dir + "/" + name;
      }
    }
  }
  return verdict(errors.empty() && identical == files && files > 0,
                 std::to_string(stages.size()) + " CLI stages run twice: " + std::to_string(identical) +
                     "/" + std::to_string(files) +
                     " output files byte-identical (manifests and wall-clock columns excluded)" +
                     (mismatches.empty() ? "" : "; differ:" + mismatches) +
                     (errors.empty() ? "" : "; failed stages:" + errors));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flatff acceptance checks"};
  bool slow = false;
  std::string workdir;
  app.add_flag("--slow", slow, "Also run the multi-seed SAM vs Adam comparison (hours)");
  app.add_option("--workdir", workdir, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  const fs::path root = workdir.empty()
                            ? fs::temp_directory_path() / ("flatff-acceptance-" + std::to_string(getpid()))
                            : fs::path(workdir);
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int k, const std::string& title, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* status = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIP";
    if (o.status == Outcome::fail) ++failures;
    std::cout << "criterion " << k << ": " << status << "  " << title << " | " << o.detail << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  };

  report(1, "gradient/force exactness", gradient_exactness);
  report(2, "NVE conservation", nve_conservation);
  report(3, "SAM correctness", sam_correctness);
  report(4, "sharpness estimator", sharpness_estimator);
  report(5, "power-law fit", power_law_fit);
  report(6, "parallel equivalence", parallel_equivalence);

  std::optional<SlowResult> slow_result;
  report(7, "SAM vs Adam, multi-seed", [&]() -> Outcome {
    if (!slow) return {Outcome::skip, "slow suite; run `acceptance --slow`"};
    slow_result = sam_vs_adam(root / "sam-vs-adam");
    return slow_result->comparison;
  });
  report(8, "harness controls", [&] {
    const ControlResult c = harness_controls();
    std::string detail = c.detail;
    bool ok = c.oracle_censored && c.random_fail;
    if (slow_result) {
      ok = ok && slow_result->failing_runs > 0 && slow_result->rising_runs == slow_result->failing_runs;
      detail += "; outlier count rises toward failure in " + std::to_string(slow_result->rising_runs) +
                "/" + std::to_string(slow_result->failing_runs) + " failing runs";
    } else {
      detail += "; outlier-shape part not evaluated (needs --slow)";
    }
    return verdict(ok, detail);
  });
  report(9, "determinism", [&] { return determinism(root); });

  if (workdir.empty()) fs::remove_all(root);
  return failures == 0 ? 0 : 1;
}
