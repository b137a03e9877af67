#include "flatff/pardomain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

#include "flatff/errors.hpp"
#include "flatff/integrate.hpp"
#include "flatff/model.hpp"
#include "flatff/oracle.hpp"
#include "flatff/rng.hpp"
#include "json_util.hpp"

namespace flatff {

namespace {

/// Buffered many-to-one channel. Messages are tagged with a round and a
/// sender; collect() hands back one round sorted by sender.
template <class T>
class Mailbox {
 public:
  void send(int round, int from, T payload) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(Envelope{round, from, std::move(payload)});
    }
    ready_.notify_all();
  }

  std::vector<std::pair<int, T>> collect(int round, std::size_t expected) {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [&] {
      return static_cast<std::size_t>(std::count_if(
                 queue_.begin(), queue_.end(),
                 [&](const Envelope& e) { return e.round == round; })) >= expected;
    });
    std::vector<std::pair<int, T>> out;
    for (auto it = queue_.begin(); it != queue_.end();) {
      if (it->round == round) {
        out.emplace_back(it->from, std::move(it->payload));
        it = queue_.erase(it);
      } else {
        ++it;
      }
    }
    lock.unlock();
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

 private:
  struct Envelope {
    int round;
    int from;
    T payload;
  };
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<Envelope> queue_;
};

constexpr ImageCount kShifts[27] = {
    {-1, -1, -1}, {-1, -1, 0}, {-1, -1, 1}, {-1, 0, -1}, {-1, 0, 0}, {-1, 0, 1},
    {-1, 1, -1},  {-1, 1, 0},  {-1, 1, 1},  {0, -1, -1}, {0, -1, 0}, {0, -1, 1},
    {0, 0, -1},   {0, 0, 0},   {0, 0, 1},   {0, 1, -1},  {0, 1, 0},  {0, 1, 1},
    {1, -1, -1},  {1, -1, 0},  {1, -1, 1},  {1, 0, -1},  {1, 0, 0},  {1, 0, 1},
    {1, 1, -1},   {1, 1, 0},   {1, 1, 1}};

bool is_zero(const ImageCount& s) { return s[0] == 0 && s[1] == 0 && s[2] == 0; }

Vec3 shifted(const Vec3& x, const ImageCount& s, double box) {
  Vec3 p = x;
  for (int k = 0; k < 3; ++k) p[k] += static_cast<double>(s[k]) * box;
  return p;
}

int wrap_index(int c, int n) { return ((c % n) + n) % n; }

std::runtime_error with_domain(int domain, std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return std::runtime_error("domain " + std::to_string(domain) + ": " + ex.what());
  }
}

[[noreturn]] void rethrow_with_domain(int domain, std::exception_ptr e) {
  const std::string prefix = "domain " + std::to_string(domain) + ": ";
  try {
    std::rethrow_exception(e);
  } catch (const NumericalError& ex) {
    throw NumericalError(prefix + ex.what());
  } catch (const GeometryError& ex) {
    throw GeometryError(prefix + ex.what());
  } catch (...) {
    throw with_domain(domain, e);
  }
}

}  // namespace

GridDims DomainGrid::coords(int domain) const {
  return {domain / (dims[1] * dims[2]), (domain / dims[2]) % dims[1], domain % dims[2]};
}

int DomainGrid::index(GridDims c) const {
  for (int k = 0; k < 3; ++k) c[k] = wrap_index(c[k], dims[k]);
  return (c[0] * dims[1] + c[1]) * dims[2] + c[2];
}

Vec3 DomainGrid::lower(int domain) const {
  const GridDims c = coords(domain);
  return {c[0] * edge(0), c[1] * edge(1), c[2] * edge(2)};
}

Vec3 DomainGrid::upper(int domain) const {
  const GridDims c = coords(domain);
  return {(c[0] + 1) * edge(0), (c[1] + 1) * edge(1), (c[2] + 1) * edge(2)};
}

int DomainGrid::locate(const Vec3& position) const {
  GridDims c{};
  for (int k = 0; k < 3; ++k) {
    const int raw = static_cast<int>(std::ceil(position[k] / edge(k))) - 1;
    c[k] = std::clamp(raw, 0, dims[k] - 1);
  }
  return index(c);
}

std::vector<int> DomainGrid::neighbors(int domain) const {
  const GridDims c = coords(domain);
  std::vector<int> out;
  for (const ImageCount& o : kShifts) {
    out.push_back(index({c[0] + o[0], c[1] + o[1], c[2] + o[2]}));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

GridDims dims_for_workers(int workers) {
  if (workers < 1) throw std::invalid_argument("worker count must be >= 1");
  std::vector<int> factors;
  int rest = workers;
  for (int f = 2; f * f <= rest; ++f) {
    while (rest % f == 0) {
      factors.push_back(f);
      rest /= f;
    }
  }
  if (rest > 1) factors.push_back(rest);
  std::sort(factors.rbegin(), factors.rend());
  GridDims dims{1, 1, 1};
  for (int f : factors) {
    auto smallest = std::min_element(dims.begin(), dims.end());
    *smallest *= f;
  }
  std::sort(dims.rbegin(), dims.rend());
  return dims;
}

Decomposition decompose(const SystemState& state, GridDims dims, double cutoff,
                        double skin) {
  for (int d : dims) {
    if (d < 1) throw std::invalid_argument("domain grid dimensions must be >= 1");
  }
  if (!(cutoff > 0.0) || skin < 0.0) {
    throw std::invalid_argument("decompose needs cutoff > 0 and skin >= 0");
  }
  Decomposition out;
  out.grid.dims = dims;
  out.grid.box_length = state.box_length;
  out.grid.ghost_width = cutoff + skin;
  for (int k = 0; k < 3; ++k) {
    if (out.grid.edge(k) < 2.0 * out.grid.ghost_width) {
      throw GeometryError("domain edge " + std::to_string(out.grid.edge(k)) +
                          " is below 2 * (cutoff + skin) = " +
                          std::to_string(2.0 * out.grid.ghost_width));
    }
  }
  out.owned.resize(static_cast<std::size_t>(out.grid.count()));
  out.owner.resize(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const int d = out.grid.locate(state.positions[i]);
    out.owner[i] = d;
    out.owned[static_cast<std::size_t>(d)].push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

GhostRoutes plan_ghost_routes(const Decomposition& decomposition, const SystemState& state,
                              int domain) {
  const DomainGrid& grid = decomposition.grid;
  const double gw = grid.ghost_width;
  GhostRoutes routes;
  routes.targets = grid.neighbors(domain);
  for (int target : routes.targets) {
    const Vec3 lo = grid.lower(target);
    const Vec3 hi = grid.upper(target);
    std::vector<GhostAtom> atoms;
    for (std::uint32_t a : decomposition.owned[static_cast<std::size_t>(domain)]) {
      for (const ImageCount& s : kShifts) {
        if (target == domain && is_zero(s)) continue;
        const Vec3 p = shifted(state.positions[a], s, grid.box_length);
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) {
          inside = p[k] >= lo[k] - gw && p[k] <= hi[k] + gw;
        }
        if (inside) atoms.push_back(GhostAtom{a, s, p});
      }
    }
    routes.atoms.push_back(std::move(atoms));
  }
  return routes;
}

std::vector<std::vector<GhostAtom>> exchange_ghosts(const Decomposition& decomposition,
                                                    const SystemState& state) {
  const int p = decomposition.grid.count();
  std::vector<Mailbox<std::vector<GhostAtom>>> boxes(static_cast<std::size_t>(p));
  std::vector<std::vector<GhostAtom>> ghosts(static_cast<std::size_t>(p));
  auto worker = [&](int s) {
    GhostRoutes routes = plan_ghost_routes(decomposition, state, s);
    for (std::size_t t = 0; t < routes.targets.size(); ++t) {
      boxes[static_cast<std::size_t>(routes.targets[t])].send(0, s, std::move(routes.atoms[t]));
    }
    auto inbox = boxes[static_cast<std::size_t>(s)].collect(0, routes.targets.size());
    std::vector<GhostAtom> mine;
    for (auto& [from, atoms] : inbox) mine.insert(mine.end(), atoms.begin(), atoms.end());
    ghosts[static_cast<std::size_t>(s)] = std::move(mine);
  };
  {
    std::vector<std::jthread> pool;
    for (int s = 0; s < p; ++s) pool.emplace_back(worker, s);
  }
  return ghosts;
}

// ---------------------------------------------------------------------------

struct ParallelForces::DomainWork {
  struct Route {
    std::uint32_t atom;
    std::uint32_t owned_slot;
    ImageCount shift;
  };
  std::vector<int> targets;
  std::vector<std::vector<Route>> routes;
  std::vector<std::uint32_t> owned;

  // Local atoms: owned first, then ghosts in receive order.
  std::vector<Vec3> x;
  std::vector<ImageCount> m;
  std::vector<std::uint32_t> global;

  // Full neighbor lists of the owned atoms (CSR into local indices).
  std::vector<std::uint32_t> start;
  std::vector<std::uint32_t> list;

  // Network scratch.
  std::vector<double> g;
  std::vector<double> u;
  std::vector<std::uint32_t> pair_start;
  std::vector<std::uint32_t> pair_b;
  std::vector<Vec3> pair_unit;
  std::vector<double> pair_dphi;

  Vec3 displacement(std::size_t a, std::size_t b, double box) const {
    Vec3 d = x[b] - x[a];
    for (std::size_t k = 0; k < 3; ++k) {
      d[k] += static_cast<double>(m[b][k] - m[a][k]) * box;
    }
    return d;
  }
};

namespace {

struct PositionEntry {
  std::uint32_t atom;
  Vec3 x;
  ImageCount m;
};

struct PositionMessage {
  bool ok = true;
  std::vector<PositionEntry> entries;
};

struct GradientMessage {
  bool ok = true;
  std::vector<double> u;
};

struct DomainResult {
  double energy = 0.0;
  std::vector<Vec3> forces;
  std::exception_ptr error;
  bool peer_failed = false;
};

using Work = ParallelForces::DomainWork;

void build_local_lists(Work& w, double reach, double box) {
  const std::size_t n_local = w.x.size();
  const std::size_t n_owned = w.owned.size();
  std::vector<Vec3> c(n_local);
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (std::size_t a = 0; a < n_local; ++a) {
    c[a] = shifted(w.x[a], w.m[a], box);
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], c[a][k]);
      hi[k] = std::max(hi[k], c[a][k]);
    }
  }
  std::array<int, 3> n{1, 1, 1};
  for (int k = 0; k < 3; ++k) {
    n[k] = std::clamp(static_cast<int>((hi[k] - lo[k]) / reach), 1, 128);
  }
  auto cell_of = [&](const Vec3& p) {
    std::array<int, 3> cc{};
    for (int k = 0; k < 3; ++k) {
      const double width = (hi[k] - lo[k]) / n[k];
      int v = width > 0.0 ? static_cast<int>((p[k] - lo[k]) / width) : 0;
      cc[k] = std::clamp(v, 0, n[k] - 1);
    }
    return cc;
  };
  const std::size_t n_cells = static_cast<std::size_t>(n[0]) * n[1] * n[2];
  std::vector<std::vector<std::uint32_t>> cells(n_cells);
  auto flat = [&](int a, int b, int z) {
    return (static_cast<std::size_t>(a) * n[1] + b) * n[2] + z;
  };
  for (std::size_t a = 0; a < n_local; ++a) {
    const auto cc = cell_of(c[a]);
    cells[flat(cc[0], cc[1], cc[2])].push_back(static_cast<std::uint32_t>(a));
  }
  const double reach2 = reach * reach;
  w.start.assign(n_owned + 1, 0);
  w.list.clear();
  std::vector<std::uint32_t> found;
  for (std::size_t a = 0; a < n_owned; ++a) {
    found.clear();
    const auto cc = cell_of(c[a]);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const int i = cc[0] + dx, j = cc[1] + dy, k = cc[2] + dz;
          if (i < 0 || j < 0 || k < 0 || i >= n[0] || j >= n[1] || k >= n[2]) continue;
          for (std::uint32_t b : cells[flat(i, j, k)]) {
            if (b == a) continue;
            const Vec3 d = w.displacement(a, b, box);
            if (dot(d, d) < reach2) found.push_back(b);
          }
        }
      }
    }
    std::sort(found.begin(), found.end());
    w.list.insert(w.list.end(), found.begin(), found.end());
    w.start[a + 1] = static_cast<std::uint32_t>(w.list.size());
  }
}

void lj_kernel(const Work& w, const LennardJones& lj, double box, DomainResult& out) {
  const LjParams& p = lj.params();
  const double rc2 = p.cutoff * p.cutoff;
  const double s2 = p.sigma * p.sigma;
  const double eps4 = 4.0 * p.epsilon;
  const double eps24 = 24.0 * p.epsilon;
  const std::size_t n_owned = w.owned.size();
  out.forces.assign(n_owned, Vec3{});
  for (std::size_t a = 0; a < n_owned; ++a) {
    for (std::uint32_t q = w.start[a]; q < w.start[a + 1]; ++q) {
      const std::uint32_t b = w.list[q];
      const Vec3 d = w.displacement(a, b, box);
      const double r2 = dot(d, d);
      if (r2 > rc2) continue;
      if (r2 < 1e-12) {
        throw NumericalError("atoms " + std::to_string(w.global[a]) + " and " +
                             std::to_string(w.global[b]) + " overlap");
      }
      const double sr2 = s2 / r2;
      const double sr6 = sr2 * sr2 * sr2;
      const double sr12 = sr6 * sr6;
      out.energy += 0.5 * (eps4 * (sr12 - sr6) + p.energy_shift);
      out.forces[a] -= (eps24 * (2.0 * sr12 - sr6) / r2) * d;
    }
  }
}

/// Descriptors, atomic energies and dE/dG of the owned atoms.
void nn_first_pass(Work& w, const NeuralForceField& model, double box, DomainResult& out) {
  const DescriptorConfig& desc = model.descriptors();
  const std::size_t nb = desc.n_basis();
  const std::size_t n_owned = w.owned.size();
  const double rmax2 = desc.r_max * desc.r_max;
  w.g.assign(n_owned * nb, 0.0);
  w.u.assign(w.x.size() * nb, 0.0);
  w.pair_b.clear();
  w.pair_unit.clear();
  w.pair_dphi.clear();
  std::vector<double> phi(nb);
  w.pair_start.assign(n_owned + 1, 0);
  for (std::size_t a = 0; a < n_owned; ++a) {
    double* ga = w.g.data() + a * nb;
    for (std::uint32_t q = w.start[a]; q < w.start[a + 1]; ++q) {
      const std::uint32_t b = w.list[q];
      const Vec3 d = w.displacement(a, b, box);
      const double r2 = dot(d, d);
      if (r2 >= rmax2) continue;
      const double r = std::sqrt(r2);
      if (r < 1e-6) {
        throw NumericalError("atoms " + std::to_string(w.global[a]) + " and " +
                             std::to_string(w.global[b]) + " overlap");
      }
      const std::size_t base = w.pair_dphi.size();
      w.pair_dphi.resize(base + nb);
      radial_basis(desc, r, phi.data(), w.pair_dphi.data() + base);
      for (std::size_t k = 0; k < nb; ++k) ga[k] += phi[k];
      w.pair_b.push_back(b);
      w.pair_unit.push_back((1.0 / r) * d);
    }
    w.pair_start[a + 1] = static_cast<std::uint32_t>(w.pair_b.size());
  }
  const Normalization& norm = model.normalization();
  MlpWorkspace ws(model.layout());
  std::vector<double> xin(nb);
  for (std::size_t a = 0; a < n_owned; ++a) {
    const double* ga = w.g.data() + a * nb;
    for (std::size_t k = 0; k < nb; ++k) xin[k] = (ga[k] - norm.mean[k]) / norm.scale[k];
    std::span<double> ua(w.u.data() + a * nb, nb);
    out.energy += mlp_input_gradient(model.layout(), model.params(), xin, ua, ws);
    for (std::size_t k = 0; k < nb; ++k) ua[k] /= norm.scale[k];
  }
}

void nn_forces(const Work& w, std::size_t nb, DomainResult& out) {
  const std::size_t n_owned = w.owned.size();
  out.forces.assign(n_owned, Vec3{});
  for (std::size_t a = 0; a < n_owned; ++a) {
    const double* ua = w.u.data() + a * nb;
    for (std::size_t p = w.pair_start[a]; p < w.pair_start[a + 1]; ++p) {
      const double* ub = w.u.data() + w.pair_b[p] * nb;
      const double* dphi = w.pair_dphi.data() + p * nb;
      double c = 0.0;
      for (std::size_t k = 0; k < nb; ++k) c += (ua[k] + ub[k]) * dphi[k];
      out.forces[a] += c * w.pair_unit[p];
    }
  }
  if (!std::isfinite(out.energy)) throw NumericalError("network energy is not finite");
  for (std::size_t a = 0; a < n_owned; ++a) {
    if (!is_finite(out.forces[a])) {
      throw NumericalError("network force on atom " + std::to_string(w.global[a]) +
                           " is not finite");
    }
  }
}

}  // namespace

ParallelForces::ParallelForces(std::shared_ptr<const Potential> potential, GridDims dims,
                               double skin)
    : potential_(std::move(potential)), dims_(dims), skin_(skin), serial_(potential_, skin) {
  if (!potential_) throw std::invalid_argument("ParallelForces needs a potential");
  if (!dynamic_cast<const LennardJones*>(potential_.get()) &&
      !dynamic_cast<const NeuralForceField*>(potential_.get())) {
    throw std::invalid_argument("ParallelForces supports LennardJones and NeuralForceField");
  }
  for (int d : dims_) {
    if (d < 1) throw std::invalid_argument("domain grid dimensions must be >= 1");
  }
  if (skin_ < 0.0) throw std::invalid_argument("skin must be >= 0");
}

ParallelForces::~ParallelForces() = default;

void ParallelForces::rebuild(const SystemState& state) {
  decomposition_ = decompose(state, dims_, potential_->cutoff(), skin_);
  build_images_ = state.images;
  build_unwrapped_.resize(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) build_unwrapped_[i] = state.unwrapped(i);
  work_.clear();
  for (int d = 0; d < decomposition_.grid.count(); ++d) {
    work_.push_back(std::make_unique<DomainWork>());
  }
  built_ = true;
  ++rebuilds_;
}

ForceResult ParallelForces::compute(const SystemState& state) {
  if (dims_[0] * dims_[1] * dims_[2] == 1) return serial_.compute(state);

  bool rebuild_now = !built_ || state.size() != build_unwrapped_.size() ||
                     state.box_length != decomposition_.grid.box_length;
  if (!rebuild_now) {
    const double limit2 = 0.25 * skin_ * skin_;
    for (std::size_t i = 0; i < state.size() && !rebuild_now; ++i) {
      const Vec3 d = state.unwrapped(i) - build_unwrapped_[i];
      const double d2 = dot(d, d);
      rebuild_now = d2 > 0.0 && d2 >= limit2;
    }
  }
  if (rebuild_now) rebuild(state);

  const Decomposition& dec = decomposition_;
  const int p = dec.grid.count();
  const double box = state.box_length;
  const double reach = potential_->cutoff() + skin_;
  const auto* lj = dynamic_cast<const LennardJones*>(potential_.get());
  const auto* nn = dynamic_cast<const NeuralForceField*>(potential_.get());
  const std::size_t nb = nn ? nn->descriptors().n_basis() : 0;

  std::vector<Mailbox<PositionMessage>> pos_boxes(static_cast<std::size_t>(p));
  std::vector<Mailbox<GradientMessage>> grad_boxes(static_cast<std::size_t>(p));
  Mailbox<DomainResult> collector;

  auto image_offset = [&](std::uint32_t a, const ImageCount& s) {
    ImageCount m{};
    for (int k = 0; k < 3; ++k) m[k] = state.images[a][k] - build_images_[a][k] + s[k];
    return m;
  };

  auto worker = [&](int s) {
    Work& w = *work_[static_cast<std::size_t>(s)];
    DomainResult result;
    auto guard = [&](auto&& fn) {
      if (result.error || result.peer_failed) return;
      try {
        fn();
      } catch (...) {
        result.error = std::current_exception();
      }
    };

    if (rebuild_now) {
      guard([&] {
        w.owned = dec.owned[static_cast<std::size_t>(s)];
        const GhostRoutes plan = plan_ghost_routes(dec, state, s);
        w.targets = plan.targets;
        w.routes.assign(plan.targets.size(), {});
        for (std::size_t t = 0; t < plan.targets.size(); ++t) {
          for (const GhostAtom& g : plan.atoms[t]) {
            const auto slot = static_cast<std::uint32_t>(
                std::lower_bound(w.owned.begin(), w.owned.end(), g.index) - w.owned.begin());
            w.routes[t].push_back({g.index, slot, g.shift});
          }
        }
      });
      if (result.error) w.targets = dec.grid.neighbors(s);
    }

    // Round 0: positions of everything the neighbors need.
    for (std::size_t t = 0; t < w.targets.size(); ++t) {
      PositionMessage msg;
      msg.ok = !result.error;
      if (msg.ok) {
        msg.entries.reserve(w.routes[t].size());
        for (const auto& r : w.routes[t]) {
          msg.entries.push_back({r.atom, state.positions[r.atom], image_offset(r.atom, r.shift)});
        }
      }
      pos_boxes[static_cast<std::size_t>(w.targets[t])].send(0, s, std::move(msg));
    }
    auto inbox = pos_boxes[static_cast<std::size_t>(s)].collect(0, w.targets.size());
    for (const auto& [from, msg] : inbox) {
      if (!msg.ok) result.peer_failed = true;
    }
    guard([&] {
      w.x.clear();
      w.m.clear();
      w.global.clear();
      for (std::uint32_t a : w.owned) {
        w.x.push_back(state.positions[a]);
        w.m.push_back(image_offset(a, ImageCount{}));
        w.global.push_back(a);
      }
      for (const auto& [from, msg] : inbox) {
        for (const PositionEntry& e : msg.entries) {
          w.x.push_back(e.x);
          w.m.push_back(e.m);
          w.global.push_back(e.atom);
        }
      }
      if (rebuild_now) build_local_lists(w, reach, box);
    });

    if (lj) {
      guard([&] { lj_kernel(w, *lj, box, result); });
    } else {
      guard([&] { nn_first_pass(w, *nn, box, result); });
      // Round 1: dE/dG of owned atoms that others hold as ghosts.
      for (std::size_t t = 0; t < w.targets.size(); ++t) {
        GradientMessage msg;
        msg.ok = !result.error && !result.peer_failed;
        if (msg.ok) {
          msg.u.reserve(w.routes[t].size() * nb);
          for (const auto& r : w.routes[t]) {
            const double* ua = w.u.data() + static_cast<std::size_t>(r.owned_slot) * nb;
            msg.u.insert(msg.u.end(), ua, ua + nb);
          }
        }
        grad_boxes[static_cast<std::size_t>(w.targets[t])].send(1, s, std::move(msg));
      }
      auto grads = grad_boxes[static_cast<std::size_t>(s)].collect(1, w.targets.size());
      for (const auto& [from, msg] : grads) {
        if (!msg.ok) result.peer_failed = true;
      }
      guard([&] {
        std::size_t offset = w.owned.size() * nb;
        for (const auto& [from, msg] : grads) {
          std::copy(msg.u.begin(), msg.u.end(), w.u.begin() + static_cast<std::ptrdiff_t>(offset));
          offset += msg.u.size();
        }
        if (offset != w.u.size()) throw std::logic_error("ghost gradient count mismatch");
        nn_forces(w, nb, result);
      });
    }
    collector.send(2, s, std::move(result));
  };

  std::vector<std::pair<int, DomainResult>> results;
  {
    std::vector<std::jthread> pool;
    for (int s = 0; s < p; ++s) pool.emplace_back(worker, s);
    results = collector.collect(2, static_cast<std::size_t>(p));
  }

  for (const auto& [d, r] : results) {
    if (r.error) {
      built_ = false;
      rethrow_with_domain(d, r.error);
    }
  }
  ForceResult out;
  out.forces.assign(state.size(), Vec3{});
  for (const auto& [d, r] : results) {
    out.energy += r.energy;
    const auto& owned = work_[static_cast<std::size_t>(d)]->owned;
    for (std::size_t a = 0; a < owned.size(); ++a) out.forces[owned[a]] = r.forces[a];
  }
  return out;
}

ForceResult parallel_forces(std::shared_ptr<const Potential> potential,
                            const SystemState& state, GridDims dims, double skin) {
  ParallelForces provider(std::move(potential), dims, skin);
  return provider.compute(state);
}

std::size_t nearest_lattice_size(std::size_t target) {
  std::size_t best = 1;
  for (std::size_t b : {1, 2, 4}) {
    for (std::size_t n = 1;; ++n) {
      const std::size_t size = b * n * n * n;
      const auto gap = [&](std::size_t v) { return v > target ? v - target : target - v; };
      if (gap(size) < gap(best)) best = size;
      if (size > target) break;
    }
  }
  return best;
}

ScalingReport weak_scaling_bench(std::shared_ptr<const Potential> potential,
                                 std::size_t base_atoms_per_domain,
                                 std::span<const int> worker_counts, std::int64_t steps,
                                 const SimConfig& sim, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("bench needs steps >= 1");
  if (base_atoms_per_domain < 1) throw std::invalid_argument("bench needs atoms per domain >= 1");
  auto measure = [&](int workers) {
    const std::size_t atoms =
        nearest_lattice_size(base_atoms_per_domain * static_cast<std::size_t>(workers));
    SystemState state = lattice_state(atoms, sim.density);
    Rng rng = make_stream(seed, "bench", static_cast<std::uint64_t>(workers));
    assign_velocities(state, sim.temperature, rng);
    ParallelForces provider(potential, dims_for_workers(workers), sim.skin);
    Frame frame = make_frame(std::move(state), provider);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::int64_t k = 0; k < steps; ++k) step_nve(frame, provider, sim.dt);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ScalingRow row;
    row.workers = workers;
    row.atoms = atoms;
    row.ms_per_step = 1e3 * seconds / static_cast<double>(steps);
    row.speed = static_cast<double>(atoms) * static_cast<double>(steps) / seconds;
    return row;
  };
  ScalingReport report;
  std::optional<ScalingRow> reference;
  for (int w : worker_counts) {
    if (w < 1) throw std::invalid_argument("worker counts must be >= 1");
  }
  for (int w : worker_counts) {
    ScalingRow row = measure(w);
    if (w == 1 && !reference) reference = row;
    report.rows.push_back(row);
  }
  if (!reference) reference = measure(1);
  for (ScalingRow& row : report.rows) {
    row.efficiency = row.workers == 1 && row.speed == reference->speed
                         ? 1.0
                         : row.speed / (row.workers * reference->speed);
  }
  return report;
}

void write_scaling_csv(std::ostream& out, const ScalingReport& report) {
  out << "P,atoms,ms_per_step,speed,efficiency\n";
  for (const ScalingRow& r : report.rows) {
    out << r.workers << ',' << r.atoms << ',' << detail::format_double(r.ms_per_step) << ','
        << detail::format_double(r.speed) << ',' << detail::format_double(r.efficiency)
        << '\n';
  }
}

}  // namespace flatff
