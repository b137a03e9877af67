#include "flatff/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flatff/errors.hpp"

namespace flatff {

namespace {

struct CellGrid {
  int n = 1;
  std::vector<std::int32_t> head;
  std::vector<std::int32_t> next;

  int index(int cx, int cy, int cz) const { return (cx * n + cy) * n + cz; }
};

int cell_coord(double x, double box, int n) {
  auto c = static_cast<int>(x / box * n);
  return std::clamp(c, 0, n - 1);
}

}  // namespace

NeighborTable build_neighbor_table(const SystemState& state, double cutoff,
                                   double skin) {
  const double box = state.box_length;
  const double reach = cutoff + skin;
  if (!(cutoff > 0.0) || skin < 0.0) {
    throw GeometryError("neighbor table needs cutoff > 0 and skin >= 0");
  }
  if (reach >= box) {
    throw GeometryError("cutoff + skin = " + std::to_string(reach) +
                        " reaches the atom's own periodic image (box " +
                        std::to_string(box) + ")");
  }

  NeighborTable table;
  table.cutoff = cutoff;
  table.skin = skin;
  table.box_length = box;
  const std::size_t n_atoms = state.size();
  table.build_positions.resize(n_atoms);
  for (std::size_t i = 0; i < n_atoms; ++i) {
    table.build_positions[i] = state.unwrapped(i);
  }

  CellGrid grid;
  grid.n = std::clamp(static_cast<int>(std::floor(box / reach)), 1, 64);
  const int n = grid.n;
  grid.head.assign(static_cast<std::size_t>(n) * n * n, -1);
  grid.next.assign(n_atoms, -1);
  std::vector<std::array<int, 3>> cell_of(n_atoms);
  // Insert in reverse so each cell lists atoms in ascending index order.
  for (std::size_t r = n_atoms; r-- > 0;) {
    const Vec3& x = state.positions[r];
    cell_of[r] = {cell_coord(x[0], box, n), cell_coord(x[1], box, n),
                  cell_coord(x[2], box, n)};
    const int c = grid.index(cell_of[r][0], cell_of[r][1], cell_of[r][2]);
    grid.next[r] = grid.head[static_cast<std::size_t>(c)];
    grid.head[static_cast<std::size_t>(c)] = static_cast<std::int32_t>(r);
  }

  const double reach2 = reach * reach;
  for (std::size_t i = 0; i < n_atoms; ++i) {
    const Vec3& xi = state.positions[i];
    for (int ox = -1; ox <= 1; ++ox)
      for (int oy = -1; oy <= 1; ++oy)
        for (int oz = -1; oz <= 1; ++oz) {
          const std::array<int, 3> raw{cell_of[i][0] + ox, cell_of[i][1] + oy,
                                       cell_of[i][2] + oz};
          std::array<int, 3> cell{};
          ImageCount cell_shift{};
          for (std::size_t k = 0; k < 3; ++k) {
            const int wrapped = ((raw[k] % n) + n) % n;
            cell_shift[k] = (raw[k] - wrapped) / n;
            cell[k] = wrapped;
          }
          for (std::int32_t j = grid.head[static_cast<std::size_t>(
                   grid.index(cell[0], cell[1], cell[2]))];
               j >= 0; j = grid.next[static_cast<std::size_t>(j)]) {
            const auto ju = static_cast<std::size_t>(j);
            if (ju <= i) continue;
            Vec3 d = state.positions[ju] - xi;
            for (std::size_t k = 0; k < 3; ++k) d[k] += cell_shift[k] * box;
            if (dot(d, d) > reach2) continue;
            NeighborPair p;
            p.i = static_cast<std::uint32_t>(i);
            p.j = static_cast<std::uint32_t>(ju);
            for (std::size_t k = 0; k < 3; ++k) {
              p.shift[k] = cell_shift[k] - (state.images[ju][k] - state.images[i][k]);
            }
            table.pairs.push_back(p);
          }
        }
  }
  return table;
}

bool needs_rebuild(const NeighborTable& table, const SystemState& state) {
  if (table.build_positions.size() != state.size()) return true;
  const double limit = 0.5 * table.skin;
  const double limit2 = limit * limit;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const Vec3 d = minimum_image(state.unwrapped(i) - table.build_positions[i],
                                 state.box_length);
    const double d2 = dot(d, d);
    if (d2 > 0.0 && d2 >= limit2) return true;
  }
  return false;
}

}  // namespace flatff
