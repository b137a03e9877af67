#include "flatff/xyz.hpp"

#include <cstdio>

namespace flatff {

void write_xyz_frame(std::ostream& out, const SystemState& state, double energy,
                     std::string_view element) {
  const double box = state.box_length;
  char line[256];
  out << state.size() << '\n';
  std::snprintf(line, sizeof line,
                "Lattice=\"%.10g 0 0 0 %.10g 0 0 0 %.10g\" "
                "Properties=species:S:1:pos:R:3 pbc=\"T T T\" step=%lld "
                "energy=%.12g temperature=%.12g",
                box, box, box, static_cast<long long>(state.step_count), energy,
                instantaneous_temperature(state));
  out << line << '\n';
  for (const Vec3& x : state.positions) {
    std::snprintf(line, sizeof line, "%.*s %.10f %.10f %.10f",
                  static_cast<int>(element.size()), element.data(), x[0], x[1], x[2]);
    out << line << '\n';
  }
}

}  // namespace flatff
