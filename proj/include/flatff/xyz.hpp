#pragma once

#include <ostream>
#include <string_view>

#include "flatff/system.hpp"

namespace flatff {

/// Appends one extended-XYZ frame: atom count, a comment line carrying the
/// lattice, step, energy and temperature, then `element x y z` per atom.
void write_xyz_frame(std::ostream& out, const SystemState& state, double energy,
                     std::string_view element = "X");

}  // namespace flatff
