#pragma once

#include <string>

#include "repton/integrator.hpp"

namespace repton {

std::string sha256_hex(const std::string& bytes);

// Time-series CSV. The header row is frozen as
//   t, mass, l2_norm, free_energy, min_value, penalty_mass
// with per-mode columns `, c0, c1, ...` appended when coefficients were
// recorded; data rows are plain comma-separated shortest-round-trip doubles.
// A non-empty meta string is prepended as a single `# `-comment line, which
// is where the config hash / seed / version self-description lives.
std::string trajectory_csv(const Trajectory& traj, const std::string& meta = "");

std::string format_double(double v);  // shortest round-trip decimal

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Binary state snapshot: 8-byte magic "RPTNSNP1", u64 mode count, then the
// cosine coefficients, all little-endian 64-bit.
void write_snapshot(const std::string& path, const Vec& coeffs);
Vec read_snapshot(const std::string& path);

}  // namespace repton
