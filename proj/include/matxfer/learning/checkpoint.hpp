#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "matxfer/learning/model.hpp"
#include "matxfer/learning/optimizer.hpp"

namespace matxfer {

/// Versioned text container: schema tag, seed, optimizer settings and every
/// parameter tensor as shape plus row-major values (17 significant digits,
/// so values round-trip exactly and equal models produce equal bytes).
struct Checkpoint {
  std::string schema;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  Model model;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace matxfer
