#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "matxfer/material/library.hpp"

namespace matxfer {

struct PartEntry {
  Category category = Category::leathers;
  int material = 0;
  std::vector<double> probs;  // material distribution; empty for sampled ground truth

  friend bool operator==(const PartEntry&, const PartEntry&) = default;
};

/// Semantic part label -> material. Ordered by label so iteration and
/// serialization are deterministic.
struct PartMaterialAssignment {
  std::map<int, PartEntry> parts;

  bool covers(const std::vector<int>& labels) const;
  friend bool operator==(const PartMaterialAssignment&, const PartMaterialAssignment&) = default;
};

/// Throws ValidationError if a part's category disagrees with the library.
void check_categories(const PartMaterialAssignment& a, const std::vector<Material>& library);

// Text form: one "label material" line per part.
std::string format_assignment(const PartMaterialAssignment& a);
PartMaterialAssignment parse_assignment(const std::string& text, const std::vector<Material>& library);
void save_assignment(const std::filesystem::path& path, const PartMaterialAssignment& a);
PartMaterialAssignment load_assignment(const std::filesystem::path& path, const std::vector<Material>& library);

}  // namespace matxfer
