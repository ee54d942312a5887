#include "matxfer/material/assignment.hpp"

#include <sstream>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/raster_io.hpp"

namespace matxfer {

bool PartMaterialAssignment::covers(const std::vector<int>& labels) const {
  for (int l : labels)
    if (!parts.count(l)) return false;
  return true;
}

void check_categories(const PartMaterialAssignment& a, const std::vector<Material>& library) {
  for (const auto& [label, e] : a.parts) {
    require(e.material >= 0 && e.material < static_cast<int>(library.size()),
            "part " + std::to_string(label) + " has material id out of range");
    require(library[e.material].category == e.category,
            "part " + std::to_string(label) + " category disagrees with its material");
  }
}

std::string format_assignment(const PartMaterialAssignment& a) {
  std::string s;
  for (const auto& [label, e] : a.parts) s += std::to_string(label) + " " + std::to_string(e.material) + "\n";
  return s;
}

PartMaterialAssignment parse_assignment(const std::string& text, const std::vector<Material>& library) {
  std::istringstream in(text);
  PartMaterialAssignment a;
  int label = 0, material = 0;
  while (in >> label >> material) {
    require(material >= 0 && material < static_cast<int>(library.size()), "assignment material id out of range");
    require(!a.parts.count(label), "duplicate part label in assignment");
    a.parts[label] = PartEntry{library[material].category, material, {}};
  }
  require(in.eof(), "malformed assignment text");
  return a;
}

void save_assignment(const std::filesystem::path& path, const PartMaterialAssignment& a) {
  io::write_text(path, format_assignment(a));
}

PartMaterialAssignment load_assignment(const std::filesystem::path& path, const std::vector<Material>& library) {
  return parse_assignment(io::read_text(path), library);
}

}  // namespace matxfer
