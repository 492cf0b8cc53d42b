#pragma once

#include <string>

namespace treeproj {

/// Write via a temp file and rename so partially written outputs are never
/// observed.
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace treeproj
