#ifndef NARRATIVE_UTIL_FILES_H_
#define NARRATIVE_UTIL_FILES_H_

#include <string>
#include <vector>

namespace narrative {

// Writes `contents` to `path` through a sibling temp file and rename, so
// readers never observe a partially written file.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

// Splits file contents into lines; a trailing newline does not produce an
// empty final line. CR before LF is stripped.
std::vector<std::string> read_lines(const std::string& path);

void log_warning(const std::string& message);

}  // namespace narrative

#endif  // NARRATIVE_UTIL_FILES_H_
