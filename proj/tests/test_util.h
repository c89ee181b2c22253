#ifndef NARRATIVE_TESTS_TEST_UTIL_H_
#define NARRATIVE_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <string>
#include <unistd.h>

#include "narrative/nn/tensor.h"
#include "narrative/util/rng.h"

namespace narrative::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    Rng rng(static_cast<uint64_t>(::getpid()) * 1000003ULL + counter++);
    path_ = std::filesystem::temp_directory_path() /
            ("narrative-test-" + std::to_string(rng.next() % 1000000000ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline nn::Tensor random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  nn::Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

}  // namespace narrative::testing

#endif  // NARRATIVE_TESTS_TEST_UTIL_H_
