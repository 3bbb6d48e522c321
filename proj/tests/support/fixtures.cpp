#include "fixtures.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include "tkg/hashing.hpp"

namespace tkg::testing {

TempDir::TempDir() {
  static std::atomic<std::uint64_t> counter{0};
  const auto stamp = static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());
  const auto name = "tkg-test-" + hex64(mix_seed(stamp, counter++));
  path_ = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path fixture_dir() { return std::filesystem::path(TKG_DATA_DIR) / "fixture"; }

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

TemporalGraph make_graph(std::uint32_t entities, std::uint32_t relations,
                         std::vector<Quadruple> facts, Timestamp delta, std::vector<Split> splits) {
  Vocabulary ev, rv;
  for (std::uint32_t i = 0; i < entities; ++i) ev.add(i, "e" + std::to_string(i));
  for (std::uint32_t i = 0; i < relations; ++i) rv.add(i, "r" + std::to_string(i));
  if (splits.empty()) splits.assign(facts.size(), Split::train);
  return TemporalGraph(std::move(facts), std::move(splits), std::move(ev), std::move(rv), delta);
}

}  // namespace tkg::testing
