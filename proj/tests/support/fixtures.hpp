#pragma once
// Shared test scaffolding: scratch directories and tiny hand-built graphs.

#include <filesystem>
#include <string>
#include <vector>

#include "tkg/graph_store.hpp"

namespace tkg::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture_dir();

void write_text(const std::filesystem::path& path, const std::string& content);

// Entities e0..e{n-1}, relations r0..r{m-1}; every fact in the train split
// unless `splits` is given.
TemporalGraph make_graph(std::uint32_t entities, std::uint32_t relations,
                         std::vector<Quadruple> facts, Timestamp delta = 1,
                         std::vector<Split> splits = {});

inline Quadruple quad(std::uint32_t s, std::uint32_t p, std::uint32_t o, Timestamp t) {
  return Quadruple{EntityId{s}, RelationId{p}, EntityId{o}, t};
}

}  // namespace tkg::testing
