#pragma once

#include <cstdint>

namespace rrm {

// Thread-local floating point operation tally. Operators and the block
// orthonormalization add their nominal cost here; FlopScope reads the
// delta over a region.
namespace flops {
void add(std::uint64_t n) noexcept;
std::uint64_t total() noexcept;
}  // namespace flops

class FlopScope {
 public:
  FlopScope() noexcept : start_(flops::total()) {}
  std::uint64_t count() const noexcept { return flops::total() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace rrm
