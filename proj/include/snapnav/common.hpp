#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace snapnav {

/// Base class for every error the library reports.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer. Used to derive independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a named pipeline stage: splitmix64(global ^ fnv1a64(stage)).
/// Each stage (data generation, training of a variant, ...) gets its own
/// stream so that re-running one stage does not perturb the others.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage);

}  // namespace snapnav
