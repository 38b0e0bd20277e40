#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snapnav/common.hpp"
#include "snapnav/policy.hpp"

namespace snapnav {

inline constexpr char kSnapshotMagic[8] = {'S', 'N', 'A', 'P', 'N', 'A', 'V', '1'};
inline constexpr std::uint32_t kSnapshotFormatVersion = 1;

/// Immutable saved parameter set plus provenance.
struct Snapshot {
    std::string snapshot_id;
    PolicyParams params;  // every entry is exactly representable as float32
    int period_index = 0;
    int periods = 0;
    std::int64_t iteration = 0;
    double validation_sr = 0.0;
    std::uint64_t config_fingerprint = 0;
    std::uint32_t format_version = kSnapshotFormatVersion;

    Variant variant() const { return params.variant; }
};

class SnapshotError : public Error {
   public:
    using Error::Error;
};

/// Binary layout, all integers little-endian:
///   magic "SNAPNAV1"                      8 bytes
///   format version                        u32
///   snapshot id                           u32 length + bytes
///   variant                               u8 (0 original, 1 past_action_aware)
///   dims                                  8 x i32 (vocab, L_max, d_emb, d_model, d_view, d_ff,
///                                                  self layers, cross layers)
///   period index, period count            2 x i32
///   iteration                             i64
///   validation SR                         f64
///   config fingerprint                    u64
///   parameter count                       u64
///   payload                               f32 per parameter, blocks in PolicyParams::blocks() order,
///                                         row-major within a block
///   CRC-32 of every preceding byte        u32
std::vector<std::uint8_t> encode_snapshot(const Snapshot& snapshot);
/// Throws SnapshotError on bad magic, version mismatch, truncation, or checksum failure.
Snapshot decode_snapshot(std::span<const std::uint8_t> bytes);

void save_snapshot(const Snapshot& snapshot, const std::filesystem::path& path);
Snapshot load_snapshot(const std::filesystem::path& path);

/// Loads every *.snap file in a directory, sorted by snapshot id.
std::vector<Snapshot> load_snapshot_dir(const std::filesystem::path& dir);

}  // namespace snapnav
