#include "snapnav/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace snapnav {

namespace {

static_assert(std::endian::native == std::endian::little, "snapshot codec assumes a little-endian host");

class Writer {
   public:
    template <typename T>
    void put(T value) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
   public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
    T get() {
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }
    const std::uint8_t* take(std::size_t n) {
        if (pos_ + n > data_.size()) throw SnapshotError("snapshot truncated");
        const auto* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t position() const { return pos_; }

   private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_snapshot(const Snapshot& s) {
    Writer w;
    w.put_bytes(kSnapshotMagic, sizeof(kSnapshotMagic));
    w.put<std::uint32_t>(kSnapshotFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.snapshot_id.size()));
    w.put_bytes(s.snapshot_id.data(), s.snapshot_id.size());
    w.put<std::uint8_t>(s.params.variant == Variant::original ? 0 : 1);
    const auto& d = s.params.dims;
    for (int v : {d.vocab_size, d.max_instruction_length, d.d_emb, d.d_model, d.d_view, d.d_ff, d.self_layers,
                  d.cross_layers})
        w.put<std::int32_t>(v);
    w.put<std::int32_t>(s.period_index);
    w.put<std::int32_t>(s.periods);
    w.put<std::int64_t>(s.iteration);
    w.put<double>(s.validation_sr);
    w.put<std::uint64_t>(s.config_fingerprint);
    w.put<std::uint64_t>(s.params.parameter_count());
    for (const auto& block : s.params.blocks()) {
        for (Eigen::Index i = 0; i < block.value->size(); ++i) w.put<float>(static_cast<float>(block.value->data()[i]));
    }
    w.put<std::uint32_t>(crc32_of(w.bytes));
    return std::move(w.bytes);
}

Snapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kSnapshotMagic) + 8) throw SnapshotError("snapshot truncated");
    if (std::memcmp(bytes.data(), kSnapshotMagic, sizeof(kSnapshotMagic)) != 0)
        throw SnapshotError("not a snapshot file (bad magic)");
    Reader r(bytes);
    r.take(sizeof(kSnapshotMagic));
    const auto version = r.get<std::uint32_t>();
    if (version != kSnapshotFormatVersion)
        throw SnapshotError("snapshot format version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kSnapshotFormatVersion) + ")");
    const std::size_t body = bytes.size() - sizeof(std::uint32_t);
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, sizeof(stored_crc));
    if (crc32_of(bytes.first(body)) != stored_crc) throw SnapshotError("snapshot checksum mismatch");

    Snapshot s;
    s.format_version = version;
    const auto id_len = r.get<std::uint32_t>();
    const auto* id = r.take(id_len);
    s.snapshot_id.assign(reinterpret_cast<const char*>(id), id_len);
    const auto variant = r.get<std::uint8_t>();
    if (variant > 1) throw SnapshotError("unknown variant tag");
    PolicyDims d;
    d.vocab_size = r.get<std::int32_t>();
    d.max_instruction_length = r.get<std::int32_t>();
    d.d_emb = r.get<std::int32_t>();
    d.d_model = r.get<std::int32_t>();
    d.d_view = r.get<std::int32_t>();
    d.d_ff = r.get<std::int32_t>();
    d.self_layers = r.get<std::int32_t>();
    d.cross_layers = r.get<std::int32_t>();
    try {
        d.validate();
    } catch (const Error& e) {
        throw SnapshotError(std::string("snapshot metadata: ") + e.what());
    }
    s.period_index = r.get<std::int32_t>();
    s.periods = r.get<std::int32_t>();
    s.iteration = r.get<std::int64_t>();
    s.validation_sr = r.get<double>();
    s.config_fingerprint = r.get<std::uint64_t>();
    const auto count = r.get<std::uint64_t>();

    s.params = PolicyParams::initialize(d, variant == 0 ? Variant::original : Variant::past_action_aware, 0);
    if (count != s.params.parameter_count()) throw SnapshotError("snapshot parameter count does not match its dims");
    for (auto& block : s.params.blocks()) {
        for (Eigen::Index i = 0; i < block.value->size(); ++i) block.value->data()[i] = static_cast<double>(r.get<float>());
    }
    if (r.position() != body) throw SnapshotError("snapshot has trailing bytes");
    return s;
}

void save_snapshot(const Snapshot& snapshot, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto bytes = encode_snapshot(snapshot);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SnapshotError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Snapshot load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_snapshot(bytes);
    } catch (const SnapshotError& e) {
        throw SnapshotError(path.string() + ": " + e.what());
    }
}

std::vector<Snapshot> load_snapshot_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw SnapshotError("not a snapshot directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".snap") files.push_back(entry.path());
    }
    std::vector<Snapshot> out;
    for (const auto& f : files) out.push_back(load_snapshot(f));
    std::sort(out.begin(), out.end(), [](const Snapshot& a, const Snapshot& b) { return a.snapshot_id < b.snapshot_id; });
    return out;
}

}  // namespace snapnav
