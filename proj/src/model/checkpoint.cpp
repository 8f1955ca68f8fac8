#include "model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace sfd {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes little-endian host");

constexpr char kMagic[4] = {'S', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class V>
void put(std::ofstream& f, V v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V take(std::ifstream& f, const std::string& path) {
    V v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!f) throw ParseError(cat("checkpoint ", path, ": truncated"));
    return v;
}

}  // namespace

template <class T>
void save_checkpoint(const std::string& path, const ParamMap<T>& pm, const CheckpointMeta& meta) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(cat("cannot open ", path, " for writing"));
    f.write(kMagic, 4);
    put<std::uint32_t>(f, kVersion);
    put<std::uint64_t>(f, meta.config_hash);
    put<std::uint64_t>(f, meta.step);
    put<std::uint32_t>(f, sizeof(T));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(pm.items().size()));
    for (const auto& [name, t] : pm.items()) {
        put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) put<std::uint64_t>(f, static_cast<std::uint64_t>(t.dim(d)));
        f.write(reinterpret_cast<const char*>(t.values().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(T)));
    }
    if (!f) throw IoError(cat("write failed for ", path));
}

template <class T>
CheckpointMeta load_checkpoint(const std::string& path, const ParamMap<T>& pm) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(cat("cannot open ", path));
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError(cat("checkpoint ", path, ": bad magic"));
    }
    auto version = take<std::uint32_t>(f, path);
    if (version != kVersion) throw ParseError(cat("checkpoint ", path, ": unsupported version ", version));
    CheckpointMeta meta;
    meta.config_hash = take<std::uint64_t>(f, path);
    meta.step = take<std::uint64_t>(f, path);
    auto scalar = take<std::uint32_t>(f, path);
    if (scalar != sizeof(T)) {
        throw ParseError(cat("checkpoint ", path, ": scalar width ", scalar, " != ", sizeof(T)));
    }
    auto count = take<std::uint32_t>(f, path);
    if (count != pm.items().size()) {
        throw ParseError(cat("checkpoint ", path, ": holds ", count, " params, model has ", pm.items().size()));
    }
    for (const auto& [name, t] : pm.items()) {
        auto name_len = take<std::uint32_t>(f, path);
        std::string stored(name_len, '\0');
        f.read(stored.data(), name_len);
        if (!f) throw ParseError(cat("checkpoint ", path, ": truncated"));
        if (stored != name) {
            throw ParseError(cat("checkpoint ", path, ": param '", stored, "' where '", name, "' expected"));
        }
        auto rank = take<std::uint32_t>(f, path);
        if (static_cast<int>(rank) != t.rank()) {
            throw ParseError(cat("checkpoint ", path, ": '", name, "' rank ", rank, " != ", t.rank()));
        }
        for (int d = 0; d < t.rank(); ++d) {
            auto e = take<std::uint64_t>(f, path);
            if (e != static_cast<std::uint64_t>(t.dim(d))) {
                throw ParseError(cat("checkpoint ", path, ": '", name, "' extent ", e, " != ", t.dim(d)));
            }
        }
        Tensor<T> h = t;
        f.read(reinterpret_cast<char*>(h.values().data()),
               static_cast<std::streamsize>(h.numel() * sizeof(T)));
        if (!f) throw ParseError(cat("checkpoint ", path, ": truncated"));
    }
    return meta;
}

template void save_checkpoint<float>(const std::string&, const ParamMap<float>&, const CheckpointMeta&);
template void save_checkpoint<double>(const std::string&, const ParamMap<double>&, const CheckpointMeta&);
template CheckpointMeta load_checkpoint<float>(const std::string&, const ParamMap<float>&);
template CheckpointMeta load_checkpoint<double>(const std::string&, const ParamMap<double>&);

}  // namespace sfd
