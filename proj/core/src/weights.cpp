#include "scope/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "scope/errors.hpp"
#include "scope/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight snapshots are little-endian; byte swapping is not implemented");

namespace scope {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const std::size_t n = out.size();
    out.resize(n + sizeof(T));
    std::memcpy(out.data() + n, &v, sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw IoError("weight snapshot: truncated stream");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const NamedParams& params) {
    std::vector<std::uint8_t> out;
    out.push_back('S');
    out.push_back('C');
    out.push_back('W');
    out.push_back('T');
    put<std::uint32_t>(out, kWeightFormatVersion);
    for (const auto& [name, t] : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->dims.size()));
        for (int d : t->dims) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        const std::size_t n = out.size();
        out.resize(n + t->val.size() * sizeof(double));
        std::memcpy(out.data() + n, t->val.data(), t->val.size() * sizeof(double));
    }
    return out;
}

void save_weights(const std::string& path, const NamedParams& params) {
    const std::vector<std::uint8_t> bytes = serialize_weights(params);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write: " + path);
}

void load_weights(const std::string& path, const NamedParams& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());

    std::size_t off = 0;
    if (bytes.size() < 8 || bytes[0] != 'S' || bytes[1] != 'C' || bytes[2] != 'W' || bytes[3] != 'T')
        throw IoError("weight snapshot: bad magic");
    off = 4;
    const auto version = take<std::uint32_t>(bytes, off);
    if (version != kWeightFormatVersion)
        throw IoError("weight snapshot: unsupported version " + std::to_string(version));

    struct Record {
        std::vector<std::uint64_t> dims;
        std::size_t data_off;
        std::size_t count;
    };
    std::map<std::string, Record> records;
    while (off < bytes.size()) {
        const auto name_len = take<std::uint32_t>(bytes, off);
        if (off + name_len > bytes.size()) throw IoError("weight snapshot: truncated name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + off), name_len);
        off += name_len;
        const auto rank = take<std::uint32_t>(bytes, off);
        Record rec;
        rec.count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            rec.dims.push_back(take<std::uint64_t>(bytes, off));
            rec.count *= rec.dims.back();
        }
        rec.data_off = off;
        if (off + rec.count * sizeof(double) > bytes.size())
            throw IoError("weight snapshot: truncated data for " + name);
        off += rec.count * sizeof(double);
        records.emplace(std::move(name), std::move(rec));
    }

    for (const auto& [name, t] : params) {
        auto it = records.find(name);
        if (it == records.end()) throw IoError("weight snapshot: missing parameter " + name);
        const Record& rec = it->second;
        if (rec.dims.size() != t->dims.size())
            throw IoError("weight snapshot: rank mismatch for " + name);
        for (std::size_t i = 0; i < rec.dims.size(); ++i)
            if (rec.dims[i] != static_cast<std::uint64_t>(t->dims[i]))
                throw IoError("weight snapshot: dim mismatch for " + name);
        std::memcpy(t->val.data(), bytes.data() + rec.data_off, rec.count * sizeof(double));
    }
}

std::uint64_t weights_hash(const NamedParams& params) {
    const std::vector<std::uint8_t> bytes = serialize_weights(params);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace scope
