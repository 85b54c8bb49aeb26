#include "p3d/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace p3d::nn {

namespace {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

struct Reader {
    const std::string& data;
    size_t pos = 0;

    template <typename T>
    T get(const char* what) {
        if (pos + sizeof(T) > data.size())
            throw FormatError(strf("checkpoint truncated reading %s", what), pos);
        T v;
        std::memcpy(&v, data.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    std::string get_bytes(size_t n, const char* what) {
        if (pos + n > data.size())
            throw FormatError(strf("checkpoint truncated reading %s", what), pos);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<Blob>& blobs) {
    std::string out;
    out.append("P3CK", 4);
    put<uint32_t>(out, kCheckpointVersion);
    put<uint32_t>(out, static_cast<uint32_t>(blobs.size()));
    for (const auto& b : blobs) {
        if (b.name.size() > 0xffff)
            throw ConfigError(strf("checkpoint: blob name too long: %s", b.name.c_str()));
        if (b.values.size() != b.numel())
            throw ConfigError(strf("checkpoint: blob '%s' dims do not match value count",
                                   b.name.c_str()));
        put<uint16_t>(out, static_cast<uint16_t>(b.name.size()));
        out.append(b.name);
        put<uint8_t>(out, b.dtype);
        put<uint32_t>(out, static_cast<uint32_t>(b.dims.size()));
        for (uint32_t d : b.dims) put<uint32_t>(out, d);
        if (b.dtype == 0) {
            for (double v : b.values) put<float>(out, static_cast<float>(v));
        } else if (b.dtype == 1) {
            for (double v : b.values) put<double>(out, v);
        } else {
            throw ConfigError(strf("checkpoint: blob '%s' has unknown dtype %d",
                                   b.name.c_str(), b.dtype));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError(strf("checkpoint: cannot open '%s' for writing",
                                   path.string().c_str()));
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ConfigError(strf("checkpoint: write failed for '%s'",
                                   path.string().c_str()));
}

std::vector<Blob> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(strf("checkpoint: cannot open '%s'", path.string().c_str()), 0);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{data};
    std::string magic = r.get_bytes(4, "magic");
    if (magic != "P3CK") throw FormatError("checkpoint: bad magic", 0);
    uint32_t version = r.get<uint32_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError(strf("checkpoint: unsupported version %u", version), 4);
    uint32_t count = r.get<uint32_t>("blob count");

    std::vector<Blob> blobs;
    blobs.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Blob b;
        uint16_t name_len = r.get<uint16_t>("name length");
        b.name = r.get_bytes(name_len, "name");
        b.dtype = r.get<uint8_t>("dtype");
        if (b.dtype > 1)
            throw FormatError(strf("checkpoint: blob '%s' has unknown dtype %u",
                                   b.name.c_str(), b.dtype), r.pos - 1);
        uint32_t rank = r.get<uint32_t>("rank");
        if (rank > 8)
            throw FormatError(strf("checkpoint: blob '%s' has implausible rank %u",
                                   b.name.c_str(), rank), r.pos - 4);
        b.dims.resize(rank);
        for (uint32_t d = 0; d < rank; ++d) b.dims[d] = r.get<uint32_t>("dims");
        size_t n = b.numel();
        b.values.resize(n);
        if (b.dtype == 0) {
            for (size_t j = 0; j < n; ++j) b.values[j] = r.get<float>("values");
        } else {
            for (size_t j = 0; j < n; ++j) b.values[j] = r.get<double>("values");
        }
        blobs.push_back(std::move(b));
    }
    if (r.pos != data.size())
        throw FormatError(strf("checkpoint: %zu trailing bytes", data.size() - r.pos), r.pos);
    return blobs;
}

}  // namespace p3d::nn
