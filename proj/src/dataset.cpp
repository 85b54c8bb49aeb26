#include "p3d/data/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "p3d/pose/joints.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian");

namespace p3d::data {

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
            throw FormatError(strf("dataset truncated reading %s", what), pos);
        T v;
        std::memcpy(&v, data.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    void get_raw(void* dst, size_t n, const char* what) {
        if (pos + n > data.size())
            throw FormatError(strf("dataset truncated reading %s", what), pos);
        std::memcpy(dst, data.data() + pos, n);
        pos += n;
    }
};

}  // namespace

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    if (samples.empty())
        throw ConfigError("dataset: cannot infer image dimensions from an empty corpus");
    write_dataset(path, samples, samples[0].image.h, samples[0].image.w);
}

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples,
                   int h, int w) {
    if (h <= 0 || w <= 0)
        throw ConfigError(strf("dataset: invalid image dimensions %dx%d", h, w));
    for (const auto& s : samples)
        if (s.image.h != h || s.image.w != w)
            throw ConfigError(strf("dataset: mixed image sizes %dx%d vs %dx%d",
                                   s.image.h, s.image.w, h, w));

    std::string out;
    out.reserve(dataset_file_size(samples.size(), h, w));
    out.append("P3D1", 4);
    put<uint32_t>(out, kDatasetVersion);
    put<uint32_t>(out, static_cast<uint32_t>(samples.size()));
    put<uint16_t>(out, static_cast<uint16_t>(h));
    put<uint16_t>(out, static_cast<uint16_t>(w));
    put<uint16_t>(out, 3);
    put<uint16_t>(out, pose::kNumJoints);
    for (const auto& s : samples) {
        put<uint16_t>(out, s.action_id);
        put<uint16_t>(out, s.subject_id);
        out.append(reinterpret_cast<const char*>(s.image.data.data()), s.image.data.size());
        for (const auto& j : s.pose2d) {
            put<float>(out, static_cast<float>(j.x));
            put<float>(out, static_cast<float>(j.y));
        }
        for (const auto& j : s.pose3d) {
            put<float>(out, static_cast<float>(j.x));
            put<float>(out, static_cast<float>(j.y));
            put<float>(out, static_cast<float>(j.z));
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError(strf("dataset: cannot open '%s' for writing",
                                   path.string().c_str()));
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ConfigError(strf("dataset: write failed for '%s'", path.string().c_str()));
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(strf("dataset: cannot open '%s'", path.string().c_str()), 0);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{data};
    char magic[4];
    r.get_raw(magic, 4, "magic");
    if (std::memcmp(magic, "P3D1", 4) != 0) throw FormatError("dataset: bad magic", 0);
    const uint32_t version = r.get<uint32_t>("version");
    if (version != kDatasetVersion)
        throw FormatError(strf("dataset: unsupported version %u", version), 4);
    const uint32_t count = r.get<uint32_t>("sample count");
    const uint16_t h = r.get<uint16_t>("height");
    const uint16_t w = r.get<uint16_t>("width");
    const uint16_t c = r.get<uint16_t>("channels");
    const uint16_t nj = r.get<uint16_t>("joint count");
    if (c != 3) throw FormatError(strf("dataset: %u channels, expected 3", c), 16);
    if (nj != pose::kNumJoints)
        throw FormatError(strf("dataset: %u joints, expected %d", nj, pose::kNumJoints), 18);
    if (h == 0 || w == 0) throw FormatError("dataset: zero image dimension", 12);

    std::vector<Sample> samples;
    samples.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Sample s;
        s.action_id = r.get<uint16_t>("action id");
        s.subject_id = r.get<uint16_t>("subject id");
        s.image = Image(h, w);
        r.get_raw(s.image.data.data(), s.image.data.size(), "image bytes");
        for (auto& j : s.pose2d) {
            j.x = r.get<float>("pose2d");
            j.y = r.get<float>("pose2d");
        }
        for (auto& j : s.pose3d) {
            j.x = r.get<float>("pose3d");
            j.y = r.get<float>("pose3d");
            j.z = r.get<float>("pose3d");
        }
        samples.push_back(std::move(s));
    }
    if (r.pos != data.size())
        throw FormatError(strf("dataset: %zu trailing bytes", data.size() - r.pos), r.pos);
    return samples;
}

}  // namespace p3d::data
