#include "langdaug/tensor_io.hpp"

#include "langdaug/errors.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace langdaug {

static_assert(std::endian::native == std::endian::little, "LDTN I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'L', 'D', 'T', 'N'};

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

std::uint64_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_ldtn(const std::filesystem::path& path, const Tensor& tensor) {
    if (tensor.dims.size() > 255) throw DimensionError("write_ldtn: too many dimensions");
    if (tensor.element_count() != static_cast<std::uint64_t>(tensor.data.size())) {
        throw DimensionError(fmt::format("write_ldtn: dims product {} != data length {}", tensor.element_count(),
                                         tensor.data.size()));
    }
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));

    out.write(kMagic.data(), kMagic.size());
    const std::array<std::uint8_t, 4> header{kLdtnVersion, static_cast<std::uint8_t>(tensor.dtype),
                                             static_cast<std::uint8_t>(tensor.dims.size()), 0};
    out.write(reinterpret_cast<const char*>(header.data()), header.size());
    for (const std::uint64_t d : tensor.dims) out.write(reinterpret_cast<const char*>(&d), sizeof d);

    if (tensor.dtype == Dtype::f64) {
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    } else {
        const Eigen::VectorXf narrowed = tensor.data.cast<float>();
        out.write(reinterpret_cast<const char*>(narrowed.data()),
                  static_cast<std::streamsize>(narrowed.size() * sizeof(float)));
    }
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

Tensor read_ldtn(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));

    std::array<char, 4> magic{};
    std::array<std::uint8_t, 4> header{};
    in.read(magic.data(), magic.size());
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (!in) throw IoError(fmt::format("{}: truncated header", path.string()));
    if (magic != kMagic) {
        throw FormatError(fmt::format("{}: bad magic, expected \"LDTN\" (4C 44 54 4E)", path.string()));
    }
    if (header[0] != kLdtnVersion) {
        throw FormatError(fmt::format("{}: unsupported version {}, expected {}", path.string(), header[0], kLdtnVersion));
    }
    if (header[1] > 1) throw FormatError(fmt::format("{}: unknown dtype byte {}", path.string(), header[1]));

    Tensor t;
    t.dtype = static_cast<Dtype>(header[1]);
    t.dims.resize(header[2]);
    for (auto& d : t.dims) in.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!in) throw IoError(fmt::format("{}: truncated dims", path.string()));

    const std::uint64_t count = t.element_count();
    const std::uint64_t width = t.dtype == Dtype::f64 ? 8 : 4;
    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const auto payload = static_cast<std::uint64_t>(in.tellg() - header_end);
    if (payload != count * width) {
        throw IoError(fmt::format("{}: dims product {} needs {} payload bytes, found {}", path.string(), count,
                                  count * width, payload));
    }
    in.seekg(header_end);

    t.data.resize(static_cast<Eigen::Index>(count));
    if (t.dtype == Dtype::f64) {
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(count * 8));
    } else {
        Eigen::VectorXf narrow(static_cast<Eigen::Index>(count));
        in.read(reinterpret_cast<char*>(narrow.data()), static_cast<std::streamsize>(count * 4));
        t.data = narrow.cast<double>();
    }
    if (!in) throw IoError(fmt::format("{}: truncated payload", path.string()));
    return t;
}

std::filesystem::path meta_path_for(const std::filesystem::path& tensor_path) {
    auto p = tensor_path;
    p.replace_extension(".meta.json");
    return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
    out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fmt::format("{:016x}", fnv1a64(std::as_bytes(std::span(bytes))));
}

}  // namespace langdaug
