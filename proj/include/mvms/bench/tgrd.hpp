#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvms/core/binary_io.hpp"
#include "mvms/diff/tensor.hpp"

namespace mvms::bench {

inline constexpr std::uint32_t kTgrdVersion = 1;

enum class DType : std::uint8_t { f64 = 1, f32 = 2 };

/// "TGRD", u32 version, u32 rank, u64 dims, u8 dtype, little-endian payload.
inline void write_tgrd(std::ostream& out, const diff::Tensor& t, DType dtype = DType::f64) {
    out.write("TGRD", 4);
    io::put_u32(out, kTgrdVersion);
    io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) io::put_u64(out, d);
    io::put_u8(out, static_cast<std::uint8_t>(dtype));
    for (double v : t.values()) {
        if (dtype == DType::f64)
            io::put_f64(out, v);
        else
            io::put_f32(out, static_cast<float>(v));
    }
    if (!out) throw FormatError("write_tgrd: write failed");
}

inline diff::Tensor read_tgrd(std::istream& in) {
    io::expect_magic(in, "TGRD", "tensor file");
    const std::uint32_t version = io::get_u32(in, "version");
    if (version != kTgrdVersion) throw FormatError("tensor file: unsupported version " + std::to_string(version));
    const std::uint32_t rank = io::get_u32(in, "rank");
    if (rank > 8) throw FormatError("tensor file: implausible rank " + std::to_string(rank));
    diff::Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
        d = io::get_u64(in, "dims");
        if (d > (1ull << 32)) throw FormatError("tensor file: implausible dimension");
        total *= d;
    }
    const auto dtype = io::get_u8(in, "dtype");
    if (dtype != 1 && dtype != 2) throw FormatError("tensor file: unknown dtype code " + std::to_string(dtype));
    std::vector<double> data(total);
    for (double& v : data) v = dtype == 1 ? io::get_f64(in, "payload") : static_cast<double>(io::get_f32(in, "payload"));
    io::expect_end(in, "tensor file");
    return diff::Tensor(std::move(shape), std::move(data));
}

inline void save_tgrd(const std::string& path, const diff::Tensor& t, DType dtype = DType::f64) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    write_tgrd(out, t, dtype);
}

inline diff::Tensor load_tgrd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return read_tgrd(in);
}

inline void save_image(const std::string& path, const Array2D& a, DType dtype = DType::f64) {
    save_tgrd(path, diff::Tensor({a.rows(), a.cols()}, a.values()), dtype);
}

/// Accepts rank 2, or rank 3 with one channel.
inline Array2D load_image(const std::string& path) {
    const diff::Tensor t = load_tgrd(path);
    if (t.rank() == 2) {
        Array2D a(t.dim(0), t.dim(1));
        a.values() = t.values();
        return a;
    }
    if (t.rank() == 3 && t.dim(0) == 1) return t.to_image();
    throw ShapeError("'" + path + "' holds a " + diff::shape_string(t.shape()) + " tensor, not a 2D array");
}

enum class Split { train, val, test };

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw FormatError("manifest: unknown split '" + s + "'");
}

struct ManifestEntry {
    std::string path;
    Split split;
};

/// Lines "geometry <spec>" and "<split> <path>"; '#' starts a comment.
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
    std::string geometry;
    std::vector<ManifestEntry> entries;

    std::vector<std::string> paths(Split s) const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(e.path);
        return out;
    }
};

inline DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base, bool check_files = true) {
    DatasetManifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string key, value, extra;
        if (!(ls >> key)) continue;
        if (!(ls >> value) || (ls >> extra)) throw FormatError("manifest line " + std::to_string(lineno) + ": expected '<key> <value>'");
        if (key == "geometry") {
            if (!m.geometry.empty()) throw FormatError("manifest: geometry given twice");
            m.geometry = value;
            continue;
        }
        const Split split = parse_split(key);
        std::filesystem::path p(value);
        if (p.is_relative()) p = base / p;
        const std::string norm = p.lexically_normal().string();
        if (!seen.insert(norm).second) throw FormatError("manifest: '" + norm + "' listed more than once");
        if (check_files && !std::filesystem::exists(norm)) throw FormatError("manifest: missing file '" + norm + "'");
        m.entries.push_back({norm, split});
    }
    if (m.geometry.empty()) throw FormatError("manifest: no geometry line");
    return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest '" + path + "'");
    return parse_manifest(in, std::filesystem::path(path).parent_path());
}

} // namespace mvms::bench
