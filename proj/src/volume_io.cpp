#include "troch/volume_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

using json = nlohmann::json;

namespace troch {

namespace {

std::string sidecar_path(const std::string& vol_path) {
    if (vol_path.size() < 4 || vol_path.substr(vol_path.size() - 4) != ".vol")
        throw InvalidInput("raw volume path must end in .vol: " + vol_path);
    return vol_path.substr(0, vol_path.size() - 4) + ".json";
}

void write_sidecar(const std::string& vol_path, Dims dims, Spacing spacing,
                   const std::string& dtype) {
    json j;
    j["dims"] = {dims[0], dims[1], dims[2]};
    j["spacing_mm"] = {spacing[0], spacing[1], spacing[2]};
    j["dtype"] = dtype;
    j["order"] = "x-fastest";
    std::ofstream f(sidecar_path(vol_path));
    if (!f) throw RuntimeFailure("cannot write sidecar for " + vol_path);
    f << j.dump(2) << "\n";
}

struct Sidecar {
    Dims dims;
    Spacing spacing;
    std::string dtype;
};

Sidecar read_sidecar(const std::string& vol_path) {
    std::ifstream f(sidecar_path(vol_path));
    if (!f) throw InvalidInput("missing sidecar for " + vol_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("bad sidecar for " + vol_path + ": " + e.what());
    }
    Sidecar s;
    try {
        auto d = j.at("dims");
        auto sp = j.at("spacing_mm");
        if (d.size() != 3 || sp.size() != 3)
            throw InvalidInput("sidecar dims/spacing_mm must have 3 entries");
        for (int a = 0; a < 3; ++a) {
            s.dims[a] = d[a].get<int>();
            s.spacing[a] = sp[a].get<double>();
        }
        s.dtype = j.at("dtype").get<std::string>();
        if (j.at("order").get<std::string>() != "x-fastest")
            throw InvalidInput("sidecar order must be x-fastest");
    } catch (const json::exception& e) {
        throw InvalidInput("bad sidecar for " + vol_path + ": " + e.what());
    }
    if (s.dims[0] <= 0 || s.dims[1] <= 0 || s.dims[2] <= 0)
        throw InvalidInput("sidecar dims must be positive");
    if (s.spacing[0] <= 0.0 || s.spacing[1] <= 0.0 || s.spacing[2] <= 0.0)
        throw InvalidInput("sidecar spacing must be positive");
    return s;
}

std::vector<char> read_all_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot open " + path);
    f.seekg(0, std::ios::end);
    const auto len = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<char> bytes(len);
    if (len > 0) f.read(bytes.data(), static_cast<std::streamsize>(len));
    if (!f) throw RuntimeFailure("short read on " + path);
    return bytes;
}

} // namespace

void save_raw(const Volume& v, const std::string& vol_path) {
    validate_volume(v);
    std::ofstream f(vol_path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + vol_path);
    f.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    if (!f) throw RuntimeFailure("short write on " + vol_path);
    write_sidecar(vol_path, v.dims, v.spacing, "f32le");
}

Volume load_raw(const std::string& vol_path) {
    const Sidecar s = read_sidecar(vol_path);
    if (s.dtype != "f32le")
        throw InvalidInput(vol_path + ": expected dtype f32le, got " + s.dtype);

    const auto bytes = read_all_bytes(vol_path);
    const std::size_t expect = Volume::voxel_count(s.dims) * sizeof(float);
    if (bytes.size() != expect)
        throw InvalidInput(vol_path + ": data length " + std::to_string(bytes.size()) +
                           " does not match sidecar dims (" + std::to_string(expect) +
                           " bytes expected)");

    Volume v(s.dims, s.spacing);
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    for (float x : v.data)
        if (!std::isfinite(x)) throw InvalidInput(vol_path + ": non-finite value");
    return v;
}

void save_mask(const BinaryMask& m, const std::string& vol_path) {
    validate_mask(m);
    Volume v(m.dims, m.spacing);
    for (std::size_t i = 0; i < m.data.size(); ++i) v.data[i] = m.data[i] ? 1.0f : 0.0f;
    save_raw(v, vol_path);
}

BinaryMask load_mask(const std::string& vol_path) {
    const Volume v = load_raw(vol_path);
    BinaryMask m(v.dims, v.spacing);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (v.data[i] == 0.0f)
            m.data[i] = 0;
        else if (v.data[i] == 1.0f)
            m.data[i] = 1;
        else
            throw InvalidInput(vol_path + ": mask values must be exactly 0 or 1");
    }
    return m;
}

void save_labels(const LabelVolume& l, const std::string& vol_path) {
    std::ofstream f(vol_path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + vol_path);
    f.write(reinterpret_cast<const char*>(l.data.data()),
            static_cast<std::streamsize>(l.data.size()));
    if (!f) throw RuntimeFailure("short write on " + vol_path);
    write_sidecar(vol_path, l.dims, l.spacing, "u8");
}

LabelVolume load_labels(const std::string& vol_path) {
    const Sidecar s = read_sidecar(vol_path);
    if (s.dtype != "u8")
        throw InvalidInput(vol_path + ": expected dtype u8, got " + s.dtype);
    const auto bytes = read_all_bytes(vol_path);
    if (bytes.size() != Volume::voxel_count(s.dims))
        throw InvalidInput(vol_path + ": data length does not match sidecar dims");
    LabelVolume l(s.dims, s.spacing);
    std::memcpy(l.data.data(), bytes.data(), bytes.size());
    return l;
}

// ---------------------------------------------------------------------------
// NIfTI-1

namespace {

template <typename T>
T read_le(const std::vector<char>& b, std::size_t off) {
    if (off + sizeof(T) > b.size()) throw InvalidInput("NIfTI file truncated");
    T v;
    std::memcpy(&v, b.data() + off, sizeof(T));
    return v; // little-endian host assumed
}

} // namespace

Volume load_nifti1(const std::string& path) {
    const auto bytes = read_all_bytes(path);
    if (bytes.size() < 352) throw InvalidInput(path + ": too small for a NIfTI-1 header");

    const auto sizeof_hdr = read_le<std::int32_t>(bytes, 0);
    if (sizeof_hdr != 348)
        throw InvalidInput(path + ": sizeof_hdr != 348 (big-endian or not NIfTI-1)");
    if (!(bytes[344] == 'n' && bytes[345] == '+' && bytes[346] == '1' && bytes[347] == '\0'))
        throw InvalidInput(path + ": bad magic (expected \"n+1\")");

    const auto ndim = read_le<std::int16_t>(bytes, 40);
    if (ndim != 3) throw InvalidInput(path + ": dim[0] must be 3");

    Dims dims;
    for (int a = 0; a < 3; ++a)
        dims[a] = read_le<std::int16_t>(bytes, 40 + 2 * (a + 1));
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw InvalidInput(path + ": non-positive dims");

    const auto datatype = read_le<std::int16_t>(bytes, 70);
    if (datatype != 4 && datatype != 16)
        throw InvalidInput(path + ": unsupported datatype " + std::to_string(datatype) +
                           " (int16 and float32 only)");

    Spacing spacing;
    for (int a = 0; a < 3; ++a)
        spacing[a] = read_le<float>(bytes, 76 + 4 * (a + 1));
    if (spacing[0] <= 0.0 || spacing[1] <= 0.0 || spacing[2] <= 0.0)
        throw InvalidInput(path + ": non-positive pixdim");

    const auto vox_offset_f = read_le<float>(bytes, 108);
    const auto scl_slope = read_le<float>(bytes, 112);
    const auto scl_inter = read_le<float>(bytes, 116);
    const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
    if (vox_offset < 352) throw InvalidInput(path + ": vox_offset below 352");

    const std::size_t n = Volume::voxel_count(dims);
    const std::size_t elem = (datatype == 4) ? 2 : 4;
    if (bytes.size() < vox_offset + n * elem)
        throw InvalidInput(path + ": data shorter than dims require");

    Volume v(dims, spacing);
    const bool scale = (scl_slope != 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        double raw;
        if (datatype == 4)
            raw = read_le<std::int16_t>(bytes, vox_offset + 2 * i);
        else
            raw = read_le<float>(bytes, vox_offset + 4 * i);
        if (scale) raw = raw * scl_slope + scl_inter;
        v.data[i] = static_cast<float>(raw);
    }
    for (float x : v.data)
        if (!std::isfinite(x)) throw InvalidInput(path + ": non-finite value");
    return v;
}

std::uint64_t file_hash(const std::string& path) {
    const auto bytes = read_all_bytes(path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace troch
