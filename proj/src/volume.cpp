#include "p3d2d/volume.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "volume container writer assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace p3d2d {

namespace {

json make_header(const std::array<int, 3>& dims, const std::array<double, 3>& spacing,
                 const std::string& dtype, const std::string& role, const std::string& data_file,
                 const std::string& subject_id) {
    json j;
    j["dims"] = dims;
    j["spacing_mm"] = spacing;
    j["dtype"] = dtype;
    j["role"] = role;
    j["data_file"] = data_file;
    if (!subject_id.empty()) j["subject_id"] = subject_id;
    return j;
}

void write_container(const fs::path& dir, const std::string& stem, const json& header,
                     const void* data, std::size_t bytes) {
    fs::path hpath = dir / (stem + ".mvol.json");
    fs::path rpath = dir / (stem + ".raw");
    std::ofstream hf(hpath);
    if (!hf) throw FormatError("cannot write header " + hpath.string());
    hf << header.dump(2) << "\n";
    std::ofstream rf(rpath, std::ios::binary);
    if (!rf) throw FormatError("cannot write raw file " + rpath.string());
    rf.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!rf) throw FormatError("short write to " + rpath.string());
}

struct ContainerHeader {
    std::array<int, 3> dims;
    std::array<double, 3> spacing;
    std::string dtype, role, data_file, subject_id;
};

ContainerHeader read_header(const fs::path& hpath) {
    std::ifstream hf(hpath);
    if (!hf) throw FormatError("cannot open header " + hpath.string());
    json j;
    try {
        hf >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad JSON in " + hpath.string() + ": " + e.what());
    }
    ContainerHeader h;
    try {
        auto dims = j.at("dims");
        auto spacing = j.at("spacing_mm");
        if (dims.size() != 3 || spacing.size() != 3)
            throw FormatError("dims/spacing_mm must have 3 entries in " + hpath.string());
        for (int i = 0; i < 3; ++i) {
            h.dims[i] = dims[i].get<int>();
            h.spacing[i] = spacing[i].get<double>();
            if (h.dims[i] <= 0) throw FormatError("non-positive dim in " + hpath.string());
            if (h.spacing[i] <= 0) throw FormatError("non-positive spacing in " + hpath.string());
        }
        h.dtype = j.at("dtype").get<std::string>();
        h.role = j.at("role").get<std::string>();
        h.data_file = j.at("data_file").get<std::string>();
        h.subject_id = j.value("subject_id", "");
    } catch (const FormatError&) {
        throw;
    } catch (const json::exception& e) {
        throw FormatError("missing field in " + hpath.string() + ": " + e.what());
    }
    return h;
}

std::vector<char> read_raw(const fs::path& dir, const ContainerHeader& h, std::size_t elem_size,
                           const fs::path& hpath) {
    fs::path rpath = dir / h.data_file;
    std::ifstream rf(rpath, std::ios::binary | std::ios::ate);
    if (!rf) throw FormatError("cannot open raw file " + rpath.string());
    std::size_t bytes = static_cast<std::size_t>(rf.tellg());
    std::size_t want =
        static_cast<std::size_t>(h.dims[0]) * h.dims[1] * h.dims[2] * elem_size;
    if (bytes != want)
        throw FormatError("raw file " + rpath.string() + " holds " + std::to_string(bytes) +
                          " bytes, header " + hpath.string() + " declares " + std::to_string(want));
    rf.seekg(0);
    std::vector<char> buf(bytes);
    rf.read(buf.data(), static_cast<std::streamsize>(bytes));
    if (!rf) throw FormatError("short read from " + rpath.string());
    return buf;
}

int modality_from_role(const std::string& role, const fs::path& hpath) {
    if (role.rfind("modality:", 0) != 0)
        throw FormatError("role '" + role + "' in " + hpath.string() + " is not a modality");
    std::string name = role.substr(9);
    for (int m = 0; m < kModalities; ++m)
        if (name == modality_name(m)) return m;
    throw FormatError("unknown modality key '" + name + "' in " + hpath.string());
}

std::string stem_for_modality(int m) {
    std::string s = modality_name(m);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

void save_subject(const std::string& dir, const MultimodalVolume& vol, const LabelVolume* labels) {
    fs::path d(dir);
    fs::create_directories(d);
    for (int m = 0; m < kModalities; ++m) {
        json h = make_header(vol.dims, vol.spacing_mm, "f32le",
                             std::string("modality:") + modality_name(m),
                             stem_for_modality(m) + ".raw", vol.subject_id);
        write_container(d, stem_for_modality(m), h, vol.scans[m].data(),
                        vol.scans[m].size() * sizeof(float));
    }
    if (labels) save_labels(dir, *labels);
}

void save_labels(const std::string& dir, const LabelVolume& labels, const std::string& stem) {
    fs::path d(dir);
    fs::create_directories(d);
    json h = make_header(labels.dims, labels.spacing_mm, "u8", "labels", stem + ".raw", "");
    write_container(d, stem, h, labels.labels.data(), labels.labels.size());
}

MultimodalVolume load_volume(const std::string& dir) {
    fs::path d(dir);
    if (!fs::is_directory(d)) throw FormatError("subject directory not found: " + dir);
    MultimodalVolume vol;
    std::array<bool, kModalities> seen{};
    bool first = true;
    for (const auto& entry : fs::directory_iterator(d)) {
        const fs::path& p = entry.path();
        if (p.extension() != ".json" || p.string().find(".mvol.json") == std::string::npos)
            continue;
        ContainerHeader h = read_header(p);
        if (h.role == "labels") continue;
        int m = modality_from_role(h.role, p);
        if (h.dtype != "f32le")
            throw FormatError("modality container " + p.string() + " must be f32le, got " +
                              h.dtype);
        if (first) {
            vol.dims = h.dims;
            vol.spacing_mm = h.spacing;
            vol.subject_id = h.subject_id.empty() ? d.filename().string() : h.subject_id;
            first = false;
        } else if (h.dims != vol.dims) {
            throw FormatError("scan dims differ across containers in " + dir);
        }
        if (seen[m]) throw FormatError("duplicate modality " + h.role + " in " + dir);
        seen[m] = true;
        std::vector<char> raw = read_raw(d, h, sizeof(float), p);
        vol.scans[m].resize(raw.size() / sizeof(float));
        std::memcpy(vol.scans[m].data(), raw.data(), raw.size());
    }
    for (int m = 0; m < kModalities; ++m)
        if (!seen[m])
            throw FormatError(std::string("subject ") + dir + " is missing modality " +
                              modality_name(m));
    return vol;
}

LabelVolume load_labels(const std::string& path) {
    fs::path p(path);
    fs::path hpath;
    if (fs::is_directory(p)) {
        for (const auto& entry : fs::directory_iterator(p)) {
            const fs::path& f = entry.path();
            if (f.string().find(".mvol.json") == std::string::npos) continue;
            if (read_header(f).role == "labels") {
                if (!hpath.empty())
                    throw FormatError("multiple label containers in " + path +
                                      "; pass a header path");
                hpath = f;
            }
        }
        if (hpath.empty()) throw FormatError("no labels container in " + path);
    } else {
        hpath = p;
    }
    ContainerHeader h = read_header(hpath);
    if (h.role != "labels")
        throw FormatError("container " + hpath.string() + " has role '" + h.role +
                          "', expected labels");
    if (h.dtype != "u8")
        throw FormatError("labels container " + hpath.string() + " must be u8, got " + h.dtype);
    LabelVolume lv;
    lv.dims = h.dims;
    lv.spacing_mm = h.spacing;
    std::vector<char> raw = read_raw(hpath.parent_path(), h, 1, hpath);
    lv.labels.assign(raw.begin(), raw.end());
    return lv;
}

std::vector<long> label_histogram(const LabelVolume& labels, int classes) {
    std::vector<long> hist(classes, 0);
    for (std::uint8_t v : labels.labels) {
        if (v >= classes)
            throw FormatError("label value " + std::to_string(int(v)) + " exceeds class count " +
                              std::to_string(classes));
        ++hist[v];
    }
    return hist;
}

}  // namespace p3d2d
