#include "p3d2d/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace p3d2d {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string shape_token(const std::vector<int>& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s;
}

std::vector<int> parse_shape_token(const std::string& tok, const std::string& name) {
    std::vector<int> shape;
    std::stringstream ss(tok);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        try {
            shape.push_back(std::stoi(part));
        } catch (const std::exception&) {
            throw FormatError("checkpoint: bad shape '" + tok + "' for tensor " + name);
        }
    }
    if (shape.empty()) throw FormatError("checkpoint: empty shape for tensor " + name);
    return shape;
}

struct ManifestEntry {
    std::vector<int> shape;
    std::size_t offset = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, ModelParams<float>& params,
                     const AdadeltaState<float>* optimizer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");

    const ModelConfig& cfg = params.cfg;
    std::ostringstream head;
    head << kCheckpointMagic << "\n";
    head << "meta omega " << cfg.omega << "\n";
    head << "meta slices " << cfg.slices << "\n";
    head << "meta reduction " << cfg.reduction << "\n";
    head << "meta conv_out " << cfg.conv_out << "\n";
    head << "meta classes " << cfg.classes << "\n";
    head << "meta dropout " << format_double(cfg.dropout) << "\n";
    head << "meta se_enabled " << (cfg.se_enabled ? 1 : 0) << "\n";
    head << "meta conv_widths ";
    for (int i = 0; i < 6; ++i) head << (i ? "," : "") << cfg.conv_widths[i];
    head << "\n";
    head << "meta fc1 " << cfg.fc1 << "\n";
    head << "meta fc2 " << cfg.fc2 << "\n";
    if (optimizer) {
        head << "meta opt_rho " << format_double(optimizer->rho) << "\n";
        head << "meta opt_epsilon " << format_double(optimizer->epsilon) << "\n";
        head << "meta opt_lr " << format_double(optimizer->learning_rate) << "\n";
    }

    struct Blob {
        std::string name;
        const float* data;
        std::vector<int> shape;
        std::size_t count;
    };
    std::vector<Blob> blobs;
    for_each_param<float>(params, [&blobs](const std::string& name, Tensor<float>& t) {
        blobs.push_back({name, t.values().data(), t.shape(), t.values().size()});
    });
    if (optimizer) {
        std::size_t idx = 0;
        for_each_param<float>(params, [&](const std::string& name, Tensor<float>& t) {
            blobs.push_back({"opt.g2." + name, optimizer->accum_grad_sq[idx].data(), t.shape(),
                             optimizer->accum_grad_sq[idx].size()});
            blobs.push_back({"opt.dx2." + name, optimizer->accum_update_sq[idx].data(), t.shape(),
                             optimizer->accum_update_sq[idx].size()});
            ++idx;
        });
    }

    std::size_t offset = 0;
    for (const auto& b : blobs) {
        head << "tensor " << b.name << " " << shape_token(b.shape) << " " << offset << "\n";
        offset += b.count * sizeof(float);
    }
    head << "data\n";

    const std::string header = head.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& b : blobs)
        out.write(reinterpret_cast<const char*>(b.data),
                  static_cast<std::streamsize>(b.count * sizeof(float)));
    if (!out) throw FormatError("checkpoint: short write to " + path);
}

ModelParams<float> load_checkpoint(const std::string& path, AdadeltaState<float>* optimizer_out,
                                   bool* has_optimizer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic)
        throw FormatError("checkpoint: bad magic in " + path);

    std::map<std::string, std::string> meta;
    std::map<std::string, ManifestEntry> manifest;
    std::vector<std::string> manifest_order;
    bool saw_data = false;
    while (std::getline(in, line)) {
        if (line == "data") {
            saw_data = true;
            break;
        }
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key, value;
            ls >> key >> value;
            if (key.empty() || value.empty())
                throw FormatError("checkpoint: malformed meta line '" + line + "'");
            meta[key] = value;
        } else if (kind == "tensor") {
            std::string name, shape_tok;
            std::size_t offset = 0;
            ls >> name >> shape_tok >> offset;
            if (ls.fail()) throw FormatError("checkpoint: malformed tensor line '" + line + "'");
            manifest[name] = {parse_shape_token(shape_tok, name), offset};
            manifest_order.push_back(name);
        } else {
            throw FormatError("checkpoint: unexpected line '" + line + "'");
        }
    }
    if (!saw_data) throw FormatError("checkpoint: missing data section in " + path);

    std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    auto require_meta = [&meta, &path](const std::string& key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end())
            throw FormatError("checkpoint: missing meta field '" + key + "' in " + path);
        return it->second;
    };

    ModelConfig cfg;
    try {
        cfg.omega = std::stoi(require_meta("omega"));
        cfg.slices = std::stoi(require_meta("slices"));
        cfg.reduction = std::stoi(require_meta("reduction"));
        cfg.conv_out = std::stoi(require_meta("conv_out"));
        cfg.classes = std::stoi(require_meta("classes"));
        cfg.dropout = std::stod(require_meta("dropout"));
        cfg.se_enabled = std::stoi(require_meta("se_enabled")) != 0;
        cfg.fc1 = std::stoi(require_meta("fc1"));
        cfg.fc2 = std::stoi(require_meta("fc2"));
        std::stringstream ws(require_meta("conv_widths"));
        std::string tok;
        int i = 0;
        while (std::getline(ws, tok, ',') && i < 6) cfg.conv_widths[i++] = std::stoi(tok);
        if (i != 6) throw FormatError("checkpoint: conv_widths needs 6 entries");
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("checkpoint: unparsable meta value (") + e.what() + ")");
    }

    ModelParams<float> params = init_model<float>(cfg, 0);

    auto read_tensor = [&](const std::string& name, const std::vector<int>& want_shape,
                           float* dst, std::size_t count) {
        auto it = manifest.find(name);
        if (it == manifest.end())
            throw FormatError("checkpoint: missing tensor '" + name + "' in " + path);
        if (it->second.shape != want_shape)
            throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                              shape_str(it->second.shape) + ", expected " + shape_str(want_shape));
        std::size_t bytes = count * sizeof(float);
        if (it->second.offset + bytes > blob.size())
            throw FormatError("checkpoint: data section truncated at tensor '" + name + "'");
        std::memcpy(dst, blob.data() + it->second.offset, bytes);
    };

    for_each_param<float>(params, [&](const std::string& name, Tensor<float>& t) {
        read_tensor(name, t.shape(), t.values().data(), t.values().size());
    });

    bool opt_present = meta.count("opt_rho") > 0;
    if (optimizer_out && opt_present) {
        auto tensors = collect_params(params);
        *optimizer_out = adadelta_init(tensors, std::stod(require_meta("opt_rho")),
                                       std::stod(require_meta("opt_epsilon")),
                                       std::stod(require_meta("opt_lr")));
        std::size_t idx = 0;
        for_each_param<float>(params, [&](const std::string& name, Tensor<float>& t) {
            read_tensor("opt.g2." + name, t.shape(), optimizer_out->accum_grad_sq[idx].data(),
                        optimizer_out->accum_grad_sq[idx].size());
            read_tensor("opt.dx2." + name, t.shape(), optimizer_out->accum_update_sq[idx].data(),
                        optimizer_out->accum_update_sq[idx].size());
            ++idx;
        });
    }
    if (has_optimizer) *has_optimizer = opt_present;

    std::set<std::string> expected_names;
    for_each_param<float>(params, [&](const std::string& name, Tensor<float>&) {
        expected_names.insert(name);
        if (opt_present) {
            expected_names.insert("opt.g2." + name);
            expected_names.insert("opt.dx2." + name);
        }
    });
    for (const auto& name : manifest_order)
        if (!expected_names.count(name))
            throw FormatError("checkpoint: unexpected tensor '" + name + "' in " + path);

    return params;
}

}  // namespace p3d2d
