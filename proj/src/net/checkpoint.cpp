#include "rpf/net/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace rpf::net {

namespace {

constexpr uint32_t kMagic = 0x43465052;  // "RPFC"
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["meta"] = ckpt.meta;
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.tensors)
        dir.push_back({{"name", name}, {"shape", t.shape()}});
    header["tensors"] = dir;
    const std::string hs = header.dump();

    // write to a temp file then rename, so a crash never leaves a torn file
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open for write: " + tmp);
        write_u32(os, kMagic);
        write_u32(os, kVersion);
        write_u64(os, hs.size());
        os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& [name, t] : ckpt.tensors)
            os.write(reinterpret_cast<const char*>(t.data()),
                     static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!os) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    if (read_u32(is) != kMagic) throw std::runtime_error("bad checkpoint magic: " + path);
    const uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const uint64_t hlen = read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    Checkpoint ckpt;
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (const auto& e : header["tensors"]) {
        std::vector<int> shape = e["shape"].get<std::vector<int>>();
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        ckpt.tensors.emplace_back(e["name"].get<std::string>(), std::move(t));
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return ckpt;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return {{"stages", cfg.stages},
            {"channels", cfg.channels},
            {"dilation_rates", cfg.dilation_rates},
            {"use_cpm", cfg.use_cpm},
            {"use_residual_branch", cfg.use_residual_branch},
            {"fdfm_mode", cfg.fdfm_mode == FdfmMode::Frequency ? "frequency" : "transformer_sub"}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.stages = j.value("stages", cfg.stages);
    cfg.channels = j.value("channels", cfg.channels);
    cfg.dilation_rates = j.value("dilation_rates", cfg.dilation_rates);
    cfg.use_cpm = j.value("use_cpm", cfg.use_cpm);
    cfg.use_residual_branch = j.value("use_residual_branch", cfg.use_residual_branch);
    const std::string m = j.value("fdfm_mode", "frequency");
    cfg.fdfm_mode = m == "transformer_sub" ? FdfmMode::TransformerSub : FdfmMode::Frequency;
    cfg.validate();
    return cfg;
}

void pack_model(Checkpoint& ckpt, RpfNet& model, const std::string& prefix) {
    ParamMap params = model.parameters();
    for (const auto& [name, v] : params.items) ckpt.add(prefix + name, v.value());
    BufferMap buffers = model.buffers();
    for (const auto& [name, t] : buffers.items) ckpt.add(prefix + name, *t);
}

void unpack_model(const Checkpoint& ckpt, RpfNet& model, const std::string& prefix) {
    ParamMap params = model.parameters();
    for (auto& [name, v] : params.items) {
        const Tensor* t = ckpt.find(prefix + name);
        if (!t) throw std::runtime_error("checkpoint missing tensor " + prefix + name);
        if (!t->same_shape(v.value()))
            throw std::runtime_error("checkpoint shape mismatch for " + prefix + name);
        v.value_mut() = *t;
    }
    BufferMap buffers = model.buffers();
    for (auto& [name, t] : buffers.items) {
        const Tensor* src = ckpt.find(prefix + name);
        if (!src) throw std::runtime_error("checkpoint missing buffer " + prefix + name);
        *t = *src;
    }
}

void pack_decoder(Checkpoint& ckpt, AuxDecoder& dec, const std::string& prefix) {
    ParamMap params;
    dec.collect_params(params);
    for (const auto& [name, v] : params.items) ckpt.add(prefix + name, v.value());
    BufferMap buffers;
    dec.collect_buffers(buffers);
    for (const auto& [name, t] : buffers.items) ckpt.add(prefix + name, *t);
}

void unpack_decoder(const Checkpoint& ckpt, AuxDecoder& dec, const std::string& prefix) {
    ParamMap params;
    dec.collect_params(params);
    for (auto& [name, v] : params.items) {
        const Tensor* t = ckpt.find(prefix + name);
        if (!t) throw std::runtime_error("checkpoint missing tensor " + prefix + name);
        v.value_mut() = *t;
    }
    BufferMap buffers;
    dec.collect_buffers(buffers);
    for (auto& [name, t] : buffers.items) {
        const Tensor* src = ckpt.find(prefix + name);
        if (!src) throw std::runtime_error("checkpoint missing buffer " + prefix + name);
        *t = *src;
    }
}

void save_model(const std::string& path, RpfNet& model) {
    Checkpoint ckpt;
    ckpt.meta["model"] = model_config_to_json(model.config());
    pack_model(ckpt, model);
    save_checkpoint(path, ckpt);
}

RpfNet load_model(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (!ckpt.meta.contains("model"))
        throw std::runtime_error("checkpoint has no model config: " + path);
    RpfNet model(model_config_from_json(ckpt.meta["model"]));
    unpack_model(ckpt, model, "model.");
    return model;
}

}  // namespace rpf::net
