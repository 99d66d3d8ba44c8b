#pragma once

// Checkpoint container: magic + JSON directory + raw little-endian tensor
// payload. The embedded ModelConfig hash is verified on load so a checkpoint
// can never be applied to a mismatched architecture.

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "banet/model/banet.hpp"

namespace banet {

constexpr char kCheckpointMagic[8] = {'B', 'A', 'N', 'E', 'T', 'C', 'K', '1'};

template <typename T>
struct CheckpointMeta {
    ModelConfig model;
    int epoch = 0;
    nlohmann::json extra;
    std::map<std::string, Tensor<T>> opt_state;  // e.g. SGD momentum buffers
};

namespace detail {

template <typename T>
const char* dtype_tag() {
    if constexpr (std::is_same_v<T, float>) return "f32";
    else return "f64";
}

template <typename U, typename T>
void convert_into(const std::vector<char>& raw, std::size_t offset_elems,
                  Tensor<T>& dst) {
    const U* src = reinterpret_cast<const U*>(raw.data()) + offset_elems;
    for (std::int64_t i = 0; i < dst.numel(); ++i)
        dst.data[static_cast<std::size_t>(i)] = static_cast<T>(src[i]);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, BANet<T>& net, int epoch,
                     const std::map<std::string, Tensor<T>>& opt_state = {},
                     nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json dir = nlohmann::json::array();
    std::vector<const Tensor<T>*> payload;
    std::int64_t offset = 0;
    auto add = [&](const std::string& name, const Tensor<T>& t) {
        dir.push_back({{"name", name},
                       {"dims", {t.dims[0], t.dims[1], t.dims[2], t.dims[3],
                                 t.dims[4]}},
                       {"offset", offset}});
        payload.push_back(&t);
        offset += t.numel();
    };
    net.visit_params(
        [&](const std::string& name, Var<T>& v) { add(name, v.value()); });
    for (const auto& [name, t] : opt_state) add("opt." + name, t);

    nlohmann::json header{
        {"format", "banet-checkpoint"},
        {"version", 1},
        {"model", net.config()},
        {"model_hash", model_config_hash(net.config())},
        {"epoch", epoch},
        {"dtype", detail::dtype_tag<T>()},
        {"tensors", dir},
        {"extra", std::move(extra)}};
    const std::string hjson = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint: " + path);
    f.write(kCheckpointMagic, 8);
    std::uint64_t hlen = hjson.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hjson.data(), static_cast<std::streamsize>(hjson.size()));
    for (const auto* t : payload)
        f.write(reinterpret_cast<const char*>(t->ptr()),
                static_cast<std::streamsize>(sizeof(T) * t->data.size()));
    if (!f) throw Error("checkpoint write failed: " + path);
}

template <typename T>
std::pair<BANet<T>, CheckpointMeta<T>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint not found: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw Error("not a banet checkpoint: " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hjson(hlen, '\0');
    f.read(hjson.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw Error("truncated checkpoint header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hjson);
    } catch (const std::exception& e) {
        throw Error("malformed checkpoint header: " + std::string(e.what()));
    }

    CheckpointMeta<T> meta;
    meta.model = header.at("model").get<ModelConfig>();
    meta.epoch = header.value("epoch", 0);
    meta.extra = header.value("extra", nlohmann::json::object());
    const std::uint64_t stored_hash = header.at("model_hash");
    if (model_config_hash(meta.model) != stored_hash)
        throw Error("checkpoint model-config hash mismatch: " + path);

    std::vector<char> raw((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
    const std::string dtype = header.value("dtype", "f32");
    const std::size_t elem = dtype == "f64" ? 8 : 4;

    std::map<std::string, std::pair<std::array<std::int64_t, 5>, std::int64_t>>
        directory;
    for (const auto& e : header.at("tensors")) {
        std::array<std::int64_t, 5> dims{};
        for (int i = 0; i < 5; ++i) dims[static_cast<std::size_t>(i)] = e.at("dims").at(i);
        directory[e.at("name").get<std::string>()] = {dims, e.at("offset")};
    }

    auto read_tensor = [&](const std::string& name, Tensor<T>& dst,
                           bool check_shape) {
        auto it = directory.find(name);
        if (it == directory.end())
            throw Error("checkpoint missing tensor: " + name);
        const auto& [dims, offset] = it->second;
        Tensor<T> t(dims[0], dims[1], dims[2], dims[3], dims[4]);
        if (check_shape && !(dst.dims == dims))
            throw Error("checkpoint tensor shape mismatch for " + name);
        if (raw.size() < elem * static_cast<std::size_t>(offset + t.numel()))
            throw Error("checkpoint payload truncated at tensor " + name);
        if (dtype == "f64")
            detail::convert_into<double>(raw, static_cast<std::size_t>(offset), t);
        else
            detail::convert_into<float>(raw, static_cast<std::size_t>(offset), t);
        dst = std::move(t);
    };

    BANet<T> net = BANet<T>::build(meta.model, /*seed=*/0);
    net.visit_params([&](const std::string& name, Var<T>& v) {
        read_tensor(name, v.value(), /*check_shape=*/true);
    });
    for (const auto& [name, entry] : directory) {
        if (name.rfind("opt.", 0) == 0) {
            Tensor<T> t;
            read_tensor(name, t, false);
            meta.opt_state.emplace(name.substr(4), std::move(t));
        }
    }
    return {std::move(net), std::move(meta)};
}

}  // namespace banet
