#include "tadfkd/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <zlib.h>

#include <json.hpp>

namespace tadfkd {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    if (t.rank() == 2) {
        json rows = json::array();
        for (int i = 0; i < t.shape[0]; ++i) {
            json row = json::array();
            for (int j = 0; j < t.shape[1]; ++j) row.push_back(t.at(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    }
    json flat = json::array();
    for (double v : t.values) flat.push_back(v);
    return flat;
}

Tensor tensor_from_json(const json& j, std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::size_t k = 0;
    if (t.rank() == 2) {
        for (const auto& row : j)
            for (const auto& v : row) t.values.at(k++) = v.get<double>();
    } else {
        for (const auto& v : j) t.values.at(k++) = v.get<double>();
    }
    if (k != t.values.size()) {
        throw IoError("checkpoint: parameter element count mismatch");
    }
    return t;
}

json build_document(const Network& net) {
    json doc;
    doc["schema_version"] = kCheckpointSchemaVersion;
    doc["kind"] = net.kind == NetworkKind::classifier ? "classifier" : "generator";

    json spec = json::array();
    json params = json::array();
    json bn_running = json::array();
    for (const Layer& l : net.layers) {
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            spec.push_back({{"type", "dense"},
                            {"in", d->weight.shape[1]},
                            {"out", d->weight.shape[0]}});
            params.push_back(tensor_to_json(d->weight));
            params.push_back(tensor_to_json(d->bias));
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
            spec.push_back({{"type", "batch_norm"},
                            {"dim", bn->gamma.shape[0]},
                            {"momentum", bn->momentum},
                            {"eps", bn->eps}});
            params.push_back(tensor_to_json(bn->gamma));
            params.push_back(tensor_to_json(bn->beta));
            bn_running.push_back({{"mean", tensor_to_json(bn->running_mean)},
                                  {"var", tensor_to_json(bn->running_var)}});
        } else {
            switch (std::get<Activation>(l)) {
                case Activation::relu: spec.push_back({{"type", "relu"}}); break;
                case Activation::tanh: spec.push_back({{"type", "tanh"}}); break;
            }
        }
    }
    doc["layer_spec"] = std::move(spec);
    doc["params"] = std::move(params);
    doc["bn_running"] = std::move(bn_running);
    return doc;
}

std::uint32_t crc32_of(const std::string& text) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(text.data()),
                  static_cast<uInt>(text.size()));
    return static_cast<std::uint32_t>(crc);
}

} // namespace

std::string canonical_network_json(const Network& net) {
    return build_document(net).dump();
}

std::uint32_t network_checksum(const Network& net) {
    return crc32_of(canonical_network_json(net));
}

void save_network(const Network& net, const std::filesystem::path& path) {
    json doc = build_document(net);
    doc["crc32"] = crc32_of(doc.dump());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_network: cannot open " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("save_network: write failed for " + path.string());
}

Network load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_network: cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("load_network: " + path.string() + ": " + e.what());
    }

    if (!doc.contains("schema_version") ||
        doc["schema_version"].get<int>() != kCheckpointSchemaVersion) {
        throw SchemaVersionMismatch("load_network: unsupported schema in " + path.string());
    }
    if (!doc.contains("crc32")) {
        throw ChecksumMismatch("load_network: missing crc32 in " + path.string());
    }
    const auto stored_crc = doc["crc32"].get<std::uint32_t>();
    json canonical = doc;
    canonical.erase("crc32");
    if (crc32_of(canonical.dump()) != stored_crc) {
        throw ChecksumMismatch("load_network: checksum mismatch in " + path.string());
    }

    Network net;
    const std::string kind = doc["kind"].get<std::string>();
    if (kind == "classifier") net.kind = NetworkKind::classifier;
    else if (kind == "generator") net.kind = NetworkKind::generator;
    else throw IoError("load_network: unknown kind '" + kind + "'");
    net.mode = net.kind == NetworkKind::generator ? ForwardMode::train : ForwardMode::eval;

    const json& params = doc["params"];
    const json& bn_running = doc["bn_running"];
    std::size_t pi = 0;
    std::size_t bi = 0;
    for (const json& entry : doc["layer_spec"]) {
        const std::string type = entry["type"].get<std::string>();
        if (type == "dense") {
            DenseLayer d;
            const int in = entry["in"].get<int>();
            const int out = entry["out"].get<int>();
            d.weight = tensor_from_json(params.at(pi++), {out, in});
            d.bias = tensor_from_json(params.at(pi++), {out});
            net.layers.emplace_back(std::move(d));
        } else if (type == "batch_norm") {
            BatchNormLayer bn;
            const int dim = entry["dim"].get<int>();
            bn.momentum = entry["momentum"].get<double>();
            bn.eps = entry["eps"].get<double>();
            bn.gamma = tensor_from_json(params.at(pi++), {dim});
            bn.beta = tensor_from_json(params.at(pi++), {dim});
            const json& running = bn_running.at(bi++);
            bn.running_mean = tensor_from_json(running["mean"], {dim});
            bn.running_var = tensor_from_json(running["var"], {dim});
            net.layers.emplace_back(std::move(bn));
        } else if (type == "relu") {
            net.layers.emplace_back(Activation::relu);
        } else if (type == "tanh") {
            net.layers.emplace_back(Activation::tanh);
        } else {
            throw IoError("load_network: unknown layer type '" + type + "'");
        }
    }
    return net;
}

} // namespace tadfkd
