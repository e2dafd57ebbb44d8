#include <bit>
#include <cstring>

#include <json.hpp>
#include <openssl/evp.h>

#include "popmon/estimators.hpp"

namespace popmon {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "popmon-model";
constexpr int kVersion = 1;

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw EstimatorError("corrupt parameter blob");
    std::vector<unsigned char> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw EstimatorError("corrupt parameter blob");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw EstimatorError("hashing failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::vector<unsigned char> to_le_bytes(const std::vector<double>& values) {
    std::vector<unsigned char> out;
    out.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
    return out;
}

std::vector<double> from_le_bytes(const std::vector<unsigned char>& bytes) {
    if (bytes.size() % 8 != 0) throw EstimatorError("parameter blob length is not a multiple of 8");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

json parameters_json(const std::vector<nn::Parameter*>& params) {
    json arr = json::array();
    for (const nn::Parameter* p : params) {
        arr.push_back({{"name", p->name},
                       {"rows", p->value.rows},
                       {"cols", p->value.cols},
                       {"data", base64_encode(to_le_bytes(p->value.data))}});
    }
    return arr;
}

std::string seal(json doc) {
    doc.erase("sha256");
    const std::string hash = sha256_hex(doc.dump());
    doc["sha256"] = hash;
    return doc.dump(2);
}

json open(const std::string& document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw EstimatorError(std::string("model document is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormat) throw EstimatorError("not a model document");
    if (doc.value("version", 0) != kVersion) {
        throw EstimatorError("unsupported model version " + std::to_string(doc.value("version", 0)));
    }
    if (!doc.contains("sha256") || !doc["sha256"].is_string()) throw EstimatorError("model document has no hash");
    const std::string stored = doc["sha256"];
    json body = doc;
    body.erase("sha256");
    if (sha256_hex(body.dump()) != stored) throw EstimatorError("model hash mismatch: document was modified");
    return doc;
}

void load_parameters(const json& doc, const std::vector<nn::Parameter*>& params) {
    const json& arr = doc.at("parameters");
    if (!arr.is_array() || arr.size() != params.size()) throw EstimatorError("architecture mismatch: parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        nn::Parameter& p = *params[i];
        const json& e = arr[i];
        if (e.at("name").get<std::string>() != p.name || e.at("rows").get<std::size_t>() != p.value.rows ||
            e.at("cols").get<std::size_t>() != p.value.cols) {
            throw EstimatorError("architecture mismatch at parameter " + p.name);
        }
        auto values = from_le_bytes(base64_decode(e.at("data").get<std::string>()));
        if (values.size() != p.value.size()) throw EstimatorError("parameter " + p.name + " has the wrong length");
        p.value.data = std::move(values);
        p.zero_grad();
    }
}

}  // namespace

std::string serialize_model(SeModel& model) {
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["kind"] = "se";
    doc["architecture"] = {{"window", model.window()}, {"hidden", model.hidden()}, {"input_width", 2}};
    doc["scale"] = std::bit_cast<std::uint64_t>(model.scale());
    doc["seed"] = model.seed();
    doc["parameters"] = parameters_json(model.parameters());
    return seal(std::move(doc));
}

std::string serialize_model(MeModel& model) {
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["kind"] = "me";
    doc["architecture"] = {{"partitions", model.partition_count()}, {"window", model.window()},
                           {"hidden", model.hidden()},          {"gcn_layers", model.gcn_layers()},
                           {"key_size", model.key_size()},      {"adjacency", model.adjacency()}};
    doc["scale"] = std::bit_cast<std::uint64_t>(model.scale());
    doc["seed"] = model.seed();
    doc["parameters"] = parameters_json(model.parameters());
    return seal(std::move(doc));
}

std::string model_kind(const std::string& document) { return open(document).at("kind").get<std::string>(); }

SeModel deserialize_se_model(const std::string& document) {
    const json doc = open(document);
    if (doc.at("kind") != "se") throw EstimatorError("architecture mismatch: expected an SE model");
    const json& a = doc.at("architecture");
    SeModel model(a.at("window").get<std::size_t>(), a.at("hidden").get<std::size_t>(), doc.at("seed").get<std::uint64_t>());
    model.set_scale(std::bit_cast<double>(doc.at("scale").get<std::uint64_t>()));
    load_parameters(doc, model.parameters());
    return model;
}

MeModel deserialize_me_model(const std::string& document) {
    const json doc = open(document);
    if (doc.at("kind") != "me") throw EstimatorError("architecture mismatch: expected an ME model");
    const json& a = doc.at("architecture");
    const auto adjacency = a.at("adjacency").get<std::vector<std::vector<int>>>();
    if (adjacency.size() != a.at("partitions").get<std::size_t>()) {
        throw EstimatorError("architecture mismatch: adjacency size");
    }
    MeModel model(adjacency, a.at("window").get<std::size_t>(), a.at("hidden").get<std::size_t>(),
                  a.at("gcn_layers").get<std::size_t>(), a.at("key_size").get<std::size_t>(),
                  doc.at("seed").get<std::uint64_t>());
    model.set_scale(std::bit_cast<double>(doc.at("scale").get<std::uint64_t>()));
    load_parameters(doc, model.parameters());
    return model;
}

}  // namespace popmon
