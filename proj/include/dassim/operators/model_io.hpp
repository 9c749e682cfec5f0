#pragma once

// Model file format "DASSIM-NN-1":
//
//   bytes 0..11   ASCII magic "DASSIM-NN-1\n"
//   next 8 bytes  header length N, unsigned 64-bit little-endian
//   next N bytes  UTF-8 JSON header: {"format", "kind", kind-specific shape
//                 fields, "tensors": [{"name", "rows", "cols"}, ...]}
//   remainder     every tensor listed in the header, in order, row-major,
//                 IEEE-754 float64 little-endian
//
// kind is "dense", "lstm" or "autoencoder".

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dassim/operators/autoencoder.hpp"
#include "dassim/operators/lstm.hpp"

namespace dassim {

inline constexpr char kModelMagic[] = "DASSIM-NN-1\n";
inline constexpr std::size_t kModelMagicSize = 12;

using AnyModel = std::variant<DenseNetwork, LstmStack, Autoencoder>;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

inline nlohmann::json activations_json(const DenseNetwork& net) {
    auto a = nlohmann::json::array();
    for (const auto& l : net.layers) a.push_back(to_string(l.activation));
    return a;
}

inline nlohmann::json model_header(const DenseNetwork& m) {
    return {{"kind", "dense"}, {"activations", activations_json(m)}};
}
inline nlohmann::json model_header(const LstmStack& m) {
    return {{"kind", "lstm"},
            {"input_dim", m.input_dim},
            {"hidden_dim", m.hidden_dim},
            {"num_layers", m.layers.size()},
            {"out_seq_length", m.out_seq_length}};
}
inline nlohmann::json model_header(const Autoencoder& m) {
    return {{"kind", "autoencoder"},
            {"encoder_activations", activations_json(m.encoder)},
            {"decoder_activations", activations_json(m.decoder)}};
}

template <class M>
std::string serialize_model(const M& model) {
    nlohmann::json header = model_header(model);
    header["format"] = "DASSIM-NN-1";
    auto tensors = nlohmann::json::array();
    for (const Matrix* p : model.parameters()) tensors.push_back({{"rows", p->rows()}, {"cols", p->cols()}});
    header["tensors"] = tensors;
    const std::string text = header.dump();
    std::string out(kModelMagic, kModelMagicSize);
    put_u64(out, text.size());
    out += text;
    for (const Matrix* p : model.parameters())
        for (double v : p->data()) put_f64(out, v);
    return out;
}

inline DenseNetwork dense_skeleton(const nlohmann::json& acts, const std::vector<Matrix>& tensors, std::size_t& next) {
    DenseNetwork net;
    for (const auto& a : acts) {
        if (next + 2 > tensors.size()) throw ModelFormatError("model file: missing dense tensors");
        DenseLayer l;
        l.weight = tensors[next++];
        l.bias = tensors[next++];
        l.activation = activation_from_string(a.get<std::string>());
        net.layers.push_back(std::move(l));
    }
    return net;
}

}  // namespace detail

inline std::string serialize_model(const AnyModel& m) {
    return std::visit([](const auto& model) { return detail::serialize_model(model); }, m);
}

inline AnyModel deserialize_model(const std::string& bytes) {
    if (bytes.size() < kModelMagicSize + 8 || bytes.compare(0, kModelMagicSize, kModelMagic) != 0)
        throw ModelFormatError("model file: bad magic (expected DASSIM-NN-1)");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t header_len = detail::get_u64(raw + kModelMagicSize);
    const std::size_t header_at = kModelMagicSize + 8;
    if (bytes.size() < header_at + header_len) throw ModelFormatError("model file: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(header_at, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("model file: header is not JSON: ") + e.what());
    }
    std::vector<Matrix> tensors;
    std::size_t at = header_at + header_len;
    try {
        for (const auto& t : header.at("tensors")) {
            const auto rows = t.at("rows").get<std::size_t>();
            const auto cols = t.at("cols").get<std::size_t>();
            if (bytes.size() < at + rows * cols * 8) throw ModelFormatError("model file: truncated payload");
            std::vector<double> d(rows * cols);
            for (std::size_t i = 0; i < d.size(); ++i, at += 8) d[i] = std::bit_cast<double>(detail::get_u64(raw + at));
            tensors.emplace_back(rows, cols, std::move(d));
        }
        if (at != bytes.size()) throw ModelFormatError("model file: trailing bytes after payload");

        const std::string kind = header.at("kind").get<std::string>();
        std::size_t next = 0;
        if (kind == "dense") {
            DenseNetwork net = detail::dense_skeleton(header.at("activations"), tensors, next);
            net.check();
            return net;
        }
        if (kind == "autoencoder") {
            Autoencoder ae;
            ae.encoder = detail::dense_skeleton(header.at("encoder_activations"), tensors, next);
            ae.decoder = detail::dense_skeleton(header.at("decoder_activations"), tensors, next);
            ae.check();
            return ae;
        }
        if (kind == "lstm") {
            LstmStack s;
            s.input_dim = header.at("input_dim").get<std::size_t>();
            s.hidden_dim = header.at("hidden_dim").get<std::size_t>();
            s.out_seq_length = header.at("out_seq_length").get<std::size_t>();
            const auto layers = header.at("num_layers").get<std::size_t>();
            if (tensors.size() != 3 * layers + 2) throw ModelFormatError("model file: lstm tensor count");
            for (std::size_t k = 0; k < layers; ++k)
                s.layers.push_back({tensors[3 * k], tensors[3 * k + 1], tensors[3 * k + 2]});
            s.readout_weight = tensors[3 * layers];
            s.readout_bias = tensors[3 * layers + 1];
            s.check();
            return s;
        }
        throw ModelFormatError("model file: unknown kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("model file: malformed header: ") + e.what());
    } catch (const DimensionMismatch& e) {
        throw ModelFormatError(std::string("model file: inconsistent shapes: ") + e.what());
    }
}

inline void save_model(const std::string& path, const AnyModel& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelFormatError("cannot open '" + path + "' for writing");
    const std::string bytes = serialize_model(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelFormatError("failed writing '" + path + "'");
}

inline AnyModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFormatError("cannot open model file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

template <class M>
M load_model_as(const std::string& path) {
    AnyModel any = load_model(path);
    if (auto* m = std::get_if<M>(&any)) return std::move(*m);
    throw ModelFormatError("model file '" + path + "' holds a different network kind");
}

}  // namespace dassim
