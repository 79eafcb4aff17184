#include "centeratt/weights.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "centeratt/errors.hpp"
#include "centeratt/fp16.hpp"

namespace centeratt {
namespace {

constexpr uint32_t kWeightsVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f, const std::string& path) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw IoError(path + ": truncated weight file");
    return v;
}

}  // namespace

const Tensor& fetch_weight(const WeightStore& store, const std::string& name) {
    const auto it = store.find(name);
    if (it == store.end()) {
        throw ConfigError("missing weight tensor \"" + name + "\"");
    }
    return it->second;
}

bool has_weight(const WeightStore& store, const std::string& name) {
    return store.find(name) != store.end();
}

void save_weights(const std::string& path, const WeightStore& store) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write("CATW", 4);
    write_pod(f, kWeightsVersion);
    write_pod(f, static_cast<uint32_t>(store.size()));
    for (const auto& [name, tensor] : store) {
        if (name.size() > 0xffff) throw IoError("weight name too long: " + name);
        write_pod(f, static_cast<uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(f, static_cast<uint8_t>(tensor.rank()));
        for (size_t d : tensor.shape) write_pod(f, static_cast<uint32_t>(d));
        write_pod(f, static_cast<uint8_t>(tensor.precision));
        if (tensor.precision == Precision::kHalf) {
            for (float v : tensor.data) write_pod(f, float_to_half_bits(v));
        } else {
            f.write(reinterpret_cast<const char*>(tensor.data.data()),
                    static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
        }
    }
    if (!f) throw IoError("short write to " + path);
}

WeightStore load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CATW", 4) != 0) {
        throw IoError(path + ": not a weight file (bad magic)");
    }
    const auto version = read_pod<uint32_t>(f, path);
    if (version != kWeightsVersion) {
        throw IoError(path + ": unsupported weight file version " + std::to_string(version));
    }
    const auto count = read_pod<uint32_t>(f, path);
    WeightStore store;
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint16_t>(f, path);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw IoError(path + ": truncated weight name");
        const auto rank = read_pod<uint8_t>(f, path);
        std::vector<size_t> shape(rank);
        size_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            shape[d] = read_pod<uint32_t>(f, path);
            numel *= shape[d];
        }
        const auto precision = read_pod<uint8_t>(f, path);
        Tensor t = Tensor::zeros(shape);
        if (precision == static_cast<uint8_t>(Precision::kHalf)) {
            t.precision = Precision::kHalf;
            for (size_t k = 0; k < numel; ++k) {
                t.data[k] = half_bits_to_float(read_pod<uint16_t>(f, path));
            }
        } else if (precision == static_cast<uint8_t>(Precision::kFloat32)) {
            f.read(reinterpret_cast<char*>(t.data.data()),
                   static_cast<std::streamsize>(numel * sizeof(float)));
            if (!f) throw IoError(path + ": truncated tensor \"" + name + "\"");
        } else {
            throw IoError(path + ": unknown precision tag " + std::to_string(precision));
        }
        store.emplace(std::move(name), std::move(t));
    }
    return store;
}

}  // namespace centeratt
