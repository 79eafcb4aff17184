#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace centeratt {

// Value set a tensor is constrained to. kHalf stores binary16-representable
// values widened to float; kernels switch to the half accumulation contract
// when they see it.
enum class Precision : uint8_t {
    kFloat32 = 0,
    kHalf = 1,
};

// Dense row-major N-d array. Carrier for every feature map and weight.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<float> data;
    Precision precision = Precision::kFloat32;

    Tensor() = default;
    Tensor(std::vector<size_t> s, Precision p = Precision::kFloat32);
    static Tensor zeros(std::vector<size_t> s, Precision p = Precision::kFloat32);
    static Tensor full(std::vector<size_t> s, float value, Precision p = Precision::kFloat32);
    static Tensor from(std::vector<size_t> s, std::vector<float> values,
                       Precision p = Precision::kFloat32);

    size_t rank() const { return shape.size(); }
    size_t numel() const;
    size_t dim(size_t i) const;

    float& operator()(size_t i) { return data[i]; }
    float operator()(size_t i) const { return data[i]; }
    float& operator()(size_t i, size_t j) { return data[i * shape[1] + j]; }
    float operator()(size_t i, size_t j) const { return data[i * shape[1] + j]; }
    float& operator()(size_t i, size_t j, size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    float operator()(size_t i, size_t j, size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    float& operator()(size_t i, size_t j, size_t k, size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    float operator()(size_t i, size_t j, size_t k, size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    // True when every stored value round-trips through binary16 unchanged.
    bool is_half_clean() const;

    std::string shape_str() const;
};

// Throws ShapeError naming `what` when the two shapes differ.
void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

}  // namespace centeratt
