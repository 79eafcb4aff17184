#include "centeratt/tensor.hpp"

#include <cstring>
#include <sstream>

#include "centeratt/errors.hpp"
#include "centeratt/fp16.hpp"

namespace centeratt {

static size_t product(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(std::vector<size_t> s, Precision p)
    : shape(std::move(s)), data(product(shape), 0.0f), precision(p) {}

Tensor Tensor::zeros(std::vector<size_t> s, Precision p) { return Tensor(std::move(s), p); }

Tensor Tensor::full(std::vector<size_t> s, float value, Precision p) {
    Tensor t(std::move(s), p);
    for (float& v : t.data) v = value;
    return t;
}

Tensor Tensor::from(std::vector<size_t> s, std::vector<float> values, Precision p) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    t.precision = p;
    if (t.data.size() != product(t.shape)) {
        throw ShapeError("tensor data length " + std::to_string(t.data.size()) +
                         " does not match shape " + t.shape_str());
    }
    return t;
}

size_t Tensor::numel() const { return product(shape); }

size_t Tensor::dim(size_t i) const {
    if (i >= shape.size()) {
        throw ShapeError("dimension index " + std::to_string(i) + " out of range for shape " +
                         shape_str());
    }
    return shape[i];
}

bool Tensor::is_half_clean() const {
    for (float v : data) {
        float q = quantize_half(v);
        if (std::memcmp(&q, &v, sizeof(float)) != 0) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (a.shape != b.shape) {
        throw ShapeError(what + ": shape " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace centeratt
