#pragma once

#include <cstdint>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "anisim/errors.hpp"

namespace anisim::ad {

class Tape;

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major float64 tensor. Copies are shallow (shared buffer); every op
// allocates a fresh output, so values are immutable once created. A tensor may
// carry a (tape, node) link when it was produced under recording.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
        check_contract(static_cast<std::int64_t>(data.size()) == shape_numel(shape_),
                       "tensor: data size " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape_));
        data_ = std::make_shared<std::vector<double>>(std::move(data));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = v;
        return t;
    }
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

    const double* data() const { return data_->data(); }
    double* data() { return data_->data(); }
    const std::vector<double>& vec() const { return *data_; }

    double operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

    double value() const {
        check_contract(numel() == 1, "tensor: value() requires a scalar, got " + shape_str(shape_));
        return (*data_)[0];
    }

    double at2(std::int64_t i, std::int64_t j) const {  // 2-d convenience
        return (*data_)[static_cast<std::size_t>(i * shape_[1] + j)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tape* tape() const { return tape_; }
    std::int64_t node() const { return node_; }
    bool taped() const { return tape_ != nullptr && node_ >= 0; }

    // Identical values, no tape link. Used to stop gradient flow.
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

private:
    Shape shape_{};
    std::shared_ptr<std::vector<double>> data_;
    Tape* tape_ = nullptr;
    std::int64_t node_ = -1;

    friend class Tape;
    friend Tensor bind_node(Tensor t, Tape* tape, std::int64_t node);
};

// Internal: attach a tape link to a freshly built value.
inline Tensor bind_node(Tensor t, Tape* tape, std::int64_t node) {
    t.tape_ = tape;
    t.node_ = node;
    return t;
}

inline void check_all_finite(const char* op, const Tensor& t) {
    const double* p = t.data();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            throw NumericFailure(op, "non-finite output at flat index " + std::to_string(i));
        }
    }
}

}  // namespace anisim::ad
