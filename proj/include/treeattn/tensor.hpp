#pragma once

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace treeattn {

// Dense row-major tensor of doubles. Rank is usually 1 (vectors) or 2
// (matrices); anything with size()==1 counts as a scalar.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int>(data_.size()) != checked_size(shape_))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str());
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int size() const { return static_cast<int>(data_.size()); }
    bool is_scalar() const { return size() == 1; }

    int rows() const { return shape_.empty() ? 0 : shape_[0]; }
    int cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }

    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    const std::vector<double>& vec() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
        os << "]";
        return os.str();
    }

private:
    static int checked_size(const std::vector<int>& shape) {
        if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
        long long n = 1;
        for (int e : shape) {
            if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent");
            n *= e;
        }
        return static_cast<int>(n);
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.vec() == b.vec();
}

}  // namespace treeattn
