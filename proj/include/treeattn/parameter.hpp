#pragma once

#include <string>
#include <vector>

#include "treeattn/rng.hpp"
#include "treeattn/tensor.hpp"

namespace treeattn {

// Trainable weight with an accumulated gradient of the same shape.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad.fill(0.0); }
};

// Scaled-uniform init for matrices: uniform(-1/sqrt(hidden), +1/sqrt(hidden)).
inline Tensor uniform_matrix(int rows, int cols, double bound, UniformRng& rng) {
    Tensor t({rows, cols});
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

inline Tensor uniform_vector(int n, double bound, UniformRng& rng) {
    Tensor t({n});
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

inline void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

}  // namespace treeattn
