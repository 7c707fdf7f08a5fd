#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mwalk/errors.hpp"
#include "mwalk/rng.hpp"

namespace mwalk {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_size(shape), fill) {
        for (auto d : shape)
            if (d == 0) throw DimensionError("tensor dimension must be positive: " + shape_string(shape));
    }
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (shape_size(shape) != data.size())
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_string(shape));
    }

    std::size_t size() const { return data.size(); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool all_finite() const {
        for (T x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        return Tensor<U>(shape, std::vector<U>(data.begin(), data.end()));
    }
};

/// A learnable tensor with its gradient accumulator and Adam moments.
template <class T>
struct Param {
    std::string name;
    Tensor<T> value;
    std::vector<T> grad;
    std::vector<T> m;
    std::vector<T> v;

    Param(std::string n, Tensor<T> init)
        : name(std::move(n)),
          value(std::move(init)),
          grad(value.size(), T(0)),
          m(value.size(), T(0)),
          v(value.size(), T(0)) {}

    std::size_t size() const { return value.size(); }
    T* data() { return value.data.data(); }
    const T* data() const { return value.data.data(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named parameter collection. Entries are address-stable once created, so layers
/// may hold raw pointers into the store.
template <class T>
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Param<T>& add(const std::string& name, Tensor<T> init) {
        auto [it, inserted] = params_.try_emplace(name, name, std::move(init));
        if (!inserted) throw ParameterError("duplicate parameter name: " + name);
        return it->second;
    }

    Param<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ParameterError("unknown parameter: " + name);
        return it->second;
    }
    const Param<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ParameterError("unknown parameter: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, p] : params_) n += p.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, p] : params_) p.zero_grad();
    }

    std::uint64_t step() const { return step_; }
    void set_step(std::uint64_t s) { step_ = s; }

    /// One Adam update with bias correction, then clears gradients. Tensors whose
    /// gradient is identically zero did not take part in the batch and are left
    /// untouched, moments included.
    void adam_step(const AdamConfig& cfg) {
        if (!(cfg.lr > 0)) throw ParameterError("adam learning rate must be positive");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
        const T step_size = T(cfg.lr / bc1);
        const T inv_bc2 = T(1.0 / bc2);
        const T eps = T(cfg.eps);
        for (auto& [_, p] : params_) {
            bool touched = false;
            for (T g : p.grad)
                if (g != T(0)) {
                    touched = true;
                    break;
                }
            if (!touched) continue;
            T* w = p.data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const T g = p.grad[i];
                p.m[i] = b1 * p.m[i] + (T(1) - b1) * g;
                p.v[i] = b2 * p.v[i] + (T(1) - b2) * g * g;
                w[i] -= step_size * p.m[i] / (std::sqrt(p.v[i] * inv_bc2) + eps);
            }
            p.zero_grad();
        }
    }

    /// Multiplies every accumulated gradient by `s` (batch averaging).
    void scale_grad(T s) {
        for (auto& [_, p] : params_)
            for (T& g : p.grad) g *= s;
    }

    /// Copies values (and optimizer state) into a store of another precision.
    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [name, p] : params_) {
            auto& q = out.add(name, p.value.template cast<U>());
            q.m.assign(p.m.begin(), p.m.end());
            q.v.assign(p.v.begin(), p.v.end());
        }
        out.set_step(step_);
        return out;
    }

    /// Overwrites values of same-named parameters from `other`.
    template <class U>
    void copy_values_from(const ParamStore<U>& other) {
        for (auto& [name, p] : params_) {
            const auto& src = other.at(name);
            if (src.value.shape != p.value.shape)
                throw DimensionError("shape mismatch copying parameter " + name);
            std::copy(src.value.data.begin(), src.value.data.end(), p.value.data.begin());
        }
    }

private:
    std::map<std::string, Param<T>> params_;
    std::uint64_t step_ = 0;
};

template <class T>
Tensor<T> uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.data) x = T(lo + (hi - lo) * uniform01(rng));
    return t;
}

}  // namespace mwalk
