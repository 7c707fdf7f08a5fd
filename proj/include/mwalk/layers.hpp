#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mwalk/autodiff.hpp"
#include "mwalk/errors.hpp"
#include "mwalk/tensor.hpp"

namespace mwalk {

enum class Activation { ReLU, Tanh, Linear };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Linear: return "linear";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "linear") return Activation::Linear;
    throw ParameterError("unknown activation: " + s);
}

template <class T>
Var activate(Tape<T>& tape, Var x, Activation a) {
    switch (a) {
        case Activation::ReLU: return ops::relu(tape, x);
        case Activation::Tanh: return ops::tanh(tape, x);
        case Activation::Linear: return x;
    }
    return x;
}

template <class T>
Tensor<T> glorot(std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    return uniform_tensor<T>({in, out}, -limit, limit, rng);
}

/// Fully-connected stack: hidden layers use `hidden_act`, the last layer `output_act`.
template <class T>
struct Fcn {
    struct Layer {
        Param<T>* W;
        Param<T>* b;
    };
    std::vector<Layer> layers;
    Activation hidden_act = Activation::ReLU;
    Activation output_act = Activation::Linear;

    std::size_t input_width() const { return layers.front().W->value.shape[0]; }
    std::size_t output_width() const { return layers.back().W->value.shape[1]; }

    /// widths = {in, hidden..., out}; parameters are registered as prefix/W0, prefix/b0, ...
    static Fcn create(ParamStore<T>& store, const std::string& prefix, const std::vector<std::size_t>& widths,
                      Activation hidden, Activation output, Rng& rng) {
        if (widths.size() < 2) throw ParameterError(prefix + ": an FCN needs at least one layer");
        Fcn f;
        f.hidden_act = hidden;
        f.output_act = output;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            auto& W = store.add(prefix + "/W" + std::to_string(l), glorot<T>(widths[l], widths[l + 1], rng));
            auto& b = store.add(prefix + "/b" + std::to_string(l), Tensor<T>({widths[l + 1]}));
            f.layers.push_back({&W, &b});
        }
        return f;
    }

    /// Rebinds to same-named parameters of another store (e.g. a float64 copy).
    static Fcn bind(ParamStore<T>& store, const std::string& prefix, std::size_t depth, Activation hidden,
                    Activation output) {
        Fcn f;
        f.hidden_act = hidden;
        f.output_act = output;
        for (std::size_t l = 0; l < depth; ++l)
            f.layers.push_back(
                {&store.at(prefix + "/W" + std::to_string(l)), &store.at(prefix + "/b" + std::to_string(l))});
        return f;
    }

    Var forward(Tape<T>& tape, Var x) const {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            x = ops::linear(tape, *layers[l].W, *layers[l].b, x);
            x = activate(tape, x, l + 1 == layers.size() ? output_act : hidden_act);
        }
        return x;
    }
};

template <class T>
ops::GruParams<T> create_gru(ParamStore<T>& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                             Rng& rng) {
    ops::GruParams<T> p;
    p.Wx = &store.add(prefix + "/Wx", glorot<T>(input, 3 * hidden, rng));
    p.Uzr = &store.add(prefix + "/Uzr", glorot<T>(hidden, 2 * hidden, rng));
    p.Uh = &store.add(prefix + "/Uh", glorot<T>(hidden, hidden, rng));
    p.b = &store.add(prefix + "/b", Tensor<T>({3 * hidden}));
    return p;
}

template <class T>
ops::GruParams<T> bind_gru(ParamStore<T>& store, const std::string& prefix) {
    return {&store.at(prefix + "/Wx"), &store.at(prefix + "/Uzr"), &store.at(prefix + "/Uh"),
            &store.at(prefix + "/b")};
}

/// Element-wise logistic function, kept strictly inside (0, 1).
template <class T>
std::vector<T> sigmoid_vec(const std::vector<T>& scores) {
    const T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    std::vector<T> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        out[i] = std::clamp(ops::sigmoid_scalar(scores[i]), lo, hi);
    return out;
}

/// exp(u_i / tau) / sum_j exp(u_j / tau), evaluated after subtracting the maximum.
template <class T>
std::vector<T> softmax_tau(const std::vector<T>& scores, double tau) {
    if (!(tau > 0)) throw ParameterError("softmax temperature must be positive");
    if (scores.empty()) throw ParameterError("softmax of an empty vector");
    const T mx = *std::max_element(scores.begin(), scores.end());
    std::vector<T> out(scores.size());
    T sum = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - mx) / T(tau));
        sum += out[i];
    }
    if (scores.size() == 1) return {T(1)};
    const T lo = std::numeric_limits<T>::min();
    for (auto& p : out) p = std::max(p / sum, lo);
    return out;
}

}  // namespace mwalk
