#pragma once

#include "hemlets/error.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace hemlets {

/// Adam with bias correction. Moments have the shape of the parameters.
struct AdamState {
    std::vector<double> first;
    std::vector<double> second;
    std::size_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t parameter_count, double lr = 1e-3)
        : first(parameter_count, 0.0)
        , second(parameter_count, 0.0)
        , learning_rate(lr)
    {
    }

    void update(std::span<double> params, std::span<const double> grad)
    {
        if (params.size() != first.size() || grad.size() != first.size())
            throw ShapeMismatchError("adam: parameter and moment sizes differ");
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            first[i] = beta1 * first[i] + (1.0 - beta1) * grad[i];
            second[i] = beta2 * second[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= learning_rate * (first[i] / c1) / (std::sqrt(second[i] / c2) + epsilon);
        }
    }
};

} // namespace hemlets
