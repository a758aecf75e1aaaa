#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedprop/dataset.hpp"

namespace fedprop::fedsim {

struct ModelDims {
    std::size_t input = 2;
    std::size_t hidden = 16;
    std::size_t classes = 2;
    bool operator==(const ModelDims&) const = default;
};

// One-hidden-layer classifier: tanh hidden units, softmax cross-entropy.
// Parameters live in a single flat vector laid out as
//   [W1 (hidden x input) | b1 (hidden) | W2 (classes x hidden) | b2 (classes)]
// so a model state and the update vectors the protocol ships around are the
// same kind of object.  views() exposes the four blocks over that storage;
// writing through a view and reading params() back is exact by construction.
class GlobalModel {
  public:
    explicit GlobalModel(ModelDims dims);
    static GlobalModel random_init(ModelDims dims, std::uint64_t seed);

    const ModelDims& dims() const { return dims_; }
    std::size_t param_count() const { return params_.size(); }

    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }
    void set_params(std::span<const double> p);
    void add_scaled(std::span<const double> delta, double scale);

    struct Views {
        std::span<double> w1, b1, w2, b2;
    };
    struct ConstViews {
        std::span<const double> w1, b1, w2, b2;
    };
    Views views();
    ConstViews views() const;

    // Mean softmax cross-entropy over the indexed samples; when grad is
    // non-empty (size param_count) the mean gradient is written into it.
    double loss_and_grad(const std::vector<Sample>& data,
                         std::span<const std::size_t> idx,
                         std::span<double> grad) const;
    double loss(const std::vector<Sample>& data, std::span<const std::size_t> idx) const;

    int predict(std::span<const double> features) const;
    double accuracy(const std::vector<Sample>& data) const;

  private:
    ModelDims dims_;
    std::vector<double> params_;
};

std::size_t param_count_of(const ModelDims& dims);

}  // namespace fedprop::fedsim
