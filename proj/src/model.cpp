#include "fedprop/model.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace fedprop::fedsim {

std::size_t param_count_of(const ModelDims& d) {
    return d.hidden * d.input + d.hidden + d.classes * d.hidden + d.classes;
}

GlobalModel::GlobalModel(ModelDims dims) : dims_(dims), params_(param_count_of(dims), 0.0) {
    if (dims.input == 0 || dims.hidden == 0 || dims.classes < 2)
        throw std::invalid_argument("model: degenerate dimensions");
}

GlobalModel GlobalModel::random_init(ModelDims dims, std::uint64_t seed) {
    GlobalModel m(dims);
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto v = m.views();
    const double s1 = 1.0 / std::sqrt(static_cast<double>(dims.input));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
    for (auto& x : v.w1) x = s1 * gauss(rng);
    for (auto& x : v.w2) x = s2 * gauss(rng);
    // biases stay zero
    return m;
}

void GlobalModel::set_params(std::span<const double> p) {
    if (p.size() != params_.size()) throw std::invalid_argument("set_params: size mismatch");
    params_.assign(p.begin(), p.end());
}

void GlobalModel::add_scaled(std::span<const double> delta, double scale) {
    if (delta.size() != params_.size()) throw std::invalid_argument("add_scaled: size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] += scale * delta[i];
}

GlobalModel::Views GlobalModel::views() {
    const std::size_t n1 = dims_.hidden * dims_.input;
    const std::size_t n2 = dims_.hidden;
    const std::size_t n3 = dims_.classes * dims_.hidden;
    const std::size_t n4 = dims_.classes;
    double* base = params_.data();
    return {{base, n1}, {base + n1, n2}, {base + n1 + n2, n3}, {base + n1 + n2 + n3, n4}};
}

GlobalModel::ConstViews GlobalModel::views() const {
    const std::size_t n1 = dims_.hidden * dims_.input;
    const std::size_t n2 = dims_.hidden;
    const std::size_t n3 = dims_.classes * dims_.hidden;
    const std::size_t n4 = dims_.classes;
    const double* base = params_.data();
    return {{base, n1}, {base + n1, n2}, {base + n1 + n2, n3}, {base + n1 + n2 + n3, n4}};
}

double GlobalModel::loss_and_grad(const std::vector<Sample>& data,
                                  std::span<const std::size_t> idx,
                                  std::span<double> grad) const {
    if (idx.empty()) throw std::invalid_argument("loss: empty batch");
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != params_.size())
        throw std::invalid_argument("loss: gradient buffer size mismatch");

    const std::size_t in = dims_.input;
    const std::size_t hid = dims_.hidden;
    const std::size_t cls = dims_.classes;
    const auto v = views();

    if (want_grad)
        for (auto& g : grad) g = 0.0;
    std::span<double> gw1, gb1, gw2, gb2;
    if (want_grad) {
        gw1 = grad.subspan(0, hid * in);
        gb1 = grad.subspan(hid * in, hid);
        gw2 = grad.subspan(hid * in + hid, cls * hid);
        gb2 = grad.subspan(hid * in + hid + cls * hid, cls);
    }

    std::vector<double> h(hid), logit(cls), p(cls), dpre(hid);
    double loss = 0.0;
    for (const std::size_t si : idx) {
        const Sample& s = data.at(si);
        if (s.features.size() != in) throw std::invalid_argument("loss: feature width mismatch");
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= cls)
            throw std::invalid_argument("loss: label out of range");

        for (std::size_t j = 0; j < hid; ++j) {
            double acc = v.b1[j];
            const double* wrow = v.w1.data() + j * in;
            for (std::size_t k = 0; k < in; ++k) acc += wrow[k] * s.features[k];
            h[j] = std::tanh(acc);
        }
        double logit_max = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cls; ++c) {
            double acc = v.b2[c];
            const double* wrow = v.w2.data() + c * hid;
            for (std::size_t j = 0; j < hid; ++j) acc += wrow[j] * h[j];
            logit[c] = acc;
            logit_max = std::max(logit_max, acc);
        }
        double expsum = 0.0;
        for (std::size_t c = 0; c < cls; ++c) expsum += std::exp(logit[c] - logit_max);
        const double lse = logit_max + std::log(expsum);
        loss += lse - logit[static_cast<std::size_t>(s.label)];

        if (!want_grad) continue;
        for (std::size_t c = 0; c < cls; ++c) p[c] = std::exp(logit[c] - lse);
        for (std::size_t j = 0; j < hid; ++j) dpre[j] = 0.0;
        for (std::size_t c = 0; c < cls; ++c) {
            const double dl = p[c] - (static_cast<std::size_t>(s.label) == c ? 1.0 : 0.0);
            gb2[c] += dl;
            double* gw2row = gw2.data() + c * hid;
            const double* w2row = v.w2.data() + c * hid;
            for (std::size_t j = 0; j < hid; ++j) {
                gw2row[j] += dl * h[j];
                dpre[j] += dl * w2row[j];
            }
        }
        for (std::size_t j = 0; j < hid; ++j) {
            const double d = dpre[j] * (1.0 - h[j] * h[j]);
            gb1[j] += d;
            double* gw1row = gw1.data() + j * in;
            for (std::size_t k = 0; k < in; ++k) gw1row[k] += d * s.features[k];
        }
    }

    const double inv = 1.0 / static_cast<double>(idx.size());
    if (want_grad)
        for (auto& g : grad) g *= inv;
    return loss * inv;
}

double GlobalModel::loss(const std::vector<Sample>& data,
                         std::span<const std::size_t> idx) const {
    return loss_and_grad(data, idx, {});
}

int GlobalModel::predict(std::span<const double> features) const {
    const std::size_t in = dims_.input;
    const std::size_t hid = dims_.hidden;
    const std::size_t cls = dims_.classes;
    if (features.size() != in) throw std::invalid_argument("predict: feature width mismatch");
    const auto v = views();
    std::vector<double> h(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        double acc = v.b1[j];
        const double* wrow = v.w1.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) acc += wrow[k] * features[k];
        h[j] = std::tanh(acc);
    }
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cls; ++c) {
        double acc = v.b2[c];
        const double* wrow = v.w2.data() + c * hid;
        for (std::size_t j = 0; j < hid; ++j) acc += wrow[j] * h[j];
        if (acc > best_val) {
            best_val = acc;
            best = static_cast<int>(c);
        }
    }
    return best;
}

double GlobalModel::accuracy(const std::vector<Sample>& data) const {
    if (data.empty()) throw std::invalid_argument("accuracy: empty dataset");
    std::size_t hits = 0;
    for (const Sample& s : data)
        if (predict(s.features) == s.label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace fedprop::fedsim
