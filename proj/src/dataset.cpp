#include "fedprop/dataset.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace fedprop::fedsim {

BlobTask::BlobTask(const BlobTaskParams& params, std::uint64_t seed) : params_(params) {
    if (params.dim == 0) throw std::invalid_argument("blob task: dim must be positive");
    if (!(params.separation >= 0.0))
        throw std::invalid_argument("blob task: separation must be >= 0");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    axis_.resize(params.dim);
    double norm = 0.0;
    while (norm < 1e-12) {
        norm = 0.0;
        for (auto& x : axis_) {
            x = gauss(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
    }
    for (auto& x : axis_) x /= norm;
}

Sample BlobTask::draw(Rng& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    Sample s;
    s.label = coin(rng);
    const double shift = (s.label == 1 ? 0.5 : -0.5) * params_.separation;
    s.features.resize(params_.dim);
    for (std::size_t k = 0; k < params_.dim; ++k)
        s.features[k] = shift * axis_[k] + gauss(rng);
    return s;
}

std::vector<Sample> BlobTask::draw_many(std::size_t count, Rng& rng) const {
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(draw(rng));
    return out;
}

std::vector<ClientDataset> split_among_clients(const std::vector<Sample>& pool,
                                               std::size_t clients) {
    if (clients == 0) throw std::invalid_argument("split: no clients");
    if (pool.size() % clients != 0)
        throw std::invalid_argument("split: pool size not divisible by client count");
    const std::size_t per = pool.size() / clients;
    std::vector<ClientDataset> out(clients);
    for (std::size_t i = 0; i < clients; ++i) {
        out[i].client_id = i;
        out[i].samples.assign(pool.begin() + i * per, pool.begin() + (i + 1) * per);
    }
    return out;
}

}  // namespace fedprop::fedsim
