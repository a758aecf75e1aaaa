#include "fedprop/participation.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fedprop/rng.hpp"

namespace fedprop::fedsim {

std::size_t participants_per_round(std::size_t clients, double fraction) {
    if (clients == 0) throw std::invalid_argument("participation: no clients");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("participation: fraction must be in (0, 1]");
    const auto k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(clients)));
    if (k < 1 || k > clients)
        throw std::invalid_argument("participation: round(fraction * clients) out of range");
    return k;
}

ParticipationMatrix ParticipationMatrix::sample(std::size_t rounds, std::size_t clients,
                                                double fraction, std::uint64_t seed) {
    const std::size_t k = participants_per_round(clients, fraction);
    ParticipationMatrix m(rounds, clients);
    Rng rng(seed);
    std::vector<std::size_t> ids(clients);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t r = 0; r < rounds; ++r) {
        // partial Fisher-Yates: first k entries are a uniform k-subset
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, clients - 1);
            std::swap(ids[i], ids[pick(rng)]);
        }
        for (std::size_t i = 0; i < k; ++i) m.set(r, ids[i], true);
    }
    return m;
}

std::vector<std::size_t> ParticipationMatrix::participants(std::size_t round) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < clients_; ++i)
        if (at(round, i)) out.push_back(i);
    return out;
}

std::vector<std::size_t> ParticipationMatrix::rounds_of(std::size_t client) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < rounds_; ++r)
        if (at(r, client)) out.push_back(r);
    return out;
}

std::size_t ParticipationMatrix::row_count_ones(std::size_t round) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < clients_; ++i)
        if (at(round, i)) ++n;
    return n;
}

ParticipationMatrix ParticipationMatrix::prefix(std::size_t rounds) const {
    if (rounds > rounds_) throw std::invalid_argument("participation prefix too long");
    ParticipationMatrix m(rounds, clients_);
    for (std::size_t r = 0; r < rounds; ++r)
        for (std::size_t i = 0; i < clients_; ++i) m.set(r, i, at(r, i));
    return m;
}

linalg::Matrix ParticipationMatrix::as_matrix() const {
    linalg::Matrix m(rounds_, clients_);
    for (std::size_t r = 0; r < rounds_; ++r)
        for (std::size_t i = 0; i < clients_; ++i) m(r, i) = at(r, i) ? 1.0 : 0.0;
    return m;
}

}  // namespace fedprop::fedsim
