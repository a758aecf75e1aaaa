#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedprop/matrix.hpp"

namespace fedprop::fedsim {

// Binary rounds-by-clients schedule.  Every row holds exactly
// round(fraction * clients) ones when built through sample().
class ParticipationMatrix {
  public:
    ParticipationMatrix() = default;
    ParticipationMatrix(std::size_t rounds, std::size_t clients)
        : rounds_(rounds), clients_(clients), cells_(rounds * clients, 0) {}

    static ParticipationMatrix sample(std::size_t rounds, std::size_t clients,
                                      double fraction, std::uint64_t seed);

    std::size_t rounds() const { return rounds_; }
    std::size_t clients() const { return clients_; }

    bool at(std::size_t round, std::size_t client) const {
        return cells_[round * clients_ + client] != 0;
    }
    void set(std::size_t round, std::size_t client, bool on) {
        cells_[round * clients_ + client] = on ? 1 : 0;
    }

    std::vector<std::size_t> participants(std::size_t round) const;  // ascending ids
    std::vector<std::size_t> rounds_of(std::size_t client) const;
    std::size_t row_count_ones(std::size_t round) const;

    ParticipationMatrix prefix(std::size_t rounds) const;
    linalg::Matrix as_matrix() const;

    bool operator==(const ParticipationMatrix&) const = default;

  private:
    std::size_t rounds_ = 0;
    std::size_t clients_ = 0;
    std::vector<std::uint8_t> cells_;
};

std::size_t participants_per_round(std::size_t clients, double fraction);

}  // namespace fedprop::fedsim
