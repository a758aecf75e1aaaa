#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedprop/rng.hpp"

namespace fedprop::fedsim {

struct Sample {
    std::vector<double> features;
    int label = 0;
    bool operator==(const Sample&) const = default;
};

struct ClientDataset {
    std::size_t client_id = 0;
    std::vector<Sample> samples;
};

struct BlobTaskParams {
    std::size_t dim = 8;
    double separation = 4.0;  // distance between the two class means
    bool operator==(const BlobTaskParams&) const = default;
};

// Two-class Gaussian blobs with a task-specific random axis.  The geometry
// is fixed once per experiment seed; every draw afterwards is iid.
class BlobTask {
  public:
    BlobTask(const BlobTaskParams& params, std::uint64_t seed);

    Sample draw(Rng& rng) const;
    std::vector<Sample> draw_many(std::size_t count, Rng& rng) const;
    const BlobTaskParams& params() const { return params_; }

  private:
    BlobTaskParams params_;
    std::vector<double> axis_;  // unit vector between the class means
};

std::vector<ClientDataset> split_among_clients(const std::vector<Sample>& pool,
                                               std::size_t clients);

}  // namespace fedprop::fedsim
