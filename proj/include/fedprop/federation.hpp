#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedprop/dataset.hpp"
#include "fedprop/model.hpp"
#include "fedprop/parallel.hpp"
#include "fedprop/participation.hpp"

namespace fedprop::fedsim {

// honest covers property-negative clients; member_positive trains honestly
// but holds the probe sample; the two attacker roles tamper with the update
// they send.
enum class ClientRole { honest, member_positive, inversion_attacker, ascent_attacker };

inline bool positive_role(ClientRole r) { return r != ClientRole::honest; }

struct LocalUpdateParams {
    double eta = 0.1;
    std::size_t epochs = 1;
    std::size_t batch_size = 10;
    std::uint64_t seed = 0;
};

// One local pass of minibatch SGD from the given model state; returns the
// parameter delta and leaves the caller's model untouched.
std::vector<double> local_update(const GlobalModel& model, const ClientDataset& data,
                                 const LocalUpdateParams& params);

// What actually goes onto the wire for this client.  Honest roles pass the
// update through; inversion flips its sign; ascent reruns the local pass
// with sign-flipped steps (identical to descent with -eta).
std::vector<double> apply_attack(std::vector<double> update, ClientRole role,
                                 const GlobalModel& model, const ClientDataset& data,
                                 const LocalUpdateParams& params);

struct RoundRecord {
    std::size_t round = 0;
    std::vector<std::size_t> participants;  // ascending client ids
    std::vector<double> aggregate;          // unnormalized sum of sent updates
    std::vector<double> snapshot;           // global params before the round
};

// Everything the aggregation server (the adversary here) legitimately sees.
// Reconstruction code takes this type and nothing else; per-client updates
// live only in GroundTruth, which exists for evaluation and tests.
struct AttackerView {
    ModelDims dims;
    ParticipationMatrix participation;
    std::vector<RoundRecord> rounds;

    AttackerView prefix(std::size_t round_count) const;
};

struct GroundTruth {
    std::vector<ClientRole> roles;
    // updates[r][j] is the sent update of rounds[r].participants[j]
    std::vector<std::vector<std::vector<double>>> updates;
};

struct FederationConfig {
    std::size_t rounds = 120;
    std::size_t clients = 20;
    double participation_fraction = 0.2;
    ModelDims dims;
    double eta = 0.1;
    std::size_t epochs = 1;
    std::size_t batch_size = 10;
    // When set, each round's aggregate is produced by the masked fixed-point
    // protocol instead of a plain float sum.
    bool use_secagg = false;
    std::uint64_t secagg_scale = std::uint64_t{1} << 16;
};

struct FederationResult {
    AttackerView view;
    GroundTruth truth;
    GlobalModel final_model;
};

// Client updates within a round run concurrently; the aggregate is summed
// in ascending client order afterwards, so results do not depend on Exec.
FederationResult run_federation(const FederationConfig& config,
                                const std::vector<ClientDataset>& datasets,
                                const std::vector<ClientRole>& roles, std::uint64_t seed,
                                Exec exec = Exec::parallel);

}  // namespace fedprop::fedsim
