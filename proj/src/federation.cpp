#include "fedprop/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedprop/numeric.hpp"
#include "fedprop/rng.hpp"
#include "fedprop/secagg.hpp"

namespace fedprop::fedsim {

namespace {

// Shared SGD walk for honest descent (direction +1) and gradient-ascent
// tampering (direction -1): w <- w - direction * eta * grad.
std::vector<double> run_local_sgd(const GlobalModel& model, const ClientDataset& data,
                                  const LocalUpdateParams& params, double direction) {
    if (!(params.eta > 0.0) || !std::isfinite(params.eta))
        throw std::invalid_argument("local update: eta must be positive and finite");
    if (params.epochs == 0) throw std::invalid_argument("local update: zero epochs");
    if (params.batch_size == 0) throw std::invalid_argument("local update: zero batch size");
    if (data.samples.empty()) throw std::invalid_argument("local update: empty dataset");

    GlobalModel work = model;
    Rng rng(params.seed);
    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(work.param_count());

    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
            const std::size_t len = std::min(params.batch_size, order.size() - start);
            work.loss_and_grad(data.samples,
                               std::span<const std::size_t>(order).subspan(start, len),
                               grad);
            work.add_scaled(grad, -direction * params.eta);
        }
    }

    std::vector<double> delta(work.param_count());
    for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] = work.params()[i] - model.params()[i];
    if (!all_finite(delta))
        throw std::runtime_error("local update diverged to non-finite parameters");
    return delta;
}

}  // namespace

std::vector<double> local_update(const GlobalModel& model, const ClientDataset& data,
                                 const LocalUpdateParams& params) {
    return run_local_sgd(model, data, params, +1.0);
}

std::vector<double> apply_attack(std::vector<double> update, ClientRole role,
                                 const GlobalModel& model, const ClientDataset& data,
                                 const LocalUpdateParams& params) {
    switch (role) {
        case ClientRole::honest:
        case ClientRole::member_positive:
            return update;
        case ClientRole::inversion_attacker:
            for (auto& x : update) x = -x;
            return update;
        case ClientRole::ascent_attacker:
            return run_local_sgd(model, data, params, -1.0);
    }
    throw std::invalid_argument("apply_attack: unknown role");
}

AttackerView AttackerView::prefix(std::size_t round_count) const {
    if (round_count > rounds.size())
        throw std::invalid_argument("attacker view prefix too long");
    AttackerView out;
    out.dims = dims;
    out.participation = participation.prefix(round_count);
    out.rounds.assign(rounds.begin(), rounds.begin() + round_count);
    return out;
}

FederationResult run_federation(const FederationConfig& config,
                                const std::vector<ClientDataset>& datasets,
                                const std::vector<ClientRole>& roles, std::uint64_t seed,
                                Exec exec) {
    if (config.rounds == 0) throw std::invalid_argument("federation: zero rounds");
    if (datasets.size() != config.clients)
        throw std::invalid_argument("federation: dataset count != client count");
    if (roles.size() != config.clients)
        throw std::invalid_argument("federation: role count != client count");

    const std::size_t k = participants_per_round(config.clients, config.participation_fraction);

    FederationResult result{
        AttackerView{config.dims,
                     ParticipationMatrix::sample(config.rounds, config.clients,
                                                 config.participation_fraction,
                                                 derive_seed(seed, 0xA11)),
                     {}},
        GroundTruth{roles, {}},
        GlobalModel::random_init(config.dims, derive_seed(seed, 0xB22))};
    GlobalModel& model = result.final_model;
    const std::size_t z = model.param_count();

    result.view.rounds.reserve(config.rounds);
    result.truth.updates.resize(config.rounds);

    for (std::size_t r = 0; r < config.rounds; ++r) {
        const std::vector<std::size_t> parts = result.view.participation.participants(r);
        std::vector<std::vector<double>> updates(parts.size());

        for_each_index(0, parts.size(), exec, [&](std::size_t j) {
            const std::size_t client = parts[j];
            const LocalUpdateParams lp{config.eta, config.epochs, config.batch_size,
                                       derive_seed(seed, r + 1, client)};
            std::vector<double> u = local_update(model, datasets[client], lp);
            updates[j] = apply_attack(std::move(u), roles[client], model,
                                      datasets[client], lp);
        });

        // participants() returns ascending ids, so this sum has a fixed order
        std::vector<double> aggregate(z, 0.0);
        if (config.use_secagg) {
            double max_abs = 0.0;
            for (const auto& u : updates)
                for (double x : u) max_abs = std::max(max_abs, std::abs(x));
            const std::uint64_t p =
                secagg::choose_modulus(max_abs, config.secagg_scale, parts.size());
            const secagg::MaskSet masks =
                secagg::generate_masks(parts, z, p, derive_seed(seed, 0xC33, r));
            std::vector<secagg::MaskedUpdate> masked;
            masked.reserve(parts.size());
            for (std::size_t j = 0; j < parts.size(); ++j) {
                const auto enc = secagg::encode_fixed_point(updates[j], config.secagg_scale,
                                                            p, parts.size());
                masked.push_back(secagg::mask_update(enc, masks, parts[j], r));
            }
            aggregate = secagg::decode_fixed_point(secagg::aggregate_masked(masked, masks),
                                                   config.secagg_scale, p);
        } else {
            for (const auto& u : updates)
                for (std::size_t i = 0; i < z; ++i) aggregate[i] += u[i];
        }

        result.view.rounds.push_back(RoundRecord{
            r, parts, aggregate,
            std::vector<double>(model.params().begin(), model.params().end())});
        result.truth.updates[r] = std::move(updates);

        model.add_scaled(aggregate, 1.0 / static_cast<double>(k));
        if (!all_finite(model.params()))
            throw std::runtime_error("federation diverged at round " + std::to_string(r));
    }

    return result;
}

}  // namespace fedprop::fedsim
