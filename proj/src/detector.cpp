#include "fedprop/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedprop/numeric.hpp"
#include "fedprop/rng.hpp"

namespace fedprop::detector {

namespace {

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

std::vector<fedsim::Sample> draw_batch(const std::vector<fedsim::Sample>& aux,
                                       std::size_t k, Rng& rng) {
    std::vector<std::size_t> ids(aux.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::vector<fedsim::Sample> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, aux.size() - 1);
        std::swap(ids[i], ids[pick(rng)]);
        out.push_back(aux[ids[i]]);
    }
    return out;
}

std::vector<double> update_from_batch(const fedsim::GlobalModel& snapshot,
                                      const std::vector<fedsim::Sample>& batch,
                                      const TrainingSetSpec& spec, std::uint64_t seed) {
    fedsim::ClientDataset ds;
    ds.samples = batch;
    return fedsim::local_update(snapshot, ds,
                                fedsim::LocalUpdateParams{spec.eta, spec.epochs,
                                                          spec.batch_size, seed});
}

}  // namespace

double extract_feature(const DetectorModel& model, std::span<const double> update) {
    if (model.alpha.size() != update.size())
        throw std::invalid_argument("extract_feature: width mismatch");
    return dot(model.alpha, update);
}

double confidence(const DetectorModel& model, std::span<const double> update) {
    return sigmoid(extract_feature(model, update) + model.beta);
}

LabeledUpdateSet build_training_set(const std::vector<fedsim::Sample>& aux,
                                    const fedsim::GlobalModel& snapshot,
                                    const TrainingSetSpec& spec, std::uint64_t seed) {
    if (spec.count < 10 || spec.count % 2 != 0)
        throw std::invalid_argument("training set: count must be even and >= 10");
    if (spec.example_size == 0) throw std::invalid_argument("training set: empty examples");
    if (aux.size() < spec.example_size)
        throw std::invalid_argument("training set: aux pool smaller than example size");
    if (spec.property == Property::membership &&
        spec.target.features.size() != snapshot.dims().input)
        throw std::invalid_argument("training set: target sample width mismatch");

    const std::size_t half = spec.count / 2;
    Rng rng(derive_seed(seed, 0xD1));

    // Negative membership batches must exclude the probe, so drop any copy
    // of it from the draw pool; positives re-insert it explicitly.
    std::vector<fedsim::Sample> pool;
    const std::vector<fedsim::Sample>* draws = &aux;
    if (spec.property == Property::membership) {
        pool.reserve(aux.size());
        for (const auto& s : aux)
            if (!(s == spec.target)) pool.push_back(s);
        if (pool.size() < spec.example_size)
            throw std::invalid_argument(
                "training set: aux pool (minus the target) smaller than example size");
        draws = &pool;
    }

    // parallel arrays: one batch and one labeled update per example
    std::vector<std::vector<fedsim::Sample>> batches;
    std::vector<LabeledUpdate> examples;
    batches.reserve(spec.count);
    examples.reserve(spec.count);

    auto push = [&](std::vector<fedsim::Sample> batch, std::vector<double> update,
                    bool positive) {
        batches.push_back(std::move(batch));
        examples.push_back(LabeledUpdate{std::move(update), positive});
    };

    switch (spec.property) {
        case Property::membership: {
            for (std::size_t j = 0; j < half; ++j) {
                auto batch = draw_batch(*draws, spec.example_size - 1, rng);
                batch.insert(batch.begin(), spec.target);
                auto u = update_from_batch(snapshot, batch, spec, derive_seed(seed, 1, j));
                push(std::move(batch), std::move(u), true);
            }
            for (std::size_t j = 0; j < half; ++j) {
                auto batch = draw_batch(*draws, spec.example_size, rng);
                auto u = update_from_batch(snapshot, batch, spec, derive_seed(seed, 2, j));
                push(std::move(batch), std::move(u), false);
            }
            break;
        }
        case Property::inversion: {
            // positive example is the negation of the negative one computed
            // from the very same batch
            for (std::size_t j = 0; j < half; ++j) {
                auto batch = draw_batch(aux, spec.example_size, rng);
                auto u = update_from_batch(snapshot, batch, spec, derive_seed(seed, 3, j));
                std::vector<double> neg(u.size());
                for (std::size_t i = 0; i < u.size(); ++i) neg[i] = -u[i];
                push(batch, std::move(neg), true);
                push(std::move(batch), std::move(u), false);
            }
            break;
        }
        case Property::ascent: {
            for (std::size_t j = 0; j < half; ++j) {
                auto batch = draw_batch(aux, spec.example_size, rng);
                fedsim::ClientDataset ds;
                ds.samples = batch;
                const fedsim::LocalUpdateParams lp{spec.eta, spec.epochs, spec.batch_size,
                                                   derive_seed(seed, 4, j)};
                auto honest = fedsim::local_update(snapshot, ds, lp);
                auto attacked = fedsim::apply_attack(
                    std::move(honest), fedsim::ClientRole::ascent_attacker, snapshot, ds, lp);
                push(std::move(batch), std::move(attacked), true);
            }
            for (std::size_t j = 0; j < half; ++j) {
                auto batch = draw_batch(aux, spec.example_size, rng);
                auto u = update_from_batch(snapshot, batch, spec, derive_seed(seed, 5, j));
                push(std::move(batch), std::move(u), false);
            }
            break;
        }
    }

    // 80/20 split inside each class so both halves stay balanced
    LabeledUpdateSet out;
    std::vector<std::size_t> pos_ids, neg_ids;
    for (std::size_t i = 0; i < examples.size(); ++i)
        (examples[i].positive ? pos_ids : neg_ids).push_back(i);
    const std::size_t train_per_class = (half * 4) / 5;
    if (train_per_class == half)
        throw std::invalid_argument("training set: count too small for an eval split");
    auto distribute = [&](const std::vector<std::size_t>& ids) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t i = ids[k];
            if (k < train_per_class) {
                out.train.push_back(std::move(examples[i]));
                out.train_batches.push_back(std::move(batches[i]));
            } else {
                out.eval.push_back(std::move(examples[i]));
                out.eval_batches.push_back(std::move(batches[i]));
            }
        }
    };
    distribute(pos_ids);
    distribute(neg_ids);
    return out;
}

double detector_loss(const DetectorModel& model, std::span<const LabeledUpdate> examples) {
    if (examples.empty()) throw std::invalid_argument("detector loss: no examples");
    double acc = 0.0;
    for (const auto& ex : examples) {
        const double z = extract_feature(model, ex.update) + model.beta;
        acc += softplus(z) - (ex.positive ? z : 0.0);
    }
    return acc / static_cast<double>(examples.size());
}

double detector_accuracy(const DetectorModel& model,
                         std::span<const LabeledUpdate> examples) {
    if (examples.empty()) throw std::invalid_argument("detector accuracy: no examples");
    std::size_t hits = 0;
    for (const auto& ex : examples)
        if ((confidence(model, ex.update) > 0.5) == ex.positive) ++hits;
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

DetectorModel train_detector(const LabeledUpdateSet& data,
                             const DetectorTrainParams& params, std::uint64_t seed,
                             std::size_t round) {
    if (data.train.empty()) throw std::invalid_argument("train_detector: empty train split");
    if (!(params.eta > 0.0)) throw std::invalid_argument("train_detector: eta must be > 0");
    if (params.batch_size == 0) throw std::invalid_argument("train_detector: zero batch");
    const std::size_t z = data.train.front().update.size();
    for (const auto& ex : data.train)
        if (ex.update.size() != z)
            throw std::invalid_argument("train_detector: inconsistent update widths");

    // standardize the inputs so one learning rate works at any update scale;
    // the factor is folded back into alpha below, leaving the fitted
    // function on raw updates unchanged
    double sq = 0.0;
    for (const auto& ex : data.train)
        for (double v : ex.update) sq += v * v;
    double unit = std::sqrt(sq / static_cast<double>(data.train.size() * z));
    if (!(unit > 0.0)) unit = 1.0;

    std::vector<LabeledUpdate> scaled(data.train.begin(), data.train.end());
    for (auto& ex : scaled)
        for (double& v : ex.update) v /= unit;

    DetectorModel model;
    model.round = round;
    model.alpha.assign(z, 0.0);
    model.beta = 0.0;
    model.feature_count = 1;

    Rng rng(seed);
    std::vector<std::size_t> order(scaled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> galpha(z);

    double prev_loss = detector_loss(model, scaled);
    DetectorModel accepted = model;
    std::size_t plateau = 0;
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
            const std::size_t len = std::min(params.batch_size, order.size() - start);
            std::fill(galpha.begin(), galpha.end(), 0.0);
            double gbeta = 0.0;
            for (std::size_t b = 0; b < len; ++b) {
                const LabeledUpdate& ex = scaled[order[start + b]];
                const double margin = extract_feature(model, ex.update) + model.beta;
                const double err = sigmoid(margin) - (ex.positive ? 1.0 : 0.0);
                for (std::size_t i = 0; i < z; ++i) galpha[i] += err * ex.update[i];
                gbeta += err;
            }
            const double scale = params.eta / static_cast<double>(len);
            for (std::size_t i = 0; i < z; ++i) model.alpha[i] -= scale * galpha[i];
            model.beta -= scale * gbeta;
        }

        const double loss = detector_loss(model, scaled);
        if (loss > prev_loss + params.tol) {
            model = accepted;  // keep the last epoch that did not regress
            break;
        }
        if (prev_loss - loss < params.tol) {
            if (++plateau >= 3) {
                accepted = model;
                break;
            }
        } else {
            plateau = 0;
        }
        accepted = model;
        prev_loss = loss;
    }
    for (double& a : accepted.alpha) a /= unit;
    return accepted;
}

FeatureDistributions fit_distributions(const DetectorModel& model,
                                       const LabeledUpdateSet& data) {
    std::vector<double> pos, neg;
    for (const auto& ex : data.eval)
        (ex.positive ? pos : neg).push_back(extract_feature(model, ex.update));
    if (pos.empty() || neg.empty())
        throw std::invalid_argument("fit_distributions: need eval examples of both classes");

    auto moments = [](const std::vector<double>& xs) {
        const double mu = pairwise_sum(xs) / static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mu) * (x - mu);
        var /= static_cast<double>(xs.size());
        return std::pair<double, double>{mu, std::max(std::sqrt(var), kSigmaFloor)};
    };
    const auto [mu_p, sigma_p] = moments(pos);
    const auto [mu_n, sigma_n] = moments(neg);

    FeatureDistributions out;
    out.round = model.round;
    out.mu_plus = {mu_p};
    out.sigma_plus = {sigma_p};
    out.mu_minus = {mu_n};
    out.sigma_minus = {sigma_n};
    out.ovl = compute_ovl(mu_p, sigma_p, mu_n, sigma_n);
    out.weight = 1.0 - out.ovl;
    return out;
}

double compute_ovl(double mu1, double sigma1, double mu2, double sigma2) {
    if (!std::isfinite(mu1) || !std::isfinite(mu2) || !std::isfinite(sigma1) ||
        !std::isfinite(sigma2))
        throw std::invalid_argument("compute_ovl: non-finite parameters");
    const double s1 = std::max(sigma1, kSigmaFloor);
    const double s2 = std::max(sigma2, kSigmaFloor);

    const double lo = std::min(mu1 - 8.0 * s1, mu2 - 8.0 * s2);
    const double hi = std::max(mu1 + 8.0 * s1, mu2 + 8.0 * s2);
    const std::size_t intervals = 8192;  // even, fine enough for ~1e-12 accuracy
    const double h = (hi - lo) / static_cast<double>(intervals);

    auto f = [&](double x) {
        const double p1 = std::exp(gaussian_log_pdf(x, mu1, s1));
        const double p2 = std::exp(gaussian_log_pdf(x, mu2, s2));
        return std::min(p1, p2);
    };

    double acc = f(lo) + f(hi);
    for (std::size_t i = 1; i < intervals; ++i)
        acc += f(lo + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
    const double integral = acc * h / 3.0;
    return std::clamp(integral, 0.0, 1.0);
}

}  // namespace fedprop::detector
