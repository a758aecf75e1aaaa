#include "fedprop/prolin.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedprop/numeric.hpp"

namespace fedprop::prolin {

namespace {

double clamp_unit(double tau) {
    return std::min(std::max(tau, kTauFloor), 1.0 - kTauFloor);
}

// Summed log-densities of client i's estimates under the positive and
// negative per-round fits, over the rounds the client took part in.
struct ClassSums {
    double pos = 0.0;
    double neg = 0.0;
};

ClassSums class_log_likelihoods(const ProlinProblem& p, const ProlinState& s,
                                std::size_t i, std::span<const std::size_t> rounds) {
    ClassSums out;
    for (std::size_t r : rounds) {
        const auto& d = p.distributions[r];
        for (std::size_t f = 0; f < p.feature_count(); ++f) {
            const double xv = s.x(r, i, f);
            out.pos += gaussian_log_pdf(xv, d.mu_plus[f], d.sigma_plus[f]);
            out.neg += gaussian_log_pdf(xv, d.mu_minus[f], d.sigma_minus[f]);
        }
    }
    return out;
}

struct Posterior {
    double wpos = 0.0;  // responsibility of the positive branch; wpos+wneg = 1
    double wneg = 0.0;
    double tau_c = 0.5;  // clamped tau actually used in the logs
};

Posterior posterior_weights(double tau, const ClassSums& ll) {
    Posterior post;
    post.tau_c = clamp_unit(tau);
    const double u = std::log(post.tau_c) + ll.pos;
    const double v = std::log1p(-post.tau_c) + ll.neg;
    const double m = log_sum_exp2(u, v);
    post.wpos = std::exp(u - m);
    post.wneg = std::exp(v - m);
    return post;
}

void validate_state(const ProlinProblem& p, const ProlinState& s) {
    if (s.tau.size() != p.client_count())
        throw std::invalid_argument("state: tau size != client count");
    if (s.x.rounds() != p.round_count() || s.x.clients() != p.client_count() ||
        s.x.features() != p.feature_count())
        throw std::invalid_argument("state: estimate tensor has wrong dimensions");
}

Gradients zero_gradients(const ProlinProblem& p) {
    return Gradients{std::vector<double>(p.client_count(), 0.0),
                     Tensor3(p.round_count(), p.client_count(), p.feature_count())};
}

}  // namespace

void validate(const ProlinProblem& p) {
    const std::size_t n = p.round_count(), t = p.feature_count();
    if (n == 0 || p.client_count() == 0)
        throw std::invalid_argument("problem: empty schedule");
    if (t == 0) throw std::invalid_argument("problem: zero feature width");
    if (p.aggregates.rows() != n)
        throw std::invalid_argument("problem: aggregate rows != schedule rounds");
    if (p.anchor.rows() != p.client_count() || p.anchor.cols() != t)
        throw std::invalid_argument("problem: anchor profile has wrong dimensions");
    if (p.distributions.size() != n)
        throw std::invalid_argument("problem: need one distribution fit per round");
    for (std::size_t r = 0; r < n; ++r) {
        const auto& d = p.distributions[r];
        if (d.mu_plus.size() != t || d.sigma_plus.size() != t ||
            d.mu_minus.size() != t || d.sigma_minus.size() != t)
            throw std::invalid_argument("problem: distribution width mismatch");
        for (std::size_t f = 0; f < t; ++f)
            if (!(d.sigma_plus[f] > 0.0) || !(d.sigma_minus[f] > 0.0))
                throw std::invalid_argument("problem: nonpositive sigma");
        if (!(d.weight >= 0.0))
            throw std::invalid_argument("problem: negative round weight");
    }
}

ProlinState initialize(const ProlinProblem& p, InitMode mode) {
    validate(p);
    const std::size_t n = p.round_count(), nc = p.client_count(), t = p.feature_count();
    ProlinState s;
    s.tau.assign(nc, 0.5);
    s.x = Tensor3(n, nc, t);

    if (mode == InitMode::warm) {
        for (std::size_t i = 0; i < nc; ++i) {
            double score = p.bias;
            for (std::size_t f = 0; f < t; ++f) score += p.anchor(i, f);
            s.tau[i] = sigmoid(score);
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i : p.participation.participants(r))
                for (std::size_t f = 0; f < t; ++f) s.x(r, i, f) = p.anchor(i, f);
    } else {
        for (std::size_t r = 0; r < n; ++r) {
            const auto members = p.participation.participants(r);
            if (members.empty()) continue;
            const double inv = 1.0 / static_cast<double>(members.size());
            for (std::size_t i : members)
                for (std::size_t f = 0; f < t; ++f)
                    s.x(r, i, f) = p.aggregates(r, f) * inv;
        }
    }
    return s;
}

LogLikelihoodTerms log_likelihood_terms(const ProlinProblem& p, const ProlinState& s,
                                        std::size_t client) {
    validate(p);
    validate_state(p, s);
    if (client >= p.client_count())
        throw std::invalid_argument("log_likelihood_terms: client out of range");
    const auto rounds = p.participation.rounds_of(client);
    const ClassSums ll = class_log_likelihoods(p, s, client, rounds);
    return LogLikelihoodTerms{ll.pos, ll.neg};
}

ComponentValues objective_components(const ProlinProblem& p, const ProlinState& s,
                                     Exec exec) {
    validate(p);
    validate_state(p, s);
    const std::size_t n = p.round_count(), nc = p.client_count(), t = p.feature_count();

    std::vector<double> ml_terms(nc, 0.0), reg_terms(nc, 0.0), lstsq_terms(n, 0.0);

    for_each_index(0, nc, exec, [&](std::size_t i) {
        const auto rounds = p.participation.rounds_of(i);
        const ClassSums ll = class_log_likelihoods(p, s, i, rounds);
        const double tc = clamp_unit(s.tau[i]);
        ml_terms[i] =
            -log_sum_exp2(std::log(tc) + ll.pos, std::log1p(-tc) + ll.neg);

        if (rounds.empty()) return;  // unobserved clients contribute nothing
        const double inv = 1.0 / static_cast<double>(rounds.size());
        double acc = 0.0;
        for (std::size_t f = 0; f < t; ++f) {
            double mean = 0.0;
            for (std::size_t r : rounds) mean += s.x(r, i, f);
            const double diff = mean * inv - p.anchor(i, f);
            acc += diff * diff;
        }
        reg_terms[i] = acc;
    });

    for_each_index(0, n, exec, [&](std::size_t r) {
        const auto members = p.participation.participants(r);
        double acc = 0.0;
        for (std::size_t f = 0; f < t; ++f) {
            double resid = p.aggregates(r, f);
            for (std::size_t i : members) resid -= s.x(r, i, f);
            acc += resid * resid;
        }
        lstsq_terms[r] = p.distributions[r].weight * acc;
    });

    return ComponentValues{pairwise_sum(ml_terms), pairwise_sum(reg_terms),
                           pairwise_sum(lstsq_terms)};
}

double objective_value(const ProlinProblem& p, const ProlinState& s,
                       const GammaWeights& gamma, Exec exec) {
    const ComponentValues c = objective_components(p, s, exec);
    if (!std::isfinite(c.ml))
        throw std::runtime_error("objective: likelihood component is not finite");
    if (!std::isfinite(c.reg))
        throw std::runtime_error("objective: anchor-consistency component is not finite");
    if (!std::isfinite(c.lstsq))
        throw std::runtime_error(
            "objective: aggregate-consistency component is not finite");
    return gamma.ml * c.ml + gamma.reg * c.reg + gamma.lstsq * c.lstsq;
}

Gradients component_gradient(const ProlinProblem& p, const ProlinState& s,
                             Component which, Exec exec) {
    validate(p);
    validate_state(p, s);
    const std::size_t n = p.round_count(), nc = p.client_count(), t = p.feature_count();
    Gradients g = zero_gradients(p);

    switch (which) {
        case Component::ml:
            for_each_index(0, nc, exec, [&](std::size_t i) {
                const auto rounds = p.participation.rounds_of(i);
                const ClassSums ll = class_log_likelihoods(p, s, i, rounds);
                const Posterior post = posterior_weights(s.tau[i], ll);
                g.tau[i] = -(post.wpos / post.tau_c - post.wneg / (1.0 - post.tau_c));
                for (std::size_t r : rounds) {
                    const auto& d = p.distributions[r];
                    for (std::size_t f = 0; f < t; ++f) {
                        const double xv = s.x(r, i, f);
                        const double sp = d.sigma_plus[f], sn = d.sigma_minus[f];
                        g.x(r, i, f) = post.wpos * (xv - d.mu_plus[f]) / (sp * sp) +
                                       post.wneg * (xv - d.mu_minus[f]) / (sn * sn);
                    }
                }
            });
            break;

        case Component::reg:
            for_each_index(0, nc, exec, [&](std::size_t i) {
                const auto rounds = p.participation.rounds_of(i);
                if (rounds.empty()) return;
                const double inv = 1.0 / static_cast<double>(rounds.size());
                for (std::size_t f = 0; f < t; ++f) {
                    double mean = 0.0;
                    for (std::size_t r : rounds) mean += s.x(r, i, f);
                    const double d = 2.0 * (mean * inv - p.anchor(i, f)) * inv;
                    for (std::size_t r : rounds) g.x(r, i, f) = d;
                }
            });
            break;

        case Component::lstsq:
            for_each_index(0, n, exec, [&](std::size_t r) {
                const auto members = p.participation.participants(r);
                const double w = p.distributions[r].weight;
                for (std::size_t f = 0; f < t; ++f) {
                    double resid = p.aggregates(r, f);
                    for (std::size_t i : members) resid -= s.x(r, i, f);
                    const double d = -2.0 * w * resid;
                    for (std::size_t i : members) g.x(r, i, f) = d;
                }
            });
            break;
    }
    return g;
}

Gradients total_gradient(const ProlinProblem& p, const ProlinState& s,
                         const GammaWeights& gamma, Exec exec) {
    const Gradients gm = component_gradient(p, s, Component::ml, exec);
    const Gradients gr = component_gradient(p, s, Component::reg, exec);
    const Gradients gl = component_gradient(p, s, Component::lstsq, exec);

    Gradients out = zero_gradients(p);
    for (std::size_t i = 0; i < out.tau.size(); ++i)
        out.tau[i] = gamma.ml * gm.tau[i];  // only ml touches tau
    auto od = out.x.data();
    const auto md = gm.x.data(), rd = gr.x.data(), ld = gl.x.data();
    for (std::size_t j = 0; j < od.size(); ++j)
        od[j] = gamma.ml * md[j] + gamma.reg * rd[j] + gamma.lstsq * ld[j];
    return out;
}

double gradient_norm(const Gradients& g) {
    std::vector<double> sq;
    sq.reserve(g.tau.size() + g.x.data().size());
    for (double v : g.tau) sq.push_back(v * v);
    for (double v : g.x.data()) sq.push_back(v * v);
    return std::sqrt(pairwise_sum(sq));
}

GammaWeights rebalance_gamma(const ProlinProblem& p, const ProlinState& s, Exec exec) {
    const double eps = 1e-12;
    const double inv_ml =
        1.0 / (gradient_norm(component_gradient(p, s, Component::ml, exec)) + eps);
    const double inv_reg =
        1.0 / (gradient_norm(component_gradient(p, s, Component::reg, exec)) + eps);
    const double inv_lstsq =
        1.0 / (gradient_norm(component_gradient(p, s, Component::lstsq, exec)) + eps);
    const double scale = 3.0 / (inv_ml + inv_reg + inv_lstsq);
    return GammaWeights{inv_ml * scale, inv_reg * scale, inv_lstsq * scale};
}

ProlinResult solve(const ProlinProblem& p, const ProlinState& init,
                   const OptimizerParams& params, Exec exec) {
    validate(p);
    validate_state(p, init);
    if (!(params.step > 0.0)) throw std::invalid_argument("solve: step must be > 0");
    if (!(params.momentum >= 0.0 && params.momentum < 1.0))
        throw std::invalid_argument("solve: momentum must lie in [0, 1)");
    if (params.max_iters == 0) throw std::invalid_argument("solve: zero iterations");
    if (!(params.gamma.ml >= 0.0 && params.gamma.reg >= 0.0 && params.gamma.lstsq >= 0.0))
        throw std::invalid_argument("solve: negative component weight");

    ProlinResult result;
    result.state = init;
    ProlinState& s = result.state;
    SolveTrace& trace = result.trace;

    GammaWeights gamma = params.gamma;
    trace.gamma_history.push_back(gamma);

    std::vector<double> vel_tau(s.tau.size(), 0.0);
    std::vector<double> vel_x(s.x.data().size(), 0.0);

    const auto weighted = [&](const ComponentValues& c) {
        return gamma.ml * c.ml + gamma.reg * c.reg + gamma.lstsq * c.lstsq;
    };

    double obj = weighted(objective_components(p, s, exec));
    trace.objective.push_back(obj);
    double window_base = obj;
    std::size_t rising = 0;  // consecutive iterations the objective went up

    // keep the lowest-objective iterate seen so a late blow-up cannot
    // overwrite a good solution
    ProlinState best = s;
    double best_obj = obj;

    for (std::size_t iter = 1; iter <= params.max_iters; ++iter) {
        const Gradients grad = total_gradient(p, s, gamma, exec);

        if (!params.freeze_tau) {
            for (std::size_t i = 0; i < s.tau.size(); ++i) {
                vel_tau[i] = params.momentum * vel_tau[i] - params.step * grad.tau[i];
                double next = s.tau[i] + vel_tau[i];
                if (next < 0.0) {
                    next = 0.0;
                    vel_tau[i] = 0.0;
                } else if (next > 1.0) {
                    next = 1.0;
                    vel_tau[i] = 0.0;
                }
                s.tau[i] = next;
            }
        }
        auto xs = s.x.data();
        const auto gs = grad.x.data();
        for (std::size_t j = 0; j < xs.size(); ++j) {
            vel_x[j] = params.momentum * vel_x[j] - params.step * gs[j];
            xs[j] += vel_x[j];
        }

        const double prev = obj;
        obj = weighted(objective_components(p, s, exec));
        trace.objective.push_back(obj);
        trace.iterations = iter;

        if (!std::isfinite(obj)) {
            trace.diverged = true;
            break;
        }
        if (obj < best_obj) {
            best = s;
            best_obj = obj;
        }
        if (obj > prev) {
            if (++rising >= params.divergence_patience) {
                trace.diverged = true;  // kept climbing for the whole budget
                break;
            }
        } else {
            rising = 0;
        }

        if (params.gamma_every != 0 && iter % params.gamma_every == 0) {
            if (std::abs(obj - window_base) <=
                params.rel_tol * (1.0 + std::abs(window_base))) {
                trace.converged = true;
                break;
            }
            if (params.dynamic_gamma) {
                gamma = rebalance_gamma(p, s, exec);
                trace.gamma_history.push_back(gamma);
                // the objective scale just changed; rebase the comparisons
                obj = weighted(objective_components(p, s, exec));
                best_obj = weighted(objective_components(p, best, exec));
                rising = 0;
            }
            window_base = obj;
        }
    }
    s = best;
    return result;
}

reconstruct::Decision to_decision(const ProlinState& s, double threshold) {
    reconstruct::Decision d;
    d.method = reconstruct::Method::prolin;
    d.tau = s.tau;
    d.threshold = threshold;
    d.labels.resize(s.tau.size());
    for (std::size_t i = 0; i < s.tau.size(); ++i) d.labels[i] = s.tau[i] > threshold;
    return d;
}

reconstruct::Decision top_k_decision(const ProlinState& s, std::size_t k) {
    if (k > s.tau.size())
        throw std::invalid_argument("top_k_decision: k exceeds client count");
    std::vector<std::size_t> order(s.tau.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return s.tau[a] > s.tau[b];
    });

    reconstruct::Decision d;
    d.method = reconstruct::Method::prolin;
    d.tau = s.tau;
    // informational: the confidence of the last client that made the cut
    d.threshold = (k == 0) ? 1.0 : s.tau[order[k - 1]];
    d.labels.assign(s.tau.size(), false);
    for (std::size_t j = 0; j < k; ++j) d.labels[order[j]] = true;
    return d;
}

}  // namespace fedprop::prolin
