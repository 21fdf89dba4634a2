#include "r3split/privacy.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace r3split::privacy {

void PrivacyParams::validate() const {
    if (!(eps_p > 0.0)) throw std::invalid_argument("privacy params: eps_p must be > 0");
    if (!(eps_l > 0.0)) throw std::invalid_argument("privacy params: eps_l must be > 0");
    if (k < 1 || k > n)
        throw std::invalid_argument("privacy params: need 1 <= k <= n, got k=" +
                                    std::to_string(k) + " n=" + std::to_string(n));
    if (!(clip_c > 0.0)) throw std::invalid_argument("privacy params: clip constant must be > 0");
}

ClipResult clip_k_detail(std::span<const double> v, double c, std::size_t k, bool use_abs) {
    if (k > v.size())
        throw std::invalid_argument("clip_k: k=" + std::to_string(k) + " exceeds length " +
                                    std::to_string(v.size()));
    ClipResult result;
    result.values.assign(v.size(), 0.0);
    if (k == 0) return result;

    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t i) { return use_abs ? std::abs(v[i]) : v[i]; };
    // Stable top-k: ties resolved toward the lower index.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
    order.resize(k);
    std::sort(order.begin(), order.end());

    for (std::size_t i : order) {
        if (use_abs) {
            const double mag = std::min(std::abs(v[i]), c);
            result.values[i] = v[i] < 0.0 ? -mag : mag;
        } else {
            result.values[i] = std::clamp(v[i], 0.0, c);
        }
    }
    result.retained = std::move(order);
    return result;
}

std::vector<double> clip_k(std::span<const double> v, double c, std::size_t k, bool use_abs) {
    return clip_k_detail(v, c, k, use_abs).values;
}

namespace {

std::vector<double> response_probability_impl(std::span<const double> magnitudes,
                                              double eps_p, std::size_t k,
                                              const char* what) {
    if (!(eps_p > 0.0)) throw std::invalid_argument(std::string(what) + ": eps_p must be > 0");
    if (k < 1) throw std::invalid_argument(std::string(what) + ": k must be >= 1");
    double max_mag = 0.0;
    for (double m : magnitudes) {
        if (m < 0.0)
            throw std::invalid_argument(std::string(what) + ": magnitudes must be nonnegative");
        max_mag = std::max(max_mag, m);
    }
    const double e = std::exp(eps_p / static_cast<double>(k));
    const double top = e / (1.0 + e);
    std::vector<double> p(magnitudes.size(), 0.5);
    if (max_mag == 0.0) return p;
    for (std::size_t i = 0; i < magnitudes.size(); ++i)
        p[i] = 0.5 + (magnitudes[i] / max_mag) * (top - 0.5);
    return p;
}

} // namespace

std::vector<double> response_probability(std::span<const double> magnitudes, double eps_p,
                                         std::size_t k) {
    return response_probability_impl(magnitudes, eps_p, k, "response_probability");
}

std::vector<double> response_probability_dynamic(std::span<const double> importance,
                                                 double eps_p, std::size_t k) {
    return response_probability_impl(importance, eps_p, k, "response_probability_dynamic");
}

double laplace_scale(const PrivacyParams& params) {
    params.validate();
    return 2.0 * static_cast<double>(params.k) * params.clip_c / params.eps_l;
}

std::vector<double> dynamic_laplace_scales(std::span<const double> importance,
                                           const PrivacyParams& params) {
    const double base = laplace_scale(params);
    const std::size_t n = importance.size();
    std::vector<double> scales(n, base);
    if (n == 0) return scales;
    double sum = 0.0, max_u = 0.0;
    for (double u : importance) {
        if (u < 0.0)
            throw std::invalid_argument("dynamic_laplace_scales: importance must be nonnegative");
        sum += u;
        max_u = std::max(max_u, u);
    }
    if (sum <= 0.0) return scales; // no signal yet: uniform allocation
    const double floor = DBL_EPSILON * max_u;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = std::max(importance[i], floor);
        scales[i] = base * sum / (static_cast<double>(n) * u);
    }
    return scales;
}

namespace {

bool response_keeps(RngState& rng, double p_i, ResponseDraw draw) {
    const double r = draw == ResponseDraw::uniform ? rng.uniform() : rng.normal();
    return r < p_i;
}

void check_p(std::span<const double> p, const PrivacyParams& params, const char* what) {
    if (p.size() != params.n)
        throw std::invalid_argument(std::string(what) + ": probability vector length " +
                                    std::to_string(p.size()) + " != n=" +
                                    std::to_string(params.n));
}

double scale_for(std::span<const double> scales, double base, std::size_t i) {
    return scales.empty() ? base : scales[i];
}

} // namespace

ForwardResult r3elu_forward(std::span<const double> v, const PrivacyParams& params,
                            std::span<const double> p, RngState& rng,
                            const TunnelOptions& opts, std::span<const double> scales) {
    params.validate();
    check_p(p, params, "r3elu_forward");
    if (v.size() != params.n)
        throw std::invalid_argument("r3elu_forward: input length " + std::to_string(v.size()) +
                                    " != n=" + std::to_string(params.n));
    if (!scales.empty() && scales.size() != params.n)
        throw std::invalid_argument("r3elu_forward: scale vector length mismatch");

    ClipResult clipped = clip_k_detail(v, params.clip_c, params.k, /*use_abs=*/false);
    const double base = laplace_scale(params);

    ForwardResult result;
    result.output.assign(v.size(), 0.0);
    result.states.state.assign(v.size(), 0);
    result.states.retained = clipped.retained;
    for (std::size_t i : clipped.retained) {
        if (response_keeps(rng, p[i], opts.draw)) {
            result.states.state[i] = 1;
            const double z = rng.laplace(0.0, scale_for(scales, base, i));
            result.output[i] = std::max(clipped.values[i] + z, 0.0);
        }
    }
    return result;
}

BackwardResult r3elu_backward(std::span<const double> delta, const PrivacyParams& params,
                              std::span<const double> p, RngState& rng,
                              const TunnelOptions& opts, std::span<const double> scales) {
    params.validate();
    check_p(p, params, "r3elu_backward");
    if (delta.size() != params.n)
        throw std::invalid_argument("r3elu_backward: input length " +
                                    std::to_string(delta.size()) + " != n=" +
                                    std::to_string(params.n));
    if (!scales.empty() && scales.size() != params.n)
        throw std::invalid_argument("r3elu_backward: scale vector length mismatch");

    ClipResult clipped = clip_k_detail(delta, params.clip_c, params.k, /*use_abs=*/true);
    const double base = laplace_scale(params);

    BackwardResult result;
    result.output.assign(delta.size(), 0.0);
    result.states.state.assign(delta.size(), 0);
    result.states.retained = clipped.retained;

    std::vector<bool> is_retained(delta.size(), false);
    for (std::size_t i : clipped.retained) is_retained[i] = true;

    for (std::size_t i = 0; i < delta.size(); ++i) {
        double kept = 0.0;
        if (is_retained[i] && response_keeps(rng, p[i], opts.draw)) {
            result.states.state[i] = 1;
            kept = clipped.values[i];
        }
        if (opts.backward_noise_all || result.states.state[i] == 1) {
            kept += rng.laplace(0.0, scale_for(scales, base, i));
        }
        result.output[i] = kept;
    }
    return result;
}

double per_iteration_budget(double eps_total, std::size_t i) {
    if (i < 1) throw std::invalid_argument("per_iteration_budget: iteration index must be >= 1");
    if (!(eps_total > 0.0))
        throw std::invalid_argument("per_iteration_budget: eps_total must be > 0");
    if (i > 4000) return 0.0; // below double underflow; schedule is dead here
    return std::ldexp(eps_total, -static_cast<int>(i));
}

double strong_composition(double eps_step, double gamma, std::size_t t_count, double delta) {
    if (!(eps_step > 0.0)) throw std::invalid_argument("strong_composition: eps must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("strong_composition: gamma must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("strong_composition: delta must be in (0,1)");
    if (t_count == 0) return 0.0;
    const double ge = gamma * eps_step;
    const double t = static_cast<double>(t_count);
    return ge * std::sqrt(2.0 * t * std::log(1.0 / delta)) + ge * t * std::expm1(ge);
}

std::pair<double, double> budget_split(double eps_total_per_step, double p_ratio) {
    if (!(eps_total_per_step > 0.0))
        throw std::invalid_argument("budget_split: eps must be > 0");
    if (!(p_ratio > 0.0 && p_ratio < 1.0))
        throw std::invalid_argument("budget_split: ratio must be in (0,1)");
    return {eps_total_per_step * p_ratio, eps_total_per_step * (1.0 - p_ratio)};
}

Schedule schedule_from_string(const std::string& s) {
    if (s == "fixed") return Schedule::fixed_step;
    if (s == "halving") return Schedule::halving;
    throw std::invalid_argument("unknown schedule '" + s + "' (expected fixed|halving)");
}

std::string to_string(Schedule s) {
    return s == Schedule::fixed_step ? "fixed" : "halving";
}

BudgetAccountant::BudgetAccountant(std::string party, double eps_total, double gamma,
                                   std::size_t max_iterations, Schedule schedule, double delta)
    : party_(std::move(party)),
      eps_total_(eps_total),
      gamma_(gamma),
      max_iterations_(max_iterations),
      schedule_(schedule),
      delta_(delta) {
    if (!(eps_total > 0.0)) throw std::invalid_argument("accountant: eps_total must be > 0");
    if (schedule == Schedule::halving && !std::isfinite(eps_total))
        throw std::invalid_argument("accountant: halving schedule needs a finite eps_total");
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::invalid_argument("accountant: gamma must be in (0,1]");
}

double BudgetAccountant::step_budget(std::size_t iteration) const {
    if (schedule_ == Schedule::halving) return per_iteration_budget(eps_total_, iteration);
    return exhausted_ ? 0.0 : eps_total_;
}

bool BudgetAccountant::charge(std::size_t iteration, double eps_p, double eps_l) {
    const long double amount = static_cast<long double>(eps_p) + static_cast<long double>(eps_l);
    if (schedule_ == Schedule::fixed_step) {
        // Naive sequential composition against the cap, amplified by the
        // batch sampling ratio. A non-finite eps_total means no cap.
        const long double next = spent_ + static_cast<long double>(gamma_) * amount;
        if (std::isfinite(eps_total_) && next > static_cast<long double>(eps_total_)) {
            exhausted_ = true;
            return false;
        }
        spent_ = next;
    } else {
        spent_ += amount;
    }
    charges_ += 1;
    entries_.push_back({iteration, party_, eps_p, eps_l, static_cast<double>(spent_), schedule_});
    return true;
}

double BudgetAccountant::strong_composition_total(double eps_step) const {
    return strong_composition(eps_step, gamma_, charges_, delta_);
}

std::string BudgetAccountant::ledger_csv_header() {
    return "iteration,party,eps_p_spent,eps_l_spent,cumulative,schedule\n";
}

void BudgetAccountant::append_ledger_csv(std::string& out) const {
    char buf[192];
    for (const auto& e : entries_) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.12g,%.12g,%.12g,%s\n", e.iteration,
                      e.party.c_str(), e.eps_p, e.eps_l, e.cumulative,
                      to_string(e.schedule).c_str());
        out += buf;
    }
}

std::string BudgetAccountant::ledger_csv() const {
    std::string out = ledger_csv_header();
    append_ledger_csv(out);
    return out;
}

} // namespace r3split::privacy
