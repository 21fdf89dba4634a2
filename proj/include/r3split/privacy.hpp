#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "r3split/numerics.hpp"

namespace r3split::privacy {

// Budgets and clipping constants for one tunnel direction.
// eps_p drives the randomized response, eps_l the Laplace stage; k and
// clip_c bound the sensitivity of the clipped vector at 2*k*clip_c.
struct PrivacyParams {
    double eps_p = 0.5;
    double eps_l = 0.5;
    std::size_t k = 1;
    double clip_c = 1.0;
    std::size_t n = 1; // cut-layer width

    void validate() const; // throws std::invalid_argument
};

// Binary activation states after randomized response, plus the retained
// top-k index set.
struct ActivationStateVector {
    std::vector<std::uint8_t> state;     // s_i in {0,1}
    std::vector<std::size_t> retained;   // h: indices of the top-k selection
};

// Which distribution the response comparison draw r uses. The stated
// retention probabilities are exact under the uniform draw; the normal draw
// reproduces the procedure text verbatim and is kept selectable.
enum class ResponseDraw { uniform, normal };

struct TunnelOptions {
    ResponseDraw draw = ResponseDraw::uniform;
    // Backward: add Laplace noise on every coordinate (procedure form) or
    // only on coordinates kept by the response stage (definition form).
    bool backward_noise_all = true;
};

struct ClipResult {
    std::vector<double> values;
    std::vector<std::size_t> retained; // selected top-k indices, ascending
};

// Top-k selection + clamp. use_abs=false (forward): k largest by value,
// clamped into [0, c]. use_abs=true (backward): k largest by magnitude,
// magnitudes clamped into [0, c], signs preserved. Everything else is 0.
// Throws if k > v.size().
std::vector<double> clip_k(std::span<const double> v, double c, std::size_t k, bool use_abs);
ClipResult clip_k_detail(std::span<const double> v, double c, std::size_t k, bool use_abs);

// p_i = 1/2 + (m_i/max|m|) * (e^{eps_p/k}/(1+e^{eps_p/k}) - 1/2).
// All-zero magnitudes give p_i = 1/2 everywhere. Throws on eps_p <= 0.
std::vector<double> response_probability(std::span<const double> magnitudes, double eps_p,
                                         std::size_t k);

// Same mapping driven by a nonnegative importance vector instead of the
// clipped magnitudes.
std::vector<double> response_probability_dynamic(std::span<const double> importance,
                                                 double eps_p, std::size_t k);

// 2*k*clip_c / eps_l.
double laplace_scale(const PrivacyParams& params);

// Per-neuron Laplace scales under importance-driven budget allocation:
// scale_i = base * sum(U) / (n * U_i), which reduces to the uniform scale
// when importance is flat. An all-zero U falls back to uniform scales;
// individual zeros are floored at DBL_EPSILON * max(U).
std::vector<double> dynamic_laplace_scales(std::span<const double> importance,
                                           const PrivacyParams& params);

struct ForwardResult {
    std::vector<double> output; // smashed activations, nonnegative
    ActivationStateVector states;
};

// Forward tunnel: clip-k, per-position randomized response on the retained
// set, then max(value + Laplace, 0) on activated positions. Non-retained
// positions stay 0. `scales` optionally overrides the uniform Laplace scale
// per neuron (dynamic allocation); empty means uniform.
ForwardResult r3elu_forward(std::span<const double> v, const PrivacyParams& params,
                            std::span<const double> p, RngState& rng,
                            const TunnelOptions& opts = {},
                            std::span<const double> scales = {});

struct BackwardResult {
    std::vector<double> output; // perturbed partial loss, any sign
    ActivationStateVector states;
};

// Backward tunnel: clip-k by magnitude with signs kept, randomized response
// on the retained set, then Laplace noise on every coordinate (or on kept
// coordinates only, per opts.backward_noise_all).
BackwardResult r3elu_backward(std::span<const double> delta, const PrivacyParams& params,
                              std::span<const double> p, RngState& rng,
                              const TunnelOptions& opts = {},
                              std::span<const double> scales = {});

// eps_total / 2^i for the i-th iteration (i >= 1).
double per_iteration_budget(double eps_total, std::size_t i);

// gamma*eps*sqrt(2*T*ln(1/delta)) + gamma*eps*T*(e^{gamma*eps} - 1).
double strong_composition(double eps_step, double gamma, std::size_t t_count, double delta);

// Split a per-step budget into (eps_p, eps_l); p_ratio is the fraction
// assigned to the randomized response (default equal halves).
std::pair<double, double> budget_split(double eps_total_per_step, double p_ratio = 0.5);

enum class Schedule { fixed_step, halving };

Schedule schedule_from_string(const std::string& s);
std::string to_string(Schedule s);

// Per-party budget ledger. Records every charge and enforces the optional
// total cap; halving-schedule sums are accumulated in extended precision so
// partial sums stay strictly below the total.
class BudgetAccountant {
public:
    BudgetAccountant(std::string party, double eps_total, double gamma,
                     std::size_t max_iterations, Schedule schedule,
                     double delta = 1e-5);

    // Budget available to iteration `iteration` (1-based) under the
    // configured schedule, or 0 when the cap is exhausted.
    double step_budget(std::size_t iteration) const;

    // Returns false when the charge would exceed the cap (fixed schedule
    // with a finite eps_total); nothing is recorded in that case.
    bool charge(std::size_t iteration, double eps_p, double eps_l);

    double cumulative() const { return static_cast<double>(spent_); }
    long double cumulative_exact() const { return spent_; }
    double eps_total() const { return eps_total_; }
    bool exhausted() const { return exhausted_; }
    std::size_t iterations_charged() const { return charges_; }

    // Corollary-style total for the whole run under the fixed schedule,
    // using this accountant's gamma and delta.
    double strong_composition_total(double eps_step) const;

    struct Entry {
        std::size_t iteration;
        std::string party;
        double eps_p;
        double eps_l;
        double cumulative;
        Schedule schedule;
    };
    const std::vector<Entry>& entries() const { return entries_; }

    // CSV columns: iteration,party,eps_p_spent,eps_l_spent,cumulative,schedule
    std::string ledger_csv() const;
    void append_ledger_csv(std::string& out) const;
    static std::string ledger_csv_header();

private:
    std::string party_;
    double eps_total_;
    double gamma_;
    std::size_t max_iterations_;
    Schedule schedule_;
    double delta_;
    long double spent_ = 0.0L;
    std::size_t charges_ = 0;
    bool exhausted_ = false;
    std::vector<Entry> entries_;
};

} // namespace r3split::privacy
