#pragma once

// Differentiable counterparts of the three contact rules.
//
// A relaxed step is a probability vector over |C|*7 joint (object, verb)
// categories plus one trailing Null category. Its first |C|*7 entries, read
// row-major, form the |C|x7 effect matrix G; multiplying G by a per-verb
// coefficient vector gives a per-object vector:
//
//   G.beta   net contact change (grasp +1, release -1)
//   G.gamma  reach/grasp mass (-1 each)
//   G.delta  move/release/use/orient mass (+1 each; +hold with strict hold)
//
// Two loss modes are provided. `literal` evaluates the printed norms
//   L_C  = sum_k |c_start + G_k.beta - c_end|
//   L_EC = sum_k |a_k - G_k.gamma|
//   L_NC = sum_k |a_k - G_k.delta|,   a_0 = c_start, a_{k+1} = a_k + G_k.beta
// verbatim. `corrected` (default) uses the saturating state
// s_{k+1} = clamp(s_k + G_k.beta, 0, 1), which tracks the set semantics of
// apply_tuple exactly on one-hot input, and
//   L_C  = |s_n - c_end|
//   L_EC = sum_k <s_k, -G_k.gamma>
//   L_NC = sum_k <1 - s_k, G_k.delta>
// so each component is zero on one-hot input iff its rule holds.

#include "vocabulary.hpp"

#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace therblig {

/// Floating-point-like scalar: builtin types or multiprecision numbers.
template <typename T>
concept Real = std::numeric_limits<T>::is_specialized && !std::numeric_limits<T>::is_integer;

enum class LossMode { literal, corrected };
enum class Norm { l1, l2 };

inline std::string_view to_string(LossMode m) noexcept { return m == LossMode::literal ? "literal" : "corrected"; }
inline std::string_view to_string(Norm n) noexcept { return n == Norm::l1 ? "l1" : "l2"; }

inline LossMode parse_loss_mode(std::string_view s)
{
    if (s == "literal")
        return LossMode::literal;
    if (s == "corrected")
        return LossMode::corrected;
    throw std::invalid_argument("unknown loss mode '" + std::string(s) + "' (expected literal|corrected)");
}

inline Norm parse_norm(std::string_view s)
{
    if (s == "l1" || s == "L1")
        return Norm::l1;
    if (s == "l2" || s == "L2")
        return Norm::l2;
    throw std::invalid_argument("unknown norm '" + std::string(s) + "' (expected l1|l2)");
}

/// Per-verb coefficients, indexed in verb order Re, M, G, R, U, O, H.
template <Real Scalar = double>
struct EffectVectors {
    std::array<Scalar, verb_count> beta{};
    std::array<Scalar, verb_count> gamma{};
    std::array<Scalar, verb_count> delta{};

    /// delta excludes Hold, matching the lenient rule engine (strict_hold = false).
    static constexpr EffectVectors standard() noexcept
    {
        return {{0, 0, 1, -1, 0, 0, 0}, {-1, 0, -1, 0, 0, 0, 0}, {0, 1, 0, 1, 1, 1, 0}};
    }

    /// delta also covers Hold, matching the strict rule engine.
    static constexpr EffectVectors strict_hold() noexcept
    {
        auto e = standard();
        e.delta[verb_index(Verb::Hold)] = 1;
        return e;
    }

    static constexpr EffectVectors for_hold_policy(bool strict) noexcept
    {
        return strict ? strict_hold() : standard();
    }
};

template <Real Scalar = double>
struct LossConfig {
    LossMode mode = LossMode::corrected;
    Norm norm = Norm::l1;
    EffectVectors<Scalar> effects = EffectVectors<Scalar>::standard();
};

template <Real Scalar = double>
using ContactVector = std::vector<Scalar>;

template <Real Scalar = double>
ContactVector<Scalar> to_contact_vector(const ContactSet& s, std::size_t objects)
{
    if (!s.within(objects))
        throw std::out_of_range("contact set references objects outside a vocabulary of size " +
                                std::to_string(objects));
    ContactVector<Scalar> v(objects, Scalar(0));
    for (ObjectIndex o : s)
        v[o] = Scalar(1);
    return v;
}

/// Probability vector over the joint (object, verb) categories plus Null.
template <Real Scalar = double>
class RelaxedStep {
public:
    RelaxedStep() = default;

    RelaxedStep(std::size_t objects, std::vector<Scalar> probabilities)
        : _objects{objects}, _p{std::move(probabilities)}
    {
        if (_p.size() != category_count(objects))
            throw std::invalid_argument("relaxed step needs " + std::to_string(category_count(objects)) +
                                        " probabilities, got " + std::to_string(_p.size()));
    }

    static constexpr std::size_t category_count(std::size_t objects) noexcept { return objects * verb_count + 1; }

    static RelaxedStep one_hot(const Tuple& t, std::size_t objects)
    {
        if (!t.is_null() && t.object() >= objects)
            throw std::out_of_range("tuple object outside a vocabulary of size " + std::to_string(objects));
        std::vector<Scalar> p(category_count(objects), Scalar(0));
        p[t.category(objects)] = Scalar(1);
        return RelaxedStep(objects, std::move(p));
    }

    [[nodiscard]] std::size_t objects() const noexcept { return _objects; }
    [[nodiscard]] std::span<const Scalar> probabilities() const noexcept { return _p; }
    [[nodiscard]] Scalar effect(ObjectIndex o, Verb v) const { return _p[o * verb_count + verb_index(v)]; }
    [[nodiscard]] Scalar null_mass() const noexcept { return _p.back(); }

    /// Row o of G times `coeffs`.
    [[nodiscard]] Scalar project(ObjectIndex o, const std::array<Scalar, verb_count>& coeffs) const noexcept
    {
        Scalar s = 0;
        const Scalar* row = _p.data() + o * verb_count;
        for (std::size_t v = 0; v < verb_count; ++v)
            s += row[v] * coeffs[v];
        return s;
    }

    [[nodiscard]] std::vector<Scalar> project(const std::array<Scalar, verb_count>& coeffs) const
    {
        std::vector<Scalar> out(_objects);
        for (ObjectIndex o = 0; o < _objects; ++o)
            out[o] = project(o, coeffs);
        return out;
    }

    [[nodiscard]] std::size_t argmax() const noexcept
    {
        std::size_t best = 0;
        for (std::size_t j = 1; j < _p.size(); ++j)
            if (_p[j] > _p[best])
                best = j;
        return best;
    }

private:
    std::size_t _objects = 0;
    std::vector<Scalar> _p;
};

namespace detail {

template <typename Scalar>
bool is_finite(const Scalar& x)
{
    using std::isfinite;
    return isfinite(x);
}

template <typename Scalar>
void check_finite(std::span<const Scalar> xs, const char* what)
{
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!is_finite(xs[i]))
            throw std::invalid_argument(std::string(what) + " entry " + std::to_string(i) + " is not finite");
}

} // namespace detail

/// softmax((logits + noise) / tau). Noise is explicit so the result is reproducible.
template <Real Scalar>
std::vector<Scalar> gumbel_softmax_probabilities(std::span<const Scalar> logits, Scalar tau,
                                                 std::span<const Scalar> noise)
{
    if (!(tau > 0))
        throw std::invalid_argument("temperature must be positive");
    if (logits.size() != noise.size())
        throw std::invalid_argument("logits and noise differ in length");
    if (logits.empty())
        throw std::invalid_argument("gumbel_softmax needs at least one logit");
    detail::check_finite(logits, "logit");
    detail::check_finite(noise, "noise");
    std::vector<Scalar> y(logits.size());
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t j = 0; j < y.size(); ++j) {
        y[j] = (logits[j] + noise[j]) / tau;
        peak = std::max(peak, y[j]);
    }
    Scalar total = 0;
    using std::exp;
    for (auto& v : y) {
        v = exp(v - peak);
        total += v;
    }
    for (auto& v : y)
        v /= total;
    return y;
}

template <Real Scalar>
RelaxedStep<Scalar> gumbel_softmax(std::span<const Scalar> logits, Scalar tau, std::span<const Scalar> noise,
                                   std::size_t objects)
{
    return RelaxedStep<Scalar>(objects, gumbel_softmax_probabilities(logits, tau, noise));
}

/// Hard one-hot at the argmax, for straight-through forward passes.
template <Real Scalar>
RelaxedStep<Scalar> harden(const RelaxedStep<Scalar>& step)
{
    std::vector<Scalar> p(step.probabilities().size(), Scalar(0));
    p[step.argmax()] = Scalar(1);
    return RelaxedStep<Scalar>(step.objects(), std::move(p));
}

/// Seeded standard-Gumbel sampler: -log(-log U), U ~ Uniform(0, 1).
class GumbelNoise {
public:
    explicit GumbelNoise(std::uint64_t seed) : _engine{seed} {}

    double operator()()
    {
        double u = _uniform(_engine);
        while (u <= 0.0)
            u = _uniform(_engine);
        return -std::log(-std::log(u));
    }

    std::vector<double> draw(std::size_t n)
    {
        std::vector<double> out(n);
        for (auto& x : out)
            x = (*this)();
        return out;
    }

private:
    std::mt19937_64 _engine;
    std::uniform_real_distribution<double> _uniform{0.0, 1.0};
};

namespace detail {

template <typename Scalar>
void check_dims(std::size_t objects, std::span<const RelaxedStep<Scalar>> steps)
{
    for (std::size_t k = 0; k < steps.size(); ++k)
        if (steps[k].objects() != objects)
            throw std::invalid_argument("step " + std::to_string(k) + " covers " +
                                        std::to_string(steps[k].objects()) + " objects, contact vectors have " +
                                        std::to_string(objects));
}

template <typename Scalar>
void check_same(const ContactVector<Scalar>& a, const ContactVector<Scalar>& b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("contact vectors differ in dimension (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
}

template <typename Scalar>
Scalar norm(std::span<const Scalar> r, Norm n) noexcept
{
    using std::abs;
    using std::sqrt;
    Scalar s = 0;
    if (n == Norm::l1) {
        for (Scalar x : r)
            s += abs(x);
        return s;
    }
    for (Scalar x : r)
        s += x * x;
    return sqrt(s);
}

/// d|r|/dr. The L1 subgradient at 0 and the L2 one at r = 0 are taken as 0.
template <typename Scalar>
std::vector<Scalar> norm_gradient(std::span<const Scalar> r, Norm n)
{
    std::vector<Scalar> g(r.size(), Scalar(0));
    if (n == Norm::l1) {
        for (std::size_t i = 0; i < r.size(); ++i)
            g[i] = r[i] > 0 ? Scalar(1) : (r[i] < 0 ? Scalar(-1) : Scalar(0));
        return g;
    }
    const Scalar len = norm(r, Norm::l2);
    if (len > 0)
        for (std::size_t i = 0; i < r.size(); ++i)
            g[i] = r[i] / len;
    return g;
}

template <typename Scalar>
Scalar clamp01(Scalar x) noexcept
{
    return x < 0 ? Scalar(0) : (x > 1 ? Scalar(1) : x);
}

} // namespace detail

/// a_0 = c_start, a_{k+1} = a_k + G_k.beta. Linear in every step.
template <Real Scalar>
std::vector<ContactVector<Scalar>> derive_states(const ContactVector<Scalar>& c_start,
                                                 std::span<const RelaxedStep<Scalar>> steps,
                                                 const std::array<Scalar, verb_count>& beta)
{
    detail::check_dims(c_start.size(), steps);
    std::vector<ContactVector<Scalar>> states{c_start};
    states.reserve(steps.size() + 1);
    for (const auto& step : steps) {
        auto next = states.back();
        for (ObjectIndex o = 0; o < next.size(); ++o)
            next[o] += step.project(o, beta);
        states.push_back(std::move(next));
    }
    return states;
}

/// Same recursion with every entry clamped to [0, 1] after each step.
template <Real Scalar>
std::vector<ContactVector<Scalar>> derive_saturated_states(const ContactVector<Scalar>& c_start,
                                                           std::span<const RelaxedStep<Scalar>> steps,
                                                           const std::array<Scalar, verb_count>& beta)
{
    detail::check_dims(c_start.size(), steps);
    std::vector<ContactVector<Scalar>> states{c_start};
    states.reserve(steps.size() + 1);
    for (const auto& step : steps) {
        auto next = states.back();
        for (ObjectIndex o = 0; o < next.size(); ++o)
            next[o] = detail::clamp01(next[o] + step.project(o, beta));
        states.push_back(std::move(next));
    }
    return states;
}

template <Real Scalar>
Scalar loss_C(const ContactVector<Scalar>& c_start, const ContactVector<Scalar>& c_end,
              std::span<const RelaxedStep<Scalar>> steps, const LossConfig<Scalar>& cfg = {})
{
    detail::check_same(c_start, c_end);
    detail::check_dims(c_start.size(), steps);
    const auto& beta = cfg.effects.beta;
    std::vector<Scalar> r(c_start.size());
    if (cfg.mode == LossMode::corrected) {
        auto states = derive_saturated_states(c_start, steps, beta);
        for (std::size_t o = 0; o < r.size(); ++o)
            r[o] = states.back()[o] - c_end[o];
        return detail::norm<Scalar>(r, cfg.norm);
    }
    Scalar total = 0;
    for (const auto& step : steps) {
        for (ObjectIndex o = 0; o < r.size(); ++o)
            r[o] = c_start[o] + step.project(o, beta) - c_end[o];
        total += detail::norm<Scalar>(r, cfg.norm);
    }
    return total;
}

namespace detail {

/// Shared body of L_EC / L_NC; `coeffs` is gamma or delta.
template <typename Scalar>
Scalar enforcement_loss(const ContactVector<Scalar>& c_start, std::span<const RelaxedStep<Scalar>> steps,
                        const LossConfig<Scalar>& cfg, const std::array<Scalar, verb_count>& coeffs,
                        bool penalize_missing)
{
    check_dims(c_start.size(), steps);
    Scalar total = 0;
    if (cfg.mode == LossMode::corrected) {
        auto states = derive_saturated_states(c_start, steps, cfg.effects.beta);
        for (std::size_t k = 0; k < steps.size(); ++k)
            for (ObjectIndex o = 0; o < c_start.size(); ++o) {
                const Scalar mass = steps[k].project(o, coeffs);
                total += penalize_missing ? (Scalar(1) - states[k][o]) * mass : states[k][o] * -mass;
            }
        return total;
    }
    auto states = derive_states(c_start, steps, cfg.effects.beta);
    std::vector<Scalar> r(c_start.size());
    for (std::size_t k = 0; k < steps.size(); ++k) {
        for (ObjectIndex o = 0; o < r.size(); ++o)
            r[o] = states[k][o] - steps[k].project(o, coeffs);
        total += norm<Scalar>(r, cfg.norm);
    }
    return total;
}

} // namespace detail

template <Real Scalar>
Scalar loss_EC(const ContactVector<Scalar>& c_start, std::span<const RelaxedStep<Scalar>> steps,
               const LossConfig<Scalar>& cfg = {})
{
    return detail::enforcement_loss(c_start, steps, cfg, cfg.effects.gamma, false);
}

template <Real Scalar>
Scalar loss_NC(const ContactVector<Scalar>& c_start, std::span<const RelaxedStep<Scalar>> steps,
               const LossConfig<Scalar>& cfg = {})
{
    return detail::enforcement_loss(c_start, steps, cfg, cfg.effects.delta, true);
}

template <Real Scalar = double>
struct LossReport {
    Scalar contact = 0;     // L_C
    Scalar enforcement = 0; // L_EC
    Scalar non_contact = 0; // L_NC
    Scalar total = 0;
    LossMode mode = LossMode::corrected;
    Norm norm = Norm::l1;
};

template <Real Scalar>
LossReport<Scalar> combined_rule_loss(const ContactVector<Scalar>& c_start, const ContactVector<Scalar>& c_end,
                                      std::span<const RelaxedStep<Scalar>> steps, const LossConfig<Scalar>& cfg = {})
{
    LossReport<Scalar> r;
    r.contact = loss_C(c_start, c_end, steps, cfg);
    r.enforcement = loss_EC(c_start, steps, cfg);
    r.non_contact = loss_NC(c_start, steps, cfg);
    r.total = r.contact + r.enforcement + r.non_contact;
    r.mode = cfg.mode;
    r.norm = cfg.norm;
    return r;
}

/// Thrown when the literal L1 loss is evaluated at a kink.
class non_differentiable_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Gradient of the combined rule loss with respect to each step's probabilities
/// (Null entries are always zero).
template <Real Scalar>
std::vector<std::vector<Scalar>> probability_gradient(const ContactVector<Scalar>& c_start,
                                                      const ContactVector<Scalar>& c_end,
                                                      std::span<const RelaxedStep<Scalar>> steps,
                                                      const LossConfig<Scalar>& cfg = {})
{
    detail::check_same(c_start, c_end);
    detail::check_dims(c_start.size(), steps);
    const std::size_t n = steps.size();
    const std::size_t objects = c_start.size();
    const auto& fx = cfg.effects;

    // Gradients with respect to G.beta, G.gamma and G.delta of every step.
    std::vector<std::vector<Scalar>> g_beta(n, std::vector<Scalar>(objects, 0));
    auto g_gamma = g_beta;
    auto g_delta = g_beta;

    auto kink_guard = [&](std::span<const Scalar> r, const char* term, std::size_t k) {
        using std::abs;
        if (cfg.mode != LossMode::literal || cfg.norm != Norm::l1)
            return;
        for (std::size_t o = 0; o < r.size(); ++o)
            if (abs(r[o]) < Scalar(1e-8))
                throw non_differentiable_error(std::string("literal L1 ") + term + " residual at step " +
                                               std::to_string(k) + ", object " + std::to_string(o) +
                                               " is within 1e-8 of zero");
    };

    if (cfg.mode == LossMode::corrected) {
        auto states = derive_saturated_states(c_start, steps, fx.beta);
        std::vector<Scalar> r(objects);
        for (std::size_t o = 0; o < objects; ++o)
            r[o] = states[n][o] - c_end[o];
        std::vector<Scalar> adj = detail::norm_gradient<Scalar>(r, cfg.norm); // dL/ds_n
        for (std::size_t k = n; k-- > 0;) {
            for (ObjectIndex o = 0; o < objects; ++o) {
                const Scalar pre = states[k][o] + steps[k].project(o, fx.beta);
                const Scalar through = (pre >= 0 && pre <= 1) ? adj[o] : Scalar(0);
                g_beta[k][o] = through;
                g_gamma[k][o] = -states[k][o];
                g_delta[k][o] = Scalar(1) - states[k][o];
                // s_k feeds s_{k+1}, the L_EC term (-gamma mass) and the L_NC term (-delta mass).
                adj[o] = through - steps[k].project(o, fx.gamma) - steps[k].project(o, fx.delta);
            }
        }
    } else {
        auto states = derive_states(c_start, steps, fx.beta);
        std::vector<Scalar> r(objects);
        std::vector<Scalar> downstream(objects, 0); // sum over j > k of dL/da_j
        for (std::size_t k = n; k-- > 0;) {
            for (ObjectIndex o = 0; o < objects; ++o)
                g_beta[k][o] = downstream[o];

            for (ObjectIndex o = 0; o < objects; ++o)
                r[o] = c_start[o] + steps[k].project(o, fx.beta) - c_end[o];
            kink_guard(r, "L_C", k);
            auto gc = detail::norm_gradient<Scalar>(r, cfg.norm);

            for (ObjectIndex o = 0; o < objects; ++o)
                r[o] = states[k][o] - steps[k].project(o, fx.gamma);
            kink_guard(r, "L_EC", k);
            auto ge = detail::norm_gradient<Scalar>(r, cfg.norm);

            for (ObjectIndex o = 0; o < objects; ++o)
                r[o] = states[k][o] - steps[k].project(o, fx.delta);
            kink_guard(r, "L_NC", k);
            auto gn = detail::norm_gradient<Scalar>(r, cfg.norm);

            for (ObjectIndex o = 0; o < objects; ++o) {
                g_beta[k][o] += gc[o];
                g_gamma[k][o] = -ge[o];
                g_delta[k][o] = -gn[o];
                downstream[o] += ge[o] + gn[o];
            }
        }
    }

    std::vector<std::vector<Scalar>> grad(n, std::vector<Scalar>(RelaxedStep<Scalar>::category_count(objects), 0));
    for (std::size_t k = 0; k < n; ++k)
        for (ObjectIndex o = 0; o < objects; ++o)
            for (std::size_t v = 0; v < verb_count; ++v)
                grad[k][o * verb_count + v] =
                    fx.beta[v] * g_beta[k][o] + fx.gamma[v] * g_gamma[k][o] + fx.delta[v] * g_delta[k][o];
    return grad;
}

/// Everything needed to evaluate the rule losses on Gumbel-Softmax outputs.
template <Real Scalar = double>
struct LossInstance {
    std::size_t objects = 0;
    ContactVector<Scalar> c_start;
    ContactVector<Scalar> c_end;
    std::vector<std::vector<Scalar>> logits; // [step][category]
    std::vector<std::vector<Scalar>> noise;  // same shape as logits
    Scalar tau = 1;
    LossConfig<Scalar> config;
    /// Forward on the hard argmax, backward through the soft relaxation.
    bool straight_through = false;

    void check() const
    {
        if (c_start.size() != objects || c_end.size() != objects)
            throw std::invalid_argument("contact vectors must have one entry per object class");
        if (logits.size() != noise.size())
            throw std::invalid_argument("logits and noise must have the same number of steps");
        for (std::size_t k = 0; k < logits.size(); ++k) {
            if (logits[k].size() != RelaxedStep<Scalar>::category_count(objects))
                throw std::invalid_argument("step " + std::to_string(k) + " must have |C|*7+1 = " +
                                            std::to_string(RelaxedStep<Scalar>::category_count(objects)) +
                                            " logits");
            if (noise[k].size() != logits[k].size())
                throw std::invalid_argument("noise for step " + std::to_string(k) + " has the wrong length");
        }
    }

    [[nodiscard]] std::vector<RelaxedStep<Scalar>> relaxed_steps() const
    {
        check();
        std::vector<RelaxedStep<Scalar>> steps;
        steps.reserve(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) {
            auto step = gumbel_softmax<Scalar>(logits[k], tau, noise[k], objects);
            steps.push_back(straight_through ? harden(step) : std::move(step));
        }
        return steps;
    }

    [[nodiscard]] LossReport<Scalar> evaluate() const
    {
        auto steps = relaxed_steps();
        return combined_rule_loss<Scalar>(c_start, c_end, steps, config);
    }
};

/// Seeded instance: 1..max_objects classes, 1..max_steps steps, binary
/// endpoint contacts, standard-normal logits and standard-Gumbel noise.
inline LossInstance<double> random_loss_instance(std::uint64_t seed, double tau, const LossConfig<double>& config,
                                                 std::size_t max_objects = 5, std::size_t max_steps = default_max_steps)
{
    if (max_objects < 1 || max_steps < 1)
        throw std::invalid_argument("random instances need at least one object and one step");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> objects_dist(1, max_objects), steps_dist(1, max_steps);
    std::bernoulli_distribution bit(0.5);
    std::normal_distribution<double> normal(0.0, 1.0);

    LossInstance<double> inst;
    inst.objects = objects_dist(rng);
    inst.tau = tau;
    inst.config = config;
    const std::size_t n = steps_dist(rng);
    for (std::size_t o = 0; o < inst.objects; ++o) {
        inst.c_start.push_back(bit(rng) ? 1.0 : 0.0);
        inst.c_end.push_back(bit(rng) ? 1.0 : 0.0);
    }
    GumbelNoise gumbel(rng());
    const std::size_t categories = RelaxedStep<double>::category_count(inst.objects);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> z(categories);
        for (auto& x : z)
            x = normal(rng);
        inst.logits.push_back(std::move(z));
        inst.noise.push_back(gumbel.draw(categories));
    }
    return inst;
}

template <Real Scalar = double>
struct RuleLossGradient {
    LossReport<Scalar> report;
    std::vector<std::vector<Scalar>> d_logits; // same shape as the instance logits
};

/// Analytic gradient of combined_rule_loss(gumbel_softmax(logits + noise)) with
/// respect to every logit.
template <Real Scalar>
RuleLossGradient<Scalar> grad_rule_loss(const LossInstance<Scalar>& inst)
{
    inst.check();
    std::vector<RelaxedStep<Scalar>> soft;
    soft.reserve(inst.logits.size());
    for (std::size_t k = 0; k < inst.logits.size(); ++k)
        soft.push_back(gumbel_softmax<Scalar>(inst.logits[k], inst.tau, inst.noise[k], inst.objects));

    std::vector<RelaxedStep<Scalar>> forward = soft;
    if (inst.straight_through)
        for (auto& s : forward)
            s = harden(s);

    RuleLossGradient<Scalar> out;
    out.report = combined_rule_loss<Scalar>(inst.c_start, inst.c_end, forward, inst.config);
    auto dp = probability_gradient<Scalar>(inst.c_start, inst.c_end, forward, inst.config);

    // Softmax Jacobian: dz_j = y_j (dp_j - <y, dp>) / tau.
    out.d_logits.resize(soft.size());
    for (std::size_t k = 0; k < soft.size(); ++k) {
        auto y = soft[k].probabilities();
        Scalar mean = 0;
        for (std::size_t j = 0; j < y.size(); ++j)
            mean += y[j] * dp[k][j];
        auto& d = out.d_logits[k];
        d.resize(y.size());
        for (std::size_t j = 0; j < y.size(); ++j)
            d[j] = y[j] * (dp[k][j] - mean) / inst.tau;
    }
    return out;
}

/// |a - f| / max(1e-12, |a| + |f|)
template <Real Scalar>
Scalar relative_error(Scalar analytic, Scalar numeric) noexcept
{
    using std::abs;
    return abs(analytic - numeric) / std::max(Scalar(1e-12), abs(analytic) + abs(numeric));
}

/// Same instance with every scalar converted to `To`.
template <Real To, Real From>
LossInstance<To> convert_instance(const LossInstance<From>& in)
{
    auto vec = [](const std::vector<From>& v) {
        std::vector<To> out;
        out.reserve(v.size());
        for (const auto& x : v)
            out.push_back(To(x));
        return out;
    };
    auto mat = [&](const std::vector<std::vector<From>>& m) {
        std::vector<std::vector<To>> out;
        out.reserve(m.size());
        for (const auto& row : m)
            out.push_back(vec(row));
        return out;
    };
    auto arr = [](const std::array<From, verb_count>& a) {
        std::array<To, verb_count> out{};
        for (std::size_t i = 0; i < verb_count; ++i)
            out[i] = To(a[i]);
        return out;
    };
    LossInstance<To> out;
    out.objects = in.objects;
    out.c_start = vec(in.c_start);
    out.c_end = vec(in.c_end);
    out.logits = mat(in.logits);
    out.noise = mat(in.noise);
    out.tau = To(in.tau);
    out.config.mode = in.config.mode;
    out.config.norm = in.config.norm;
    out.config.effects = {arr(in.config.effects.beta), arr(in.config.effects.gamma), arr(in.config.effects.delta)};
    out.straight_through = in.straight_through;
    return out;
}

/// Central finite differences of the total loss for every logit, compared to
/// the analytic gradient computed in `Scalar`. Loss evaluations for the
/// differences run in `Oracle`, which may be wider than `Scalar`: in plain
/// double the difference quotient cannot resolve entries much below
/// eps * L / h. Returns the largest relative error over all logits.
template <Real Oracle, Real Scalar>
Scalar finite_diff_check(const LossInstance<Scalar>& inst, Scalar h = Scalar(1e-5))
{
    if (!(h > 0) || h > Scalar(1e-2))
        throw std::invalid_argument("finite-difference step must lie in (0, 1e-2]");
    if (inst.straight_through)
        throw std::invalid_argument("straight-through gradients are biased by construction and cannot be checked");
    const auto analytic = grad_rule_loss(inst);

    LossInstance<Oracle> probe = convert_instance<Oracle>(inst);
    const Oracle step = Oracle(h);
    auto total_at = [&]() {
        const Oracle v = probe.evaluate().total;
        if (!detail::is_finite(v))
            throw std::domain_error("loss evaluated to a non-finite value");
        return v;
    };

    Scalar worst = 0;
    for (std::size_t k = 0; k < inst.logits.size(); ++k)
        for (std::size_t j = 0; j < inst.logits[k].size(); ++j) {
            const Oracle z = probe.logits[k][j];
            probe.logits[k][j] = z + step;
            const Oracle up = total_at();
            probe.logits[k][j] = z - step;
            const Oracle down = total_at();
            probe.logits[k][j] = z;
            const auto numeric = static_cast<Scalar>((up - down) / (2 * step));
            worst = std::max(worst, relative_error(analytic.d_logits[k][j], numeric));
        }
    return worst;
}

/// Finite-difference check with the oracle in the same precision as the gradient.
template <Real Scalar>
Scalar finite_diff_check(const LossInstance<Scalar>& inst, Scalar h = Scalar(1e-5))
{
    return finite_diff_check<Scalar, Scalar>(inst, h);
}

} // namespace therblig
