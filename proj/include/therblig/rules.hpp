#pragma once

// Contact-state transition machine and the three consistency rules:
//   Rule 1  the net grasps/releases of a sequence must turn the starting
//           contact set into the annotated ending contact set;
//   Rule 2  an object already in contact cannot be reached or grasped;
//   Rule 3  an object not in contact cannot be moved, oriented, used or
//           released (and, with strict_hold, held).

#include "vocabulary.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace therblig {

struct RuleOptions {
    /// Treat Hold like Move: the held object must already be in contact.
    bool strict_hold = true;
    /// Maximum sequence length N.
    std::size_t max_steps = default_max_steps;
};

struct RuleViolation {
    int rule = 0;                    // 1, 2 or 3
    std::optional<std::size_t> step; // absent for Rule 1
    std::optional<Tuple> tuple;      // absent for Rule 1
    std::string message;

    friend bool operator==(const RuleViolation&, const RuleViolation&) = default;
};

struct ValidationReport {
    std::vector<RuleViolation> violations;
    /// Contact set before each step plus the final one: size() == sequence length + 1.
    std::vector<ContactSet> derived_states;

    [[nodiscard]] bool consistent() const noexcept { return violations.empty(); }

    [[nodiscard]] std::size_t count(int rule) const noexcept
    {
        std::size_t n = 0;
        for (const auto& v : violations)
            n += v.rule == rule;
        return n;
    }
};

inline ContactSet hand_to_set(const HandContact& h, const ObjectVocabulary& vocab)
{
    ContactSet s;
    for (const auto& held : {h.right, h.left}) {
        if (!held)
            continue;
        if (!vocab.contains(*held))
            throw std::out_of_range("hand contact index " + std::to_string(*held) + " outside vocabulary of size " +
                                    std::to_string(vocab.size()));
        s.insert(*held);
    }
    return s;
}

/// Contact effect of one tuple. Total: Grasp inserts, Release removes, everything else is inert.
inline ContactSet apply_tuple(ContactSet state, const Tuple& t)
{
    if (t.verb() == Verb::Grasp)
        state.insert(t.object());
    else if (t.verb() == Verb::Release)
        state.erase(t.object());
    return state;
}

namespace detail {

constexpr bool requires_absent(Verb v) noexcept { return v == Verb::Reach || v == Verb::Grasp; }

constexpr bool requires_present(Verb v, bool strict_hold) noexcept
{
    return v == Verb::Move || v == Verb::Orient || v == Verb::Use || v == Verb::Release ||
           (strict_hold && v == Verb::Hold);
}

constexpr std::string_view past_tense(Verb v) noexcept
{
    switch (v) {
    case Verb::Reach: return "reached";
    case Verb::Move: return "moved";
    case Verb::Grasp: return "grasped";
    case Verb::Release: return "released";
    case Verb::Use: return "used";
    case Verb::Orient: return "oriented";
    case Verb::Hold: return "held";
    case Verb::Null: break;
    }
    return "";
}

/// Rule (2 or 3) broken by `t` in `state`, or 0 when the step is legal.
inline int violated_rule(const ContactSet& state, const Tuple& t, bool strict_hold) noexcept
{
    if (t.is_null())
        return 0;
    const bool held = state.contains(t.object());
    if (held && requires_absent(t.verb()))
        return 2;
    if (!held && requires_present(t.verb(), strict_hold))
        return 3;
    return 0;
}

} // namespace detail

inline std::vector<RuleViolation> step_violations(const ContactSet& state, const Tuple& t, bool strict_hold,
                                                  std::size_t step = 0)
{
    std::vector<RuleViolation> out;
    switch (detail::violated_rule(state, t, strict_hold)) {
    case 2:
        out.push_back({2, step, t,
                       "step " + std::to_string(step) + ": object " + std::to_string(t.object()) +
                           " is already in contact and cannot be " + std::string(detail::past_tense(t.verb()))});
        break;
    case 3:
        out.push_back({3, step, t,
                       "step " + std::to_string(step) + ": object " + std::to_string(t.object()) +
                           " is not in contact and cannot be " + std::string(detail::past_tense(t.verb()))});
        break;
    default: break;
    }
    return out;
}

/// Same as step_violations, with object names in the message.
inline std::vector<RuleViolation> step_violations(const ContactSet& state, const Tuple& t, bool strict_hold,
                                                  std::size_t step, const ObjectVocabulary& vocab)
{
    auto out = step_violations(state, t, strict_hold, step);
    for (auto& v : out) {
        const auto& name = vocab.name(t.object());
        v.message = "step " + std::to_string(step) + ": " + to_text(t, vocab) +
                    (v.rule == 2 ? " targets '" + name + "', which is already in contact (Rule 2)"
                                 : " targets '" + name + "', which is not in contact (Rule 3)");
    }
    return out;
}

namespace detail {

inline void check_length(const Sequence& seq, const RuleOptions& opts)
{
    if (seq.size() > opts.max_steps)
        throw std::invalid_argument("sequence has " + std::to_string(seq.size()) + " steps; the maximum is " +
                                    std::to_string(opts.max_steps));
}

inline ValidationReport validate_impl(const ContactSet& c_start, const Sequence& seq, const ContactSet& c_end,
                                      const RuleOptions& opts, const ObjectVocabulary* vocab)
{
    check_length(seq, opts);
    ValidationReport report;
    report.derived_states.reserve(seq.size() + 1);
    report.derived_states.push_back(c_start);
    ContactSet state = c_start;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        auto v = vocab ? step_violations(state, seq[k], opts.strict_hold, k, *vocab)
                       : step_violations(state, seq[k], opts.strict_hold, k);
        report.violations.insert(report.violations.end(), v.begin(), v.end());
        state = apply_tuple(std::move(state), seq[k]);
        report.derived_states.push_back(state);
    }
    if (state != c_end) {
        std::string msg = "net contact effect does not reach the annotated end state";
        if (vocab)
            msg += ": derived " + to_text(state, *vocab) + ", annotated " + to_text(c_end, *vocab);
        report.violations.push_back({1, std::nullopt, std::nullopt, std::move(msg)});
    }
    return report;
}

} // namespace detail

inline ValidationReport validate_sequence(const ContactSet& c_start, const Sequence& seq, const ContactSet& c_end,
                                          const RuleOptions& opts = {})
{
    return detail::validate_impl(c_start, seq, c_end, opts, nullptr);
}

/// Overload producing messages with object names.
inline ValidationReport validate_sequence(const ContactSet& c_start, const Sequence& seq, const ContactSet& c_end,
                                          const RuleOptions& opts, const ObjectVocabulary& vocab)
{
    return detail::validate_impl(c_start, seq, c_end, opts, &vocab);
}

/// Allocation-light equivalent of validate_sequence(...).consistent().
inline bool is_consistent(const ContactSet& c_start, std::span<const Tuple> steps, const ContactSet& c_end,
                          bool strict_hold = true)
{
    ContactSet state = c_start;
    for (const Tuple& t : steps) {
        if (detail::violated_rule(state, t, strict_hold) != 0)
            return false;
        state = apply_tuple(std::move(state), t);
    }
    return state == c_end;
}

/// Every tuple that breaks neither Rule 2 nor Rule 3 in `state`, plus Null.
inline std::set<Tuple> candidate_tuples(const ContactSet& state, const ObjectVocabulary& vocab,
                                        bool strict_hold = true)
{
    if (!state.within(vocab.size()))
        throw std::out_of_range("contact set references objects outside the vocabulary");
    std::set<Tuple> out;
    for (ObjectIndex o = 0; o < vocab.size(); ++o)
        for (Verb v : object_verbs) {
            Tuple t{v, o};
            if (detail::violated_rule(state, t, strict_hold) == 0)
                out.insert(t);
        }
    out.insert(Tuple::null());
    return out;
}

/// Fewest legal steps that turn `from` into `to`: one release per surplus object
/// and one grasp per missing object, so it is the symmetric-difference size.
inline std::size_t min_steps_between(const ContactSet& from, const ContactSet& to) noexcept
{
    return from.symmetric_difference_size(to);
}

/// Candidates after which `c_end` can still be reached consistently within the
/// remaining budget. Null ends the sequence, so it survives only when the goal is
/// already met. An empty result means the goal is out of reach.
inline std::set<Tuple> candidate_tuples_with_goal(const ContactSet& state, const ContactSet& c_end,
                                                  std::size_t remaining, const ObjectVocabulary& vocab,
                                                  bool strict_hold = true)
{
    if (remaining < 1)
        throw std::invalid_argument("candidate_tuples_with_goal needs at least one remaining step");
    if (!c_end.within(vocab.size()))
        throw std::out_of_range("goal contact set references objects outside the vocabulary");
    std::set<Tuple> out;
    if (min_steps_between(state, c_end) > remaining)
        return out;
    for (const Tuple& t : candidate_tuples(state, vocab, strict_hold)) {
        if (t.is_null()) {
            if (state == c_end)
                out.insert(t);
        } else if (min_steps_between(apply_tuple(state, t), c_end) <= remaining - 1) {
            out.insert(t);
        }
    }
    return out;
}

} // namespace therblig
