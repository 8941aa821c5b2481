#pragma once

// Brute-force enumeration of consistent sequences (the oracle for the rule
// filters) and a seeded generator of rule-consistent synthetic annotations.

#include "records.hpp"
#include "rules.hpp"
#include "vocabulary.hpp"

#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace therblig {

/// Guards on brute_force_consistent. The full alphabet has 7|C|+1 symbols and
/// every padded sequence of length max_len is visited.
inline constexpr std::size_t brute_force_max_objects = 6;
inline constexpr std::size_t brute_force_max_len = 6;
inline constexpr std::uint64_t brute_force_max_sequences = 20'000'000;

/// Number of padded sequences brute_force_consistent would visit, saturating at UINT64_MAX.
inline std::uint64_t brute_force_size(std::size_t objects, std::size_t max_len) noexcept
{
    const std::uint64_t alphabet = objects * verb_count + 1;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < max_len; ++i) {
        if (total > UINT64_MAX / alphabet)
            return UINT64_MAX;
        total *= alphabet;
    }
    return total;
}

/// Every sequence of at most max_len steps (Null padding stripped) that is
/// consistent from c_start to c_end, found by exhaustive enumeration of the
/// full (verb, object) alphabet.
inline std::set<Sequence> brute_force_consistent(const ContactSet& c_start, const ContactSet& c_end,
                                                 const ObjectVocabulary& vocab, std::size_t max_len,
                                                 bool strict_hold = true)
{
    const std::size_t objects = vocab.size();
    if (objects > brute_force_max_objects || max_len > brute_force_max_len ||
        brute_force_size(objects, max_len) > brute_force_max_sequences)
        throw std::invalid_argument("brute-force enumeration refused for |C| = " + std::to_string(objects) +
                                    ", max_len = " + std::to_string(max_len) + " (" +
                                    std::to_string(brute_force_size(objects, max_len)) + " sequences)");
    if (!c_start.within(objects) || !c_end.within(objects))
        throw std::out_of_range("contact sets reference objects outside the vocabulary");

    const std::size_t alphabet = objects * verb_count + 1;
    std::vector<Tuple> symbols;
    for (std::size_t c = 0; c < alphabet; ++c)
        symbols.push_back(Tuple::from_category(c, objects));

    std::set<Sequence> out;
    std::vector<std::size_t> digits(max_len, 0);
    std::vector<Tuple> steps(max_len);
    for (;;) {
        // Keep only well-formed padded sequences: no object step after a Null.
        std::size_t length = 0;
        bool well_formed = true;
        for (std::size_t k = 0; k < max_len; ++k) {
            steps[k] = symbols[digits[k]];
            if (!steps[k].is_null()) {
                if (length != k) {
                    well_formed = false;
                    break;
                }
                length = k + 1;
            }
        }
        if (well_formed) {
            std::span<const Tuple> prefix(steps.data(), length);
            if (is_consistent(c_start, prefix, c_end, strict_hold))
                out.insert(Sequence(std::vector<Tuple>(prefix.begin(), prefix.end())));
        }
        std::size_t pos = 0;
        while (pos < max_len && ++digits[pos] == alphabet)
            digits[pos++] = 0;
        if (pos == max_len)
            break;
    }
    return out;
}

/// Every sequence reachable by repeatedly choosing from candidate_tuples_with_goal
/// until Null is chosen or max_len steps are taken.
inline std::set<Sequence> enumerate_with_goal_filter(const ContactSet& c_start, const ContactSet& c_end,
                                                     const ObjectVocabulary& vocab, std::size_t max_len,
                                                     bool strict_hold = true)
{
    std::set<Sequence> out;
    std::vector<Tuple> prefix;
    auto walk = [&](auto&& self, const ContactSet& state) -> void {
        if (prefix.size() == max_len) {
            if (state == c_end)
                out.insert(Sequence(prefix));
            return;
        }
        for (const Tuple& t : candidate_tuples_with_goal(state, c_end, max_len - prefix.size(), vocab, strict_hold)) {
            if (t.is_null()) {
                out.insert(Sequence(prefix));
                continue;
            }
            prefix.push_back(t);
            self(self, apply_tuple(state, t));
            prefix.pop_back();
        }
    };
    walk(walk, c_start);
    return out;
}

struct Trajectory {
    /// Contact set at every chunk boundary: states.size() == sequences.size() + 1.
    std::vector<ContactSet> states;
    std::vector<Sequence> sequences;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t chunks() const noexcept { return sequences.size(); }
};

namespace detail {

/// Contact sets of at most two objects (one per hand) within `budget` steps of `from`.
inline std::vector<ContactSet> hand_reachable_goals(const ContactSet& from, std::size_t objects, std::size_t budget)
{
    std::vector<ContactSet> goals;
    auto consider = [&](ContactSet s) {
        if (min_steps_between(from, s) <= budget)
            goals.push_back(std::move(s));
    };
    consider({});
    for (ObjectIndex a = 0; a < objects; ++a) {
        consider({a});
        for (ObjectIndex b = a + 1; b < objects; ++b)
            consider({a, b});
    }
    return goals;
}

template <typename Container, typename Rng>
const auto& pick(const Container& items, Rng& rng)
{
    std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
    auto it = items.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(dist(rng)));
    return *it;
}

/// SplitMix64 finaliser, used to derive independent per-video seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Chunks start with empty hands; each chunk draws a two-hand-representable goal
/// reachable within N steps, then picks uniformly among goal-filtered
/// candidates until Null or N steps.
inline Trajectory gen_trajectory(const ObjectVocabulary& vocab, std::size_t chunks, std::size_t max_steps,
                                 std::uint64_t seed, bool strict_hold = true)
{
    if (chunks < 1 || max_steps < 1)
        throw std::invalid_argument("gen_trajectory needs at least one chunk and one step");
    std::mt19937_64 rng(seed);
    Trajectory traj;
    traj.seed = seed;
    traj.states.push_back({});
    for (std::size_t c = 0; c < chunks; ++c) {
        ContactSet state = traj.states.back();
        const ContactSet goal = detail::pick(detail::hand_reachable_goals(state, vocab.size(), max_steps), rng);
        std::vector<Tuple> steps;
        while (steps.size() < max_steps) {
            const auto options = candidate_tuples_with_goal(state, goal, max_steps - steps.size(), vocab, strict_hold);
            const Tuple t = detail::pick(options, rng);
            if (t.is_null())
                break;
            steps.push_back(t);
            state = apply_tuple(std::move(state), t);
        }
        traj.sequences.emplace_back(std::move(steps));
        traj.states.push_back(goal);
    }
    return traj;
}

inline std::string synthetic_video_id(std::size_t video) { return "vid" + std::to_string(1000 + video).substr(1); }

inline std::string synthetic_segment_id(std::size_t video, std::size_t chunk)
{
    return synthetic_video_id(video) + "_chunk" + std::to_string(1000 + chunk).substr(1);
}

/// Canonical records for `videos` synthetic videos of `chunks` 100-frame chunks each.
inline std::vector<AnnotationRecord> gen_records(const ObjectVocabulary& vocab, std::size_t videos, std::size_t chunks,
                                                 std::size_t max_steps, std::uint64_t seed, bool strict_hold = true)
{
    if (videos < 1)
        throw std::invalid_argument("gen_records needs at least one video");
    std::vector<AnnotationRecord> records;
    records.reserve(videos * chunks);
    for (std::size_t v = 0; v < videos; ++v) {
        const auto traj = gen_trajectory(vocab, chunks, max_steps, detail::mix_seed(seed ^ detail::mix_seed(v)),
                                         strict_hold);
        for (std::size_t c = 0; c < traj.chunks(); ++c) {
            AnnotationRecord r;
            r.segment_id = synthetic_segment_id(v, c);
            r.video_id = synthetic_video_id(v);
            r.start_frame = static_cast<std::int64_t>(100 * c);
            r.end_frame = static_cast<std::int64_t>(100 * (c + 1));
            r.c_prev = HandContact::from_set(traj.states[c]);
            r.c_next = HandContact::from_set(traj.states[c + 1]);
            r.therbligs = traj.sequences[c];
            r.source = "synthetic";
            records.push_back(std::move(r));
        }
    }
    return records;
}

/// Writes gen_records output for a numbered vocabulary of `objects` classes.
inline std::vector<AnnotationRecord> gen_dataset(std::size_t objects, std::size_t videos, std::size_t chunks,
                                                 std::size_t max_steps, std::uint64_t seed, const std::string& path,
                                                 bool strict_hold = true)
{
    const auto vocab = ObjectVocabulary::numbered(objects);
    auto records = gen_records(vocab, videos, chunks, max_steps, seed, strict_hold);
    write_jsonl_file(path, records, vocab);
    return records;
}

} // namespace therblig
