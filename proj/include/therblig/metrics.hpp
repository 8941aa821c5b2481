#pragma once

// Evaluation metrics: sequence-level (element-wise accuracy, Levenshtein
// distance, logical consistency) and frame-level temporal segmentation
// (frame accuracy, segmental edit score, F1@k).

#include "rules.hpp"
#include "vocabulary.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ranges>
#include <stdexcept>
#include <vector>

namespace therblig {

/// Minimal unit-cost insert/delete/substitute count between two token ranges.
template <std::ranges::random_access_range A, std::ranges::random_access_range B>
    requires std::equality_comparable_with<std::ranges::range_value_t<A>, std::ranges::range_value_t<B>>
std::size_t levenshtein(const A& a, const B& b)
{
    const auto n = static_cast<std::size_t>(std::ranges::size(a));
    const auto m = static_cast<std::size_t>(std::ranges::size(b));
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (std::ranges::begin(a)[i - 1] == std::ranges::begin(b)[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

/// Levenshtein distance between two Therblig sequences with Null padding stripped.
inline std::size_t levenshtein(const Sequence& pred, const Sequence& gt)
{
    return levenshtein(pred.stripped().steps(), gt.stripped().steps());
}

/// Fraction of the `slots` padded positions whose tuples agree (Null matches Null).
inline double elementwise_accuracy(const Sequence& pred, const Sequence& gt, std::size_t slots = default_max_steps)
{
    if (slots == 0)
        throw std::invalid_argument("element-wise accuracy needs at least one slot");
    const auto p = pred.padded(slots);
    const auto g = gt.padded(slots);
    std::size_t same = 0;
    for (std::size_t k = 0; k < slots; ++k)
        same += p[k] == g[k];
    return static_cast<double>(same) / static_cast<double>(slots);
}

/// Rule 1-3 violations divided by max(1, number of non-null predicted steps).
inline double logical_consistency(const Sequence& pred, const ContactSet& c_start, const ContactSet& c_end,
                                  const RuleOptions& opts = {})
{
    const auto report = validate_sequence(c_start, pred, c_end, opts);
    return static_cast<double>(report.violations.size()) /
           static_cast<double>(std::max<std::size_t>(1, pred.non_null_size()));
}

using Label = std::int32_t;

/// Per-frame label ids of one video.
class FrameLabeling {
public:
    FrameLabeling() = default;

    explicit FrameLabeling(std::vector<Label> labels) : _labels{std::move(labels)}
    {
        if (_labels.empty())
            throw std::invalid_argument("a frame labeling needs at least one frame");
    }

    FrameLabeling(std::initializer_list<Label> labels) : FrameLabeling(std::vector<Label>(labels)) {}

    [[nodiscard]] std::size_t size() const noexcept { return _labels.size(); }
    [[nodiscard]] Label operator[](std::size_t i) const { return _labels.at(i); }
    [[nodiscard]] std::span<const Label> labels() const noexcept { return _labels; }

    friend bool operator==(const FrameLabeling&, const FrameLabeling&) = default;

private:
    std::vector<Label> _labels;
};

struct Segment {
    Label label = 0;
    std::size_t start = 0; // inclusive
    std::size_t end = 0;   // exclusive

    [[nodiscard]] std::size_t length() const noexcept { return end - start; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Maximal runs of equal labels.
inline std::vector<Segment> segments_from_frames(const FrameLabeling& f)
{
    std::vector<Segment> out;
    const auto labels = f.labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (out.empty() || out.back().label != labels[i])
            out.push_back({labels[i], i, i + 1});
        else
            out.back().end = i + 1;
    }
    return out;
}

inline FrameLabeling frames_from_segments(std::span<const Segment> segments)
{
    std::vector<Label> labels;
    for (const auto& s : segments) {
        if (s.start != labels.size() || s.end <= s.start)
            throw std::invalid_argument("segments must tile the frame range contiguously");
        labels.insert(labels.end(), s.length(), s.label);
    }
    return FrameLabeling(std::move(labels));
}

inline double frame_accuracy(const FrameLabeling& pred, const FrameLabeling& gt)
{
    if (pred.size() != gt.size())
        throw std::invalid_argument("frame labelings differ in length (" + std::to_string(pred.size()) + " vs " +
                                    std::to_string(gt.size()) + ")");
    std::size_t same = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        same += pred[i] == gt[i];
    return static_cast<double>(same) / static_cast<double>(pred.size());
}

namespace detail {

inline std::vector<Label> segment_labels(const FrameLabeling& f)
{
    std::vector<Label> out;
    for (const auto& s : segments_from_frames(f))
        out.push_back(s.label);
    return out;
}

} // namespace detail

/// Raw Levenshtein distance between the run-length label strings.
inline std::size_t segmental_edit_distance(const FrameLabeling& pred, const FrameLabeling& gt)
{
    return levenshtein(detail::segment_labels(pred), detail::segment_labels(gt));
}

/// 100 * (1 - distance / max segment count), in [0, 100].
inline double segmental_edit_score(const FrameLabeling& pred, const FrameLabeling& gt)
{
    const auto p = detail::segment_labels(pred);
    const auto g = detail::segment_labels(gt);
    const auto longest = std::max(p.size(), g.size());
    return 100.0 * (1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(longest));
}

struct OverlapScore {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
};

inline double intersection_over_union(const Segment& a, const Segment& b) noexcept
{
    const auto lo = std::max(a.start, b.start);
    const auto hi = std::min(a.end, b.end);
    const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
    const double uni = static_cast<double>(std::max(a.end, b.end) - std::min(a.start, b.start));
    return inter / uni;
}

/// Segmental F1 at overlap threshold k percent. Each predicted segment, in
/// temporal order, takes the unmatched same-label ground-truth segment of
/// highest IoU; the pair is a true positive when that IoU reaches k/100.
inline OverlapScore f1_at_k(const FrameLabeling& pred, const FrameLabeling& gt, double k)
{
    if (pred.size() != gt.size())
        throw std::invalid_argument("frame labelings differ in length (" + std::to_string(pred.size()) + " vs " +
                                    std::to_string(gt.size()) + ")");
    if (!(k > 0 && k < 100))
        throw std::invalid_argument("overlap threshold k must lie in (0, 100)");
    const double threshold = k / 100.0;
    const auto ps = segments_from_frames(pred);
    const auto gs = segments_from_frames(gt);
    std::vector<bool> used(gs.size(), false);

    OverlapScore s;
    for (const auto& p : ps) {
        double best = -1;
        std::size_t best_idx = gs.size();
        for (std::size_t j = 0; j < gs.size(); ++j) {
            if (used[j] || gs[j].label != p.label)
                continue;
            const double iou = intersection_over_union(p, gs[j]);
            if (iou > best) {
                best = iou;
                best_idx = j;
            }
        }
        if (best_idx < gs.size() && best >= threshold) {
            used[best_idx] = true;
            ++s.true_positives;
        } else {
            ++s.false_positives;
        }
    }
    s.false_negatives = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));

    const auto tp = static_cast<double>(s.true_positives);
    s.precision = tp / static_cast<double>(s.true_positives + s.false_positives);
    s.recall = tp / static_cast<double>(s.true_positives + s.false_negatives);
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

} // namespace therblig
