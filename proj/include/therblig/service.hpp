#pragma once

// Two-stage annotation backend.
//
// Stage 1 collects per-hand contact answers for the end of every segment and
// resolves them by pooled vote. Stage 2 serves Therblig tasks bracketed by
// the previous segment's contact and this segment's contact, offers
// rule-filtered candidates step by step, and re-validates every submission
// before it is persisted.
//
// Persistence is an append-only JSON-lines event log replayed on open. All
// mutations take an exclusive lock; queries take a shared one.

#include "records.hpp"
#include "rules.hpp"
#include "vocabulary.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

namespace therblig {

class service_error : public std::runtime_error {
public:
    enum class kind { bad_request, not_found, conflict, unprocessable };

    service_error(kind k, const std::string& what) : std::runtime_error(what), _kind{k} {}

    [[nodiscard]] kind code() const noexcept { return _kind; }

    [[nodiscard]] int http_status() const noexcept
    {
        switch (_kind) {
        case kind::bad_request: return 400;
        case kind::not_found: return 404;
        case kind::conflict: return 409;
        case kind::unprocessable: return 422;
        }
        return 500;
    }

private:
    kind _kind;
};

struct SegmentRecord {
    std::string segment_id;
    std::string video_id;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    std::string image;
    std::string clip;
    std::optional<std::string> verb;
    std::optional<std::string> noun;

    friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

inline std::string make_segment_id(const std::string& video, std::int64_t start, std::int64_t end)
{
    return video + "_" + std::to_string(start) + "_" + std::to_string(end);
}

struct ContactResponse {
    std::string task_id;
    std::string worker;
    HandContact contact;
    std::int64_t timestamp = 0; // milliseconds since the epoch
};

enum class ConsensusStatus { needs_more, resolved };

inline std::string_view to_string(ConsensusStatus s) noexcept
{
    return s == ConsensusStatus::resolved ? "resolved" : "needs_more";
}

struct ConsensusContact {
    std::string segment_id;
    HandContact contact; // meaningful when resolved
    /// Votes per option for each hand; std::nullopt is "nothing held".
    std::map<std::optional<ObjectIndex>, std::size_t> right_support;
    std::map<std::optional<ObjectIndex>, std::size_t> left_support;
    std::size_t responses = 0;
    ConsensusStatus status = ConsensusStatus::needs_more;

    [[nodiscard]] bool resolved() const noexcept { return status == ConsensusStatus::resolved; }
};

/// Number of pooled answers before a vote is taken.
inline constexpr std::size_t consensus_quorum = 5;

/// Pools answers per hand. Once the quorum is reached a hand resolves to its
/// unique most-voted option; a tie at the top leaves the task open for one
/// more answer. Depends only on the multiset of answers.
inline ConsensusContact compute_consensus(const std::string& segment_id, std::span<const HandContact> answers,
                                          std::size_t quorum = consensus_quorum)
{
    ConsensusContact c;
    c.segment_id = segment_id;
    c.responses = answers.size();
    for (const auto& a : answers) {
        ++c.right_support[a.right];
        ++c.left_support[a.left];
    }
    if (answers.size() < quorum)
        return c;
    auto unique_mode = [](const auto& support) -> std::optional<std::optional<ObjectIndex>> {
        std::size_t best = 0, ties = 0;
        std::optional<ObjectIndex> winner;
        for (const auto& [option, votes] : support) {
            if (votes > best) {
                best = votes;
                ties = 1;
                winner = option;
            } else if (votes == best) {
                ++ties;
            }
        }
        if (ties != 1)
            return std::nullopt;
        return winner;
    };
    auto right = unique_mode(c.right_support);
    auto left = unique_mode(c.left_support);
    if (right && left) {
        c.contact = {*right, *left};
        c.status = ConsensusStatus::resolved;
    }
    return c;
}

struct TherbligAnnotation {
    std::string segment_id;
    std::string worker;
    HandContact consensus_prev;
    HandContact consensus_next;
    HandContact c_prev; // as corrected by the annotator
    HandContact c_next;
    Sequence therbligs;
    std::int64_t timestamp = 0;
};

struct IngestError {
    std::size_t line = 0;
    std::string message;
};

struct IngestResult {
    std::size_t added = 0;
    std::size_t duplicates = 0;
    std::vector<IngestError> errors;
};

struct SubmitResult {
    bool accepted = false;
    ValidationReport report;
};

struct TherbligTask {
    SegmentRecord segment;
    HandContact c_prev;
    HandContact c_next;
    std::optional<std::string> previous_segment_id; // absent for a video's first segment
};

struct CandidateResult {
    std::set<Tuple> candidates;
    std::size_t remaining = 0;
    bool complete = false; // partial already holds N steps or ends in Null
};

struct ServiceOptions {
    /// Event log path; empty keeps everything in memory.
    std::string store_path;
    std::size_t max_steps = default_max_steps;
    bool strict_hold = true;
    /// Prefix prepended to derived media paths.
    std::string media_base = "media";
};

inline std::int64_t now_millis()
{
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

namespace detail {

/// Minimal CSV field splitter supporting double-quoted fields.
inline std::vector<std::string> split_csv_row(std::string_view line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::string(trim(cur)));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(std::string(trim(cur)));
    return fields;
}

inline std::optional<std::int64_t> parse_int(std::string_view s)
{
    if (s.empty())
        return std::nullopt;
    std::int64_t v = 0;
    std::size_t i = 0;
    bool neg = false;
    if (s[0] == '-' || s[0] == '+') {
        neg = s[0] == '-';
        i = 1;
    }
    if (i == s.size())
        return std::nullopt;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9' || v > (INT64_MAX - 9) / 10)
            return std::nullopt;
        v = v * 10 + (s[i] - '0');
    }
    return neg ? -v : v;
}

} // namespace detail

class AnnotationService {
public:
    AnnotationService(ObjectVocabulary vocab, ServiceOptions opts = {})
        : _vocab{std::move(vocab)}, _opts{std::move(opts)}
    {
        if (_vocab.empty())
            throw std::invalid_argument("the annotation service needs a non-empty object vocabulary");
        if (!_opts.store_path.empty())
            replay();
    }

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    [[nodiscard]] const ObjectVocabulary& vocabulary() const noexcept { return _vocab; }
    [[nodiscard]] const ServiceOptions& options() const noexcept { return _opts; }

    // ---- ingestion ---------------------------------------------------------

    /// CSV with a header naming video_id, start_frame, stop_frame and optionally
    /// verb, noun. One segment per row, keyed by (video, start, stop).
    IngestResult ingest_csv(std::istream& in)
    {
        IngestResult result;
        std::string line;
        std::size_t line_no = 0;
        std::map<std::string, std::size_t> columns;
        while (std::getline(in, line)) {
            ++line_no;
            if (detail::trim(line).empty())
                continue;
            auto fields = detail::split_csv_row(line);
            if (columns.empty()) {
                for (std::size_t i = 0; i < fields.size(); ++i)
                    columns[fields[i]] = i;
                for (const char* required : {"video_id", "start_frame", "stop_frame"})
                    if (!columns.count(required))
                        throw service_error(service_error::kind::bad_request,
                                            std::string("CSV header is missing column '") + required + "'");
                continue;
            }
            auto field = [&](const char* name) -> std::optional<std::string> {
                auto it = columns.find(name);
                if (it == columns.end() || it->second >= fields.size())
                    return std::nullopt;
                return fields[it->second];
            };
            const auto video = field("video_id");
            const auto start = detail::parse_int(field("start_frame").value_or(""));
            const auto stop = detail::parse_int(field("stop_frame").value_or(""));
            if (!video || video->empty()) {
                result.errors.push_back({line_no, "missing video_id"});
                continue;
            }
            if (!start || !stop) {
                result.errors.push_back({line_no, "start_frame and stop_frame must be integers"});
                continue;
            }
            if (*start >= *stop) {
                result.errors.push_back({line_no, "start_frame " + std::to_string(*start) +
                                                      " is not before stop_frame " + std::to_string(*stop)});
                continue;
            }
            SegmentRecord seg;
            seg.video_id = *video;
            seg.start_frame = *start;
            seg.end_frame = *stop;
            seg.segment_id = make_segment_id(seg.video_id, seg.start_frame, seg.end_frame);
            seg.image = _opts.media_base + "/" + seg.video_id + "/" + std::to_string(seg.end_frame) + ".jpg";
            seg.clip = _opts.media_base + "/" + seg.video_id + "/" + std::to_string(seg.start_frame) + "_" +
                       std::to_string(seg.end_frame) + ".mp4";
            if (auto v = field("verb"); v && !v->empty())
                seg.verb = *v;
            if (auto n = field("noun"); n && !n->empty())
                seg.noun = *n;

            std::unique_lock lock(_mutex);
            if (_segments.count(seg.segment_id)) {
                ++result.duplicates;
                continue;
            }
            append_event(segment_event(seg));
            add_segment(std::move(seg));
            ++result.added;
        }
        if (columns.empty())
            throw service_error(service_error::kind::bad_request, "CSV input has no header row");
        return result;
    }

    IngestResult ingest_segments(const std::string& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot open '" + path + "'");
        return ingest_csv(in);
    }

    // ---- stage 1 -----------------------------------------------------------

    /// First segment (by id) whose contact is unresolved and that `worker` has not answered.
    [[nodiscard]] std::optional<SegmentRecord> next_contact_task(const std::string& worker) const
    {
        std::shared_lock lock(_mutex);
        for (const auto& [id, seg] : _segments) {
            const auto& st = _contact.at(id);
            if (!st.consensus.resolved() && !st.workers.count(worker))
                return seg;
        }
        return std::nullopt;
    }

    ConsensusContact submit_contact_response(const ContactResponse& r)
    {
        if (r.worker.empty())
            throw service_error(service_error::kind::bad_request, "worker id must be non-empty");
        check_hand(r.contact);
        std::unique_lock lock(_mutex);
        auto it = _contact.find(r.task_id);
        if (it == _contact.end())
            throw service_error(service_error::kind::not_found, "unknown contact task '" + r.task_id + "'");
        if (it->second.consensus.resolved())
            throw service_error(service_error::kind::conflict, "contact task '" + r.task_id + "' is already resolved");
        if (it->second.workers.count(r.worker))
            throw service_error(service_error::kind::conflict,
                                "worker '" + r.worker + "' already answered task '" + r.task_id + "'");
        append_event(response_event(r));
        add_response(r);
        return it->second.consensus;
    }

    [[nodiscard]] ConsensusContact consensus(const std::string& segment_id) const
    {
        std::shared_lock lock(_mutex);
        auto it = _contact.find(segment_id);
        if (it == _contact.end())
            throw service_error(service_error::kind::not_found, "unknown segment '" + segment_id + "'");
        return it->second.consensus;
    }

    // ---- stage 2 -----------------------------------------------------------

    [[nodiscard]] TherbligTask open_therblig_task(const std::string& segment_id) const
    {
        std::shared_lock lock(_mutex);
        return open_task_locked(segment_id);
    }

    /// First segment (by id) whose bracketing contacts are resolved and that has no accepted annotation.
    [[nodiscard]] std::optional<TherbligTask> next_therblig_task(const std::string& /*worker*/) const
    {
        std::shared_lock lock(_mutex);
        for (const auto& [id, seg] : _segments) {
            if (_accepted.count(id))
                continue;
            try {
                return open_task_locked(id);
            } catch (const service_error&) {
            }
        }
        return std::nullopt;
    }

    [[nodiscard]] CandidateResult next_candidates(const std::string& task_id, const HandContact& c_prev,
                                                  const HandContact& c_next, const Sequence& partial) const
    {
        check_hand(c_prev);
        check_hand(c_next);
        {
            std::shared_lock lock(_mutex);
            open_task_locked(task_id);
        }
        if (partial.size() > _opts.max_steps)
            throw service_error(service_error::kind::bad_request,
                                "partial sequence has " + std::to_string(partial.size()) + " steps; the maximum is " +
                                    std::to_string(_opts.max_steps));
        ContactSet state = hand_to_set(c_prev, _vocab);
        const ContactSet goal = hand_to_set(c_next, _vocab);
        for (std::size_t k = 0; k < partial.size(); ++k) {
            auto v = step_violations(state, partial[k], _opts.strict_hold, k, _vocab);
            if (!v.empty())
                throw service_error(service_error::kind::unprocessable,
                                    "partial sequence is already inconsistent: " + v.front().message);
            state = apply_tuple(std::move(state), partial[k]);
        }
        CandidateResult out;
        out.remaining = _opts.max_steps - partial.size();
        out.complete = out.remaining == 0 || (!partial.empty() && partial[partial.size() - 1].is_null());
        if (!out.complete)
            out.candidates = candidate_tuples_with_goal(state, goal, out.remaining, _vocab, _opts.strict_hold);
        return out;
    }

    SubmitResult submit_therblig_annotation(const std::string& task_id, const std::string& worker,
                                            const HandContact& c_prev, const HandContact& c_next,
                                            const Sequence& therbligs)
    {
        if (worker.empty())
            throw service_error(service_error::kind::bad_request, "worker id must be non-empty");
        check_hand(c_prev);
        check_hand(c_next);
        if (therbligs.size() > _opts.max_steps)
            throw service_error(service_error::kind::bad_request,
                                "sequence has " + std::to_string(therbligs.size()) + " steps; the maximum is " +
                                    std::to_string(_opts.max_steps));
        std::unique_lock lock(_mutex);
        const auto task = open_task_locked(task_id);
        if (_accepted.count(task_id))
            throw service_error(service_error::kind::conflict, "task '" + task_id + "' already has an accepted annotation");

        SubmitResult result;
        result.report = validate_sequence(hand_to_set(c_prev, _vocab), therbligs, hand_to_set(c_next, _vocab),
                                          rule_options(), _vocab);
        if (!result.report.consistent())
            return result;

        TherbligAnnotation a;
        a.segment_id = task_id;
        a.worker = worker;
        a.consensus_prev = task.c_prev;
        a.consensus_next = task.c_next;
        a.c_prev = c_prev;
        a.c_next = c_next;
        a.therbligs = therbligs.stripped();
        a.timestamp = now_millis();
        append_event(annotation_event(a));
        _accepted.emplace(task_id, std::move(a));
        result.accepted = true;
        return result;
    }

    // ---- export ------------------------------------------------------------

    /// Accepted annotations as canonical records, ordered by segment id.
    [[nodiscard]] std::vector<AnnotationRecord> accepted_records(const std::optional<std::string>& video = {}) const
    {
        std::shared_lock lock(_mutex);
        std::vector<AnnotationRecord> out;
        for (const auto& [id, a] : _accepted) {
            const auto& seg = _segments.at(id);
            if (video && seg.video_id != *video)
                continue;
            AnnotationRecord r;
            r.segment_id = id;
            r.video_id = seg.video_id;
            r.start_frame = seg.start_frame;
            r.end_frame = seg.end_frame;
            r.c_prev = a.c_prev;
            r.c_next = a.c_next;
            r.therbligs = a.therbligs;
            r.source = "human";
            out.push_back(std::move(r));
        }
        return out;
    }

    void export_annotations(std::ostream& out, const std::optional<std::string>& video = {}) const
    {
        write_jsonl(out, accepted_records(video), _vocab);
    }

    void export_annotations(const std::string& path, const std::optional<std::string>& video = {}) const
    {
        write_jsonl_file(path, accepted_records(video), _vocab);
    }

    [[nodiscard]] std::vector<TherbligAnnotation> accepted_annotations() const
    {
        std::shared_lock lock(_mutex);
        std::vector<TherbligAnnotation> out;
        for (const auto& [id, a] : _accepted)
            out.push_back(a);
        return out;
    }

    [[nodiscard]] std::vector<SegmentRecord> segments() const
    {
        std::shared_lock lock(_mutex);
        std::vector<SegmentRecord> out;
        for (const auto& [id, s] : _segments)
            out.push_back(s);
        return out;
    }

    [[nodiscard]] RuleOptions rule_options() const noexcept { return {_opts.strict_hold, _opts.max_steps}; }

    /// Events dropped while replaying the log (malformed or failing validation).
    [[nodiscard]] std::size_t skipped_on_load() const noexcept { return _skipped; }

private:
    struct ContactState {
        std::vector<HandContact> answers;
        std::set<std::string> workers;
        ConsensusContact consensus;
    };

    void check_hand(const HandContact& h) const
    {
        for (const auto& held : {h.right, h.left})
            if (held && !_vocab.contains(*held))
                throw service_error(service_error::kind::bad_request,
                                    "object index " + std::to_string(*held) + " outside the vocabulary");
    }

    void add_segment(SegmentRecord seg)
    {
        const auto id = seg.segment_id;
        _by_video[seg.video_id].insert({seg.start_frame, seg.end_frame, id});
        ContactState st;
        st.consensus.segment_id = id;
        _contact.emplace(id, std::move(st));
        _segments.emplace(id, std::move(seg));
    }

    void add_response(const ContactResponse& r)
    {
        auto& st = _contact.at(r.task_id);
        st.answers.push_back(r.contact);
        st.workers.insert(r.worker);
        st.consensus = compute_consensus(r.task_id, st.answers);
    }

    std::optional<std::string> previous_segment(const SegmentRecord& seg) const
    {
        const auto& ordered = _by_video.at(seg.video_id);
        auto it = ordered.find({seg.start_frame, seg.end_frame, seg.segment_id});
        if (it == ordered.begin())
            return std::nullopt;
        return std::get<2>(*std::prev(it));
    }

    /// The contact before a video's first segment is taken to be empty hands.
    TherbligTask open_task_locked(const std::string& segment_id) const
    {
        auto it = _segments.find(segment_id);
        if (it == _segments.end())
            throw service_error(service_error::kind::not_found, "unknown segment '" + segment_id + "'");
        TherbligTask task;
        task.segment = it->second;
        task.previous_segment_id = previous_segment(it->second);
        if (task.previous_segment_id) {
            const auto& prev = _contact.at(*task.previous_segment_id).consensus;
            if (!prev.resolved())
                throw service_error(service_error::kind::conflict,
                                    "stage-1 incomplete: contact for '" + *task.previous_segment_id +
                                        "' is unresolved");
            task.c_prev = prev.contact;
        }
        const auto& next = _contact.at(segment_id).consensus;
        if (!next.resolved())
            throw service_error(service_error::kind::conflict,
                                "stage-1 incomplete: contact for '" + segment_id + "' is unresolved");
        task.c_next = next.contact;
        return task;
    }

    // ---- event log ---------------------------------------------------------

    json hand_json(const HandContact& h) const { return to_json(h, _vocab); }

    json segment_event(const SegmentRecord& s) const
    {
        json e = {{"type", "segment"},         {"segment_id", s.segment_id}, {"video_id", s.video_id},
                  {"start_frame", s.start_frame}, {"end_frame", s.end_frame},  {"image", s.image},
                  {"clip", s.clip}};
        e["verb"] = s.verb ? json(*s.verb) : json(nullptr);
        e["noun"] = s.noun ? json(*s.noun) : json(nullptr);
        return e;
    }

    json response_event(const ContactResponse& r) const
    {
        return {{"type", "contact_response"},
                {"task_id", r.task_id},
                {"worker", r.worker},
                {"contact", hand_json(r.contact)},
                {"timestamp", r.timestamp}};
    }

    json annotation_event(const TherbligAnnotation& a) const
    {
        return {{"type", "annotation"},
                {"segment_id", a.segment_id},
                {"worker", a.worker},
                {"consensus_prev", hand_json(a.consensus_prev)},
                {"consensus_next", hand_json(a.consensus_next)},
                {"c_prev", hand_json(a.c_prev)},
                {"c_next", hand_json(a.c_next)},
                {"therbligs", to_json(a.therbligs, _vocab)},
                {"timestamp", a.timestamp}};
    }

    void append_event(const json& e)
    {
        if (_opts.store_path.empty())
            return;
        std::ofstream out(_opts.store_path, std::ios::binary | std::ios::app);
        if (!out)
            throw std::runtime_error("cannot append to store '" + _opts.store_path + "'");
        out << e.dump() << '\n';
        out.flush();
        if (!out)
            throw std::runtime_error("failed writing store '" + _opts.store_path + "'");
    }

    void replay()
    {
        std::ifstream in(_opts.store_path, std::ios::binary);
        if (!in)
            return; // a fresh store
        for (const auto& [n, text] : jsonl_lines(in)) {
            try {
                apply_event(json::parse(text));
            } catch (const std::exception&) {
                ++_skipped;
            }
        }
    }

    void apply_event(const json& e)
    {
        const auto type = detail::require_string(e, "type", "event");
        if (type == "segment") {
            SegmentRecord s;
            s.segment_id = detail::require_string(e, "segment_id", "event");
            s.video_id = detail::require_string(e, "video_id", "event");
            s.start_frame = detail::require_int(e, "start_frame", "event");
            s.end_frame = detail::require_int(e, "end_frame", "event");
            s.image = e.value("image", "");
            s.clip = e.value("clip", "");
            if (auto it = e.find("verb"); it != e.end() && it->is_string())
                s.verb = it->get<std::string>();
            if (auto it = e.find("noun"); it != e.end() && it->is_string())
                s.noun = it->get<std::string>();
            if (s.start_frame >= s.end_frame || _segments.count(s.segment_id))
                throw format_error("invalid or duplicate segment event");
            add_segment(std::move(s));
        } else if (type == "contact_response") {
            ContactResponse r;
            r.task_id = detail::require_string(e, "task_id", "event");
            r.worker = detail::require_string(e, "worker", "event");
            r.contact = hand_contact_from_json(detail::require(e, "contact", "event"), _vocab, "event.contact");
            r.timestamp = e.value("timestamp", std::int64_t{0});
            auto it = _contact.find(r.task_id);
            if (it == _contact.end() || it->second.workers.count(r.worker) || it->second.consensus.resolved())
                throw format_error("response event does not apply");
            add_response(r);
        } else if (type == "annotation") {
            TherbligAnnotation a;
            a.segment_id = detail::require_string(e, "segment_id", "event");
            a.worker = detail::require_string(e, "worker", "event");
            a.consensus_prev = hand_contact_from_json(detail::require(e, "consensus_prev", "event"), _vocab, "event");
            a.consensus_next = hand_contact_from_json(detail::require(e, "consensus_next", "event"), _vocab, "event");
            a.c_prev = hand_contact_from_json(detail::require(e, "c_prev", "event"), _vocab, "event");
            a.c_next = hand_contact_from_json(detail::require(e, "c_next", "event"), _vocab, "event");
            a.therbligs = sequence_from_json(detail::require(e, "therbligs", "event"), _vocab, "event");
            a.timestamp = e.value("timestamp", std::int64_t{0});
            if (!_segments.count(a.segment_id) || _accepted.count(a.segment_id))
                throw format_error("annotation event does not apply");
            const auto report = validate_sequence(hand_to_set(a.c_prev, _vocab), a.therbligs,
                                                  hand_to_set(a.c_next, _vocab), rule_options());
            if (!report.consistent())
                throw format_error("stored annotation fails validation");
            _accepted.emplace(a.segment_id, std::move(a));
        } else {
            throw format_error("unknown event type '" + type + "'");
        }
    }

    ObjectVocabulary _vocab;
    ServiceOptions _opts;
    mutable std::shared_mutex _mutex;
    std::map<std::string, SegmentRecord> _segments;
    std::map<std::string, std::set<std::tuple<std::int64_t, std::int64_t, std::string>>> _by_video;
    std::map<std::string, ContactState> _contact;
    std::map<std::string, TherbligAnnotation> _accepted;
    std::size_t _skipped = 0;
};

} // namespace therblig
