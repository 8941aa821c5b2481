#pragma once

// Canonical JSON-lines annotation records and JSON conversions of the core
// types. One record per line:
//
//   {"segment_id": "...", "video_id": "...", "start_frame": 0, "end_frame": 100,
//    "c_prev": {"right": "knife", "left": null}, "c_next": {...},
//    "therbligs": [{"verb": "G", "object": "knife"}, ...],
//    "source": "human" | "synthetic"}
//
// Lines starting with '#' are comments; blank lines are ignored.

#include "rules.hpp"
#include "vocabulary.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace therblig {

using json = nlohmann::json;

inline constexpr std::string_view jsonl_header = "# therblig annotations v1";

/// Raised for structurally invalid JSON payloads; carries a field path.
class format_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct AnnotationRecord {
    std::string segment_id;
    std::string video_id;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    HandContact c_prev;
    HandContact c_next;
    Sequence therbligs;
    std::string source = "human";

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

// ---------------------------------------------------------------------------
// Core types <-> JSON

inline json to_json(const Tuple& t, const ObjectVocabulary& vocab)
{
    if (t.is_null())
        return {{"verb", "-"}, {"object", nullptr}};
    return {{"verb", std::string(verb_code(t.verb()))}, {"object", vocab.name(t.object())}};
}

inline json to_json(const Sequence& s, const ObjectVocabulary& vocab, bool include_null = false)
{
    json out = json::array();
    for (const auto& t : s)
        if (include_null || !t.is_null())
            out.push_back(to_json(t, vocab));
    return out;
}

inline json to_json(const HandContact& h, const ObjectVocabulary& vocab)
{
    json out = json::object();
    out["right"] = h.right ? json(vocab.name(*h.right)) : json(nullptr);
    out["left"] = h.left ? json(vocab.name(*h.left)) : json(nullptr);
    return out;
}

inline json to_json(const ContactSet& c, const ObjectVocabulary& vocab)
{
    json out = json::array();
    for (ObjectIndex o : c)
        out.push_back(vocab.name(o));
    return out;
}

inline json to_json(const RuleViolation& v, const ObjectVocabulary& vocab)
{
    json out = {{"rule", v.rule}, {"message", v.message}};
    out["step"] = v.step ? json(*v.step) : json(nullptr);
    out["tuple"] = v.tuple ? json(to_text(*v.tuple, vocab)) : json(nullptr);
    return out;
}

inline json to_json(const ValidationReport& r, const ObjectVocabulary& vocab)
{
    json violations = json::array();
    for (const auto& v : r.violations)
        violations.push_back(to_json(v, vocab));
    json states = json::array();
    for (const auto& s : r.derived_states)
        states.push_back(to_text(s, vocab));
    return {{"consistent", r.consistent()}, {"violations", violations}, {"derived_states", states}};
}

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where)
{
    if (!j.is_object())
        throw format_error(where + ": expected a JSON object");
    auto it = j.find(key);
    if (it == j.end())
        throw format_error(where + ": missing field '" + key + "'");
    return *it;
}

inline std::string require_string(const json& j, const char* key, const std::string& where)
{
    const auto& v = require(j, key, where);
    if (!v.is_string())
        throw format_error(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline std::int64_t require_int(const json& j, const char* key, const std::string& where)
{
    const auto& v = require(j, key, where);
    if (!v.is_number_integer())
        throw format_error(where + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
}

inline std::optional<ObjectIndex> optional_object(const json& v, const ObjectVocabulary& vocab,
                                                  const std::string& where)
{
    if (v.is_null())
        return std::nullopt;
    if (!v.is_string())
        throw format_error(where + ": expected an object name or null");
    const auto name = v.get<std::string>();
    if (name.empty() || name == "none")
        return std::nullopt;
    auto idx = vocab.find(name);
    if (!idx)
        throw format_error(where + ": unknown object class '" + name + "'");
    return idx;
}

} // namespace detail

inline Tuple tuple_from_json(const json& j, const ObjectVocabulary& vocab, const std::string& where = "tuple")
{
    if (j.is_string())
        try {
            return parse_tuple(j.get<std::string>(), vocab);
        } catch (const std::exception& e) {
            throw format_error(where + ": " + e.what());
        }
    const auto code = detail::require_string(j, "verb", where);
    auto verb = parse_verb(code);
    if (!verb)
        throw format_error(where + ".verb: unknown verb code '" + code + "'");
    if (*verb == Verb::Null) {
        auto it = j.find("object");
        if (it != j.end() && !it->is_null())
            throw format_error(where + ": the null verb carries no object");
        return Tuple::null();
    }
    auto object = detail::optional_object(detail::require(j, "object", where), vocab, where + ".object");
    if (!object)
        throw format_error(where + ".object: verb '" + code + "' needs an object");
    return Tuple{*verb, *object};
}

inline Sequence sequence_from_json(const json& j, const ObjectVocabulary& vocab, const std::string& where = "therbligs")
{
    if (!j.is_array())
        throw format_error(where + ": expected an array of tuples");
    std::vector<Tuple> steps;
    steps.reserve(j.size());
    for (std::size_t k = 0; k < j.size(); ++k)
        steps.push_back(tuple_from_json(j[k], vocab, where + "[" + std::to_string(k) + "]"));
    try {
        return Sequence(std::move(steps));
    } catch (const std::invalid_argument& e) {
        throw format_error(where + ": " + e.what());
    }
}

inline HandContact hand_contact_from_json(const json& j, const ObjectVocabulary& vocab, const std::string& where)
{
    if (!j.is_object())
        throw format_error(where + ": expected {\"right\": ..., \"left\": ...}");
    HandContact h;
    if (auto it = j.find("right"); it != j.end())
        h.right = detail::optional_object(*it, vocab, where + ".right");
    if (auto it = j.find("left"); it != j.end())
        h.left = detail::optional_object(*it, vocab, where + ".left");
    return h;
}

inline json to_json(const AnnotationRecord& r, const ObjectVocabulary& vocab)
{
    json out = json::object();
    out["segment_id"] = r.segment_id;
    out["video_id"] = r.video_id;
    out["start_frame"] = r.start_frame;
    out["end_frame"] = r.end_frame;
    out["c_prev"] = to_json(r.c_prev, vocab);
    out["c_next"] = to_json(r.c_next, vocab);
    out["therbligs"] = to_json(r.therbligs, vocab);
    out["source"] = r.source;
    return out;
}

inline AnnotationRecord record_from_json(const json& j, const ObjectVocabulary& vocab,
                                         const std::string& where = "record")
{
    AnnotationRecord r;
    r.segment_id = detail::require_string(j, "segment_id", where);
    r.video_id = detail::require_string(j, "video_id", where);
    r.start_frame = detail::require_int(j, "start_frame", where);
    r.end_frame = detail::require_int(j, "end_frame", where);
    if (r.start_frame >= r.end_frame)
        throw format_error(where + ": start_frame must be less than end_frame");
    r.c_prev = hand_contact_from_json(detail::require(j, "c_prev", where), vocab, where + ".c_prev");
    r.c_next = hand_contact_from_json(detail::require(j, "c_next", where), vocab, where + ".c_next");
    r.therbligs = sequence_from_json(detail::require(j, "therbligs", where), vocab, where + ".therbligs");
    if (auto it = j.find("source"); it != j.end()) {
        if (!it->is_string() || (*it != "human" && *it != "synthetic"))
            throw format_error(where + ".source: expected \"human\" or \"synthetic\"");
        r.source = it->get<std::string>();
    }
    return r;
}

inline ValidationReport validate_record(const AnnotationRecord& r, const ObjectVocabulary& vocab,
                                        const RuleOptions& opts = {})
{
    return validate_sequence(hand_to_set(r.c_prev, vocab), r.therbligs, hand_to_set(r.c_next, vocab), opts, vocab);
}

// ---------------------------------------------------------------------------
// JSONL files

inline void write_jsonl(std::ostream& out, const std::vector<AnnotationRecord>& records,
                        const ObjectVocabulary& vocab)
{
    out << jsonl_header << '\n';
    for (const auto& r : records)
        out << to_json(r, vocab).dump() << '\n';
}

inline void write_jsonl_file(const std::string& path, const std::vector<AnnotationRecord>& records,
                             const ObjectVocabulary& vocab)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    write_jsonl(out, records, vocab);
    if (!out.flush())
        throw std::runtime_error("failed writing '" + path + "'");
}

/// Non-comment, non-blank lines paired with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> jsonl_lines(std::istream& in)
{
    std::vector<std::pair<std::size_t, std::string>> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        out.emplace_back(n, std::string(t));
    }
    return out;
}

inline json parse_json_line(const std::string& text, std::size_t line)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw format_error("line " + std::to_string(line) + ": " + e.what());
    }
}

inline std::vector<AnnotationRecord> read_jsonl(std::istream& in, const ObjectVocabulary& vocab)
{
    std::vector<AnnotationRecord> out;
    for (const auto& [n, text] : jsonl_lines(in))
        out.push_back(record_from_json(parse_json_line(text, n), vocab, "line " + std::to_string(n)));
    return out;
}

inline std::vector<AnnotationRecord> read_jsonl_file(const std::string& path, const ObjectVocabulary& vocab)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    return read_jsonl(in, vocab);
}

/// Sorted object names mentioned anywhere in a record stream.
inline ObjectVocabulary infer_vocabulary(std::istream& in)
{
    std::set<std::string> names;
    auto add = [&](const json& v) {
        if (v.is_string() && !v.get<std::string>().empty() && v.get<std::string>() != "none")
            names.insert(v.get<std::string>());
    };
    for (const auto& [n, text] : jsonl_lines(in)) {
        const auto j = parse_json_line(text, n);
        for (const char* key : {"c_prev", "c_next"})
            if (auto it = j.find(key); it != j.end() && it->is_object())
                for (const char* hand : {"right", "left"})
                    if (auto h = it->find(hand); h != it->end())
                        add(*h);
        if (auto it = j.find("therbligs"); it != j.end() && it->is_array())
            for (const auto& t : *it) {
                if (t.is_object()) {
                    if (auto o = t.find("object"); o != t.end())
                        add(*o);
                } else if (t.is_string()) {
                    auto s = t.get<std::string>();
                    if (auto colon = s.find(':'); colon != std::string::npos)
                        names.insert(std::string(detail::trim(std::string_view(s).substr(colon + 1))));
                }
            }
    }
    if (names.empty())
        names.insert("object_00");
    return ObjectVocabulary(std::vector<std::string>(names.begin(), names.end()));
}

/// Vocabulary file: a JSON array of names, or one name per line ('#' comments allowed).
inline ObjectVocabulary load_vocabulary(std::istream& in)
{
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto body = detail::trim(text);
    if (!body.empty() && body.front() == '[') {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::parse_error& e) {
            throw format_error(std::string("vocabulary: ") + e.what());
        }
        std::vector<std::string> names;
        for (const auto& v : j) {
            if (!v.is_string())
                throw format_error("vocabulary: expected an array of strings");
            names.push_back(v.get<std::string>());
        }
        return ObjectVocabulary(std::move(names));
    }
    std::vector<std::string> names;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        auto t = detail::trim(line);
        if (!t.empty() && t.front() != '#')
            names.emplace_back(t);
    }
    return ObjectVocabulary(std::move(names));
}

inline ObjectVocabulary load_vocabulary_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open vocabulary file '" + path + "'");
    return load_vocabulary(in);
}

} // namespace therblig
