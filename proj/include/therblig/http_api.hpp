#pragma once

// HTTP+JSON front end for AnnotationService.
//
// Handlers are plain functions from a request body to {status, json} so they
// can be exercised without a socket; register_routes wires them to an
// httplib::Server.

#include "records.hpp"
#include "service.hpp"

#include <httplib.h>

#include <initializer_list>
#include <sstream>
#include <string>

namespace therblig {

struct ApiResponse {
    int status = 200;
    json body;
};

namespace detail {

inline ApiResponse error_response(int status, const std::string& message)
{
    return {status, {{"error", message}}};
}

inline json parse_body(const std::string& text)
{
    json body;
    try {
        body = json::parse(text);
    } catch (const json::parse_error& e) {
        throw format_error(std::string("request body is not valid JSON: ") + e.what());
    }
    if (!body.is_object())
        throw format_error("request body must be a JSON object");
    return body;
}

inline void allow_only(const json& body, std::initializer_list<const char*> keys)
{
    for (const auto& [key, value] : body.items()) {
        bool known = false;
        for (const char* k : keys)
            known = known || key == k;
        if (!known)
            throw format_error("unexpected field '" + key + "'");
    }
}

/// Runs `fn`, translating the library's exceptions into HTTP status codes.
template <typename Fn>
ApiResponse guarded(Fn&& fn)
{
    try {
        return fn();
    } catch (const service_error& e) {
        return error_response(e.http_status(), e.what());
    } catch (const format_error& e) {
        return error_response(400, e.what());
    } catch (const std::invalid_argument& e) {
        return error_response(400, e.what());
    } catch (const std::out_of_range& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

inline json segment_json(const SegmentRecord& s)
{
    json out = {{"segment_id", s.segment_id}, {"video_id", s.video_id}, {"start_frame", s.start_frame},
                {"end_frame", s.end_frame},   {"image", s.image},       {"clip", s.clip}};
    out["verb"] = s.verb ? json(*s.verb) : json(nullptr);
    out["noun"] = s.noun ? json(*s.noun) : json(nullptr);
    return out;
}

inline json consensus_json(const ConsensusContact& c, const ObjectVocabulary& vocab)
{
    auto support = [&](const auto& votes) {
        json out = json::object();
        for (const auto& [option, n] : votes)
            out[option ? vocab.name(*option) : std::string("none")] = n;
        return out;
    };
    json out = {{"segment_id", c.segment_id},
                {"status", std::string(to_string(c.status))},
                {"responses", c.responses},
                {"right_votes", support(c.right_support)},
                {"left_votes", support(c.left_support)}};
    out["contact"] = c.resolved() ? to_json(c.contact, vocab) : json(nullptr);
    return out;
}

inline json task_json(const TherbligTask& t, const AnnotationService& svc)
{
    const auto& vocab = svc.vocabulary();
    json out = {{"task_id", t.segment.segment_id},
                {"segment", segment_json(t.segment)},
                {"c_prev", to_json(t.c_prev, vocab)},
                {"c_next", to_json(t.c_next, vocab)},
                {"vocabulary", vocab.names()},
                {"max_steps", svc.options().max_steps},
                {"strict_hold", svc.options().strict_hold}};
    out["previous_segment_id"] = t.previous_segment_id ? json(*t.previous_segment_id) : json(nullptr);
    return out;
}

} // namespace detail

/// POST /ingest with the CSV text.
inline ApiResponse api_ingest(AnnotationService& svc, const std::string& csv)
{
    return detail::guarded([&] {
        std::istringstream in(csv);
        const auto r = svc.ingest_csv(in);
        json errors = json::array();
        for (const auto& e : r.errors)
            errors.push_back({{"line", e.line}, {"message", e.message}});
        return ApiResponse{200, {{"added", r.added}, {"duplicates", r.duplicates}, {"errors", errors}}};
    });
}

/// GET /tasks/contact/next?worker=. 204 when nothing is left for this worker.
inline ApiResponse api_next_contact_task(const AnnotationService& svc, const std::string& worker)
{
    return detail::guarded([&] {
        if (worker.empty())
            return detail::error_response(400, "query parameter 'worker' is required");
        auto seg = svc.next_contact_task(worker);
        if (!seg)
            return ApiResponse{204, nullptr};
        json out = detail::segment_json(*seg);
        out["task_id"] = seg->segment_id;
        out["vocabulary"] = svc.vocabulary().names();
        return ApiResponse{200, out};
    });
}

/// POST /tasks/contact/{id}/response with {"worker", "right", "left"}.
inline ApiResponse api_submit_contact(AnnotationService& svc, const std::string& task_id, const std::string& text)
{
    return detail::guarded([&] {
        const json body = detail::parse_body(text);
        detail::allow_only(body, {"worker", "right", "left"});
        ContactResponse r;
        r.task_id = task_id;
        r.worker = detail::require_string(body, "worker", "body");
        r.contact = hand_contact_from_json(body, svc.vocabulary(), "body");
        r.timestamp = now_millis();
        return ApiResponse{200, detail::consensus_json(svc.submit_contact_response(r), svc.vocabulary())};
    });
}

/// GET /tasks/therblig/next?worker=. 204 when no task is openable.
inline ApiResponse api_next_therblig_task(const AnnotationService& svc, const std::string& worker)
{
    return detail::guarded([&] {
        if (worker.empty())
            return detail::error_response(400, "query parameter 'worker' is required");
        auto task = svc.next_therblig_task(worker);
        if (!task)
            return ApiResponse{204, nullptr};
        return ApiResponse{200, detail::task_json(*task, svc)};
    });
}

/// GET /tasks/therblig/{id}.
inline ApiResponse api_open_therblig_task(const AnnotationService& svc, const std::string& task_id)
{
    return detail::guarded([&] { return ApiResponse{200, detail::task_json(svc.open_therblig_task(task_id), svc)}; });
}

/// POST /tasks/therblig/{id}/candidates with {"c_prev", "c_next", "partial"}.
inline ApiResponse api_candidates(const AnnotationService& svc, const std::string& task_id, const std::string& text)
{
    return detail::guarded([&] {
        const auto& vocab = svc.vocabulary();
        const json body = detail::parse_body(text);
        detail::allow_only(body, {"c_prev", "c_next", "partial"});
        const auto c_prev = hand_contact_from_json(detail::require(body, "c_prev", "body"), vocab, "body.c_prev");
        const auto c_next = hand_contact_from_json(detail::require(body, "c_next", "body"), vocab, "body.c_next");
        Sequence partial;
        if (auto it = body.find("partial"); it != body.end())
            partial = sequence_from_json(*it, vocab, "body.partial");
        const auto r = svc.next_candidates(task_id, c_prev, c_next, partial);
        json candidates = json::array();
        for (const auto& t : r.candidates)
            candidates.push_back(to_json(t, vocab));
        return ApiResponse{200, {{"candidates", candidates}, {"remaining", r.remaining}, {"complete", r.complete}}};
    });
}

/// POST /tasks/therblig/{id}/submit with {"worker", "c_prev", "c_next", "therbligs"}.
/// 422 carries the violation report when the sequence is rejected.
inline ApiResponse api_submit_therbligs(AnnotationService& svc, const std::string& task_id, const std::string& text)
{
    return detail::guarded([&] {
        const auto& vocab = svc.vocabulary();
        const json body = detail::parse_body(text);
        detail::allow_only(body, {"worker", "c_prev", "c_next", "therbligs"});
        const auto worker = detail::require_string(body, "worker", "body");
        const auto c_prev = hand_contact_from_json(detail::require(body, "c_prev", "body"), vocab, "body.c_prev");
        const auto c_next = hand_contact_from_json(detail::require(body, "c_next", "body"), vocab, "body.c_next");
        const auto seq = sequence_from_json(detail::require(body, "therbligs", "body"), vocab, "body.therbligs");
        const auto r = svc.submit_therblig_annotation(task_id, worker, c_prev, c_next, seq);
        json out = {{"accepted", r.accepted}, {"report", to_json(r.report, vocab)}};
        return ApiResponse{r.accepted ? 200 : 422, out};
    });
}

/// GET /export?video=. The body is JSONL text, not JSON.
inline std::string api_export(const AnnotationService& svc, const std::optional<std::string>& video)
{
    std::ostringstream out;
    svc.export_annotations(out, video);
    return out.str();
}

inline void register_routes(httplib::Server& server, AnnotationService& svc)
{
    auto send = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        if (r.status != 204)
            res.set_content(r.body.dump(), "application/json");
    };
    auto worker_of = [](const httplib::Request& req) {
        return req.has_param("worker") ? req.get_param_value("worker") : std::string{};
    };

    server.Post("/ingest", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        std::string csv = req.body;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("file")) {
                send(res, detail::error_response(400, "multipart upload needs a 'file' part"));
                return;
            }
            csv = req.get_file_value("file").content;
        }
        send(res, api_ingest(svc, csv));
    });
    server.Get("/tasks/contact/next", [&svc, send, worker_of](const httplib::Request& req, httplib::Response& res) {
        send(res, api_next_contact_task(svc, worker_of(req)));
    });
    server.Post(R"(/tasks/contact/([^/]+)/response)", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_submit_contact(svc, req.matches[1], req.body));
    });
    server.Get("/tasks/therblig/next", [&svc, send, worker_of](const httplib::Request& req, httplib::Response& res) {
        send(res, api_next_therblig_task(svc, worker_of(req)));
    });
    server.Get(R"(/tasks/therblig/([^/]+))", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_open_therblig_task(svc, req.matches[1]));
    });
    server.Post(R"(/tasks/therblig/([^/]+)/candidates)",
                [&svc, send](const httplib::Request& req, httplib::Response& res) {
                    send(res, api_candidates(svc, req.matches[1], req.body));
                });
    server.Post(R"(/tasks/therblig/([^/]+)/submit)", [&svc, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_submit_therbligs(svc, req.matches[1], req.body));
    });
    server.Get("/export", [&svc](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> video;
        if (req.has_param("video"))
            video = req.get_param_value("video");
        res.set_content(api_export(svc, video), "application/x-ndjson");
    });
    server.Get("/vocabulary", [&svc, send](const httplib::Request&, httplib::Response& res) {
        send(res, {200, json(svc.vocabulary().names())});
    });
}

} // namespace therblig
