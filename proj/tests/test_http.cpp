#include "support.hpp"

#include <therblig/http_api.hpp>

#include <chrono>
#include <memory>
#include <thread>

using namespace therblig;
using namespace test_support;

namespace {

constexpr const char* rows = "video_id,start_frame,stop_frame\nP01_01,0,120\nP01_01,120,260\n";

std::unique_ptr<AnnotationService> ready_service()
{
    auto owned = std::make_unique<AnnotationService>(kitchen());
    auto& svc = *owned;
    REQUIRE(api_ingest(svc, rows).body["added"] == 2);
    for (int w = 0; w < 5; ++w)
        REQUIRE(api_submit_contact(svc, "P01_01_0_120", json{{"worker", "w" + std::to_string(w)}, {"right", "knife"}}.dump())
                    .status == 200);
    return owned;
}

} // namespace

TEST_CASE("ingest reports counts and row errors", "[http]")
{
    AnnotationService svc(kitchen());
    auto r = api_ingest(svc, "video_id,start_frame,stop_frame\nV,0,10\nV,5,5\n");
    CHECK(r.status == 200);
    CHECK(r.body["added"] == 1);
    CHECK(r.body["errors"][0]["line"] == 3);
    CHECK(api_ingest(svc, "video,start\n").status == 400);
}

TEST_CASE("contact task flow", "[http]")
{
    AnnotationService svc(kitchen());
    api_ingest(svc, rows);
    CHECK(api_next_contact_task(svc, "").status == 400);
    auto r = api_next_contact_task(svc, "w");
    CHECK(r.status == 200);
    CHECK(r.body["task_id"] == "P01_01_0_120");
    CHECK(r.body["vocabulary"].size() == 3);

    r = api_submit_contact(svc, "P01_01_0_120", R"({"worker":"w","right":"knife","left":null})");
    CHECK(r.status == 200);
    CHECK(r.body["status"] == "needs_more");
    CHECK(r.body["right_votes"]["knife"] == 1);
    CHECK(r.body["contact"].is_null());

    CHECK(api_submit_contact(svc, "P01_01_0_120", R"({"worker":"w","right":"bowl"})").status == 409);
    CHECK(api_submit_contact(svc, "nope", R"({"worker":"x"})").status == 404);
    CHECK(api_submit_contact(svc, "P01_01_0_120", R"({"worker":"x","right":"spoon"})").status == 400);
    CHECK(api_submit_contact(svc, "P01_01_0_120", R"({"worker":"x","extra":1})").status == 400);
    CHECK(api_submit_contact(svc, "P01_01_0_120", R"({"right":"knife"})").status == 400);
    CHECK(api_submit_contact(svc, "P01_01_0_120", "not json").status == 400);
    CHECK(api_submit_contact(svc, "P01_01_0_120", "[1,2]").status == 400);
}

TEST_CASE("therblig task flow", "[http]")
{
    auto owned = ready_service();
    auto& svc = *owned;
    auto r = api_open_therblig_task(svc, "P01_01_0_120");
    REQUIRE(r.status == 200);
    CHECK(r.body["c_prev"] == json{{"right", nullptr}, {"left", nullptr}});
    CHECK(r.body["c_next"]["right"] == "knife");
    CHECK(r.body["max_steps"] == 6);
    CHECK(api_open_therblig_task(svc, "P01_01_120_260").status == 409);
    CHECK(api_open_therblig_task(svc, "missing").status == 404);
    CHECK(api_next_therblig_task(svc, "w").body["task_id"] == "P01_01_0_120");

    const json bracket = {{"c_prev", json::object()}, {"c_next", {{"right", "knife"}}}};
    auto body = bracket;
    body["partial"] = json::array({"Re:knife"});
    r = api_candidates(svc, "P01_01_0_120", body.dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["remaining"] == 5);
    CHECK(r.body["complete"] == false);
    CHECK(r.body["candidates"].size() > 0);

    body["partial"] = json::array({"M:knife"});
    CHECK(api_candidates(svc, "P01_01_0_120", body.dump()).status == 422);
    body["bogus"] = true;
    CHECK(api_candidates(svc, "P01_01_0_120", body.dump()).status == 400);

    auto submit = bracket;
    submit["worker"] = "w";
    submit["therbligs"] = json::array({json{{"verb", "M"}, {"object", "tomato"}}});
    r = api_submit_therbligs(svc, "P01_01_0_120", submit.dump());
    CHECK(r.status == 422);
    CHECK(r.body["accepted"] == false);
    CHECK(r.body["report"]["violations"].size() >= 1);

    submit["therbligs"] = json::array({"Re:knife", "G:knife", "-"});
    r = api_submit_therbligs(svc, "P01_01_0_120", submit.dump());
    CHECK(r.status == 200);
    CHECK(r.body["accepted"] == true);
    CHECK(api_submit_therbligs(svc, "P01_01_0_120", submit.dump()).status == 409);
    CHECK(api_next_therblig_task(svc, "w").status == 204);

    const auto exported = api_export(svc, std::nullopt);
    CHECK(exported.find("\"segment_id\":\"P01_01_0_120\"") != std::string::npos);
    CHECK(api_export(svc, std::string("other")) == std::string(jsonl_header) + "\n");
}

TEST_CASE("malformed bodies never escape as exceptions", "[http][property]")
{
    auto owned = ready_service();
    auto& svc = *owned;
    std::mt19937_64 rng(2024);
    const std::vector<std::string> fragments{"{", "}", "\"worker\"", ":", ",", "\"c_prev\"", "\"therbligs\"",
                                             "[", "]", "\"G:knife\"", "null", "1", "\"knife\"", "{}", "\"partial\""};
    for (int i = 0; i < 500; ++i) {
        std::string text;
        for (std::size_t k = 0, n = rng() % 12; k < n; ++k)
            text += fragments[rng() % fragments.size()];
        for (auto r : {api_candidates(svc, "P01_01_0_120", text), api_submit_therbligs(svc, "P01_01_0_120", text),
                       api_submit_contact(svc, "P01_01_120_260", text)}) {
            REQUIRE(r.status != 500);
            if (r.status >= 400)
                REQUIRE(r.body.contains("error"));
        }
    }
}

TEST_CASE("routes answer over a real socket", "[http]")
{
    auto owned = ready_service();
    auto& svc = *owned;
    httplib::Server server;
    register_routes(server, svc);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread thread([&] { server.listen_after_bind(); });
    for (int i = 0; i < 100 && !server.is_running(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));

    httplib::Client client("127.0.0.1", port);
    auto vocab = client.Get("/vocabulary");
    REQUIRE(vocab);
    CHECK(json::parse(vocab->body) == json{"knife", "bowl", "tomato"});

    auto ingest = client.Post("/ingest", "video_id,start_frame,stop_frame\nQ,0,5\n", "text/csv");
    REQUIRE(ingest);
    CHECK(json::parse(ingest->body)["added"] == 1);

    httplib::MultipartFormDataItems parts{{"file", "video_id,start_frame,stop_frame\nQ,5,9\n", "s.csv", "text/csv"}};
    auto multipart = client.Post("/ingest", parts);
    REQUIRE(multipart);
    CHECK(json::parse(multipart->body)["added"] == 1);

    auto next = client.Get("/tasks/therblig/next?worker=w");
    REQUIRE(next);
    CHECK(next->status == 200);
    CHECK(json::parse(next->body)["task_id"] == "P01_01_0_120");

    auto task = client.Get("/tasks/therblig/P01_01_0_120");
    REQUIRE(task);
    CHECK(task->status == 200);

    auto cands = client.Post("/tasks/therblig/P01_01_0_120/candidates",
                             R"({"c_prev":{},"c_next":{"right":"knife"},"partial":[]})", "application/json");
    REQUIRE(cands);
    CHECK(cands->status == 200);

    auto submit = client.Post("/tasks/therblig/P01_01_0_120/submit",
                              R"({"worker":"w","c_prev":{},"c_next":{"right":"knife"},"therbligs":["G:knife"]})",
                              "application/json");
    REQUIRE(submit);
    CHECK(submit->status == 200);

    auto contact = client.Post("/tasks/contact/Q_0_5/response", R"({"worker":"w"})", "application/json");
    REQUIRE(contact);
    CHECK(contact->status == 200);
    auto none = client.Get("/tasks/contact/next?worker=nobody");
    REQUIRE(none);
    CHECK(none->status == 200);

    auto exported = client.Get("/export?video=P01_01");
    REQUIRE(exported);
    CHECK(exported->body.find("G") != std::string::npos);

    server.stop();
    thread.join();
}
