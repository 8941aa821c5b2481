#include "support.hpp"

#include <therblig/datagen.hpp>
#include <therblig/records.hpp>

#include <fstream>
#include <sstream>

using namespace therblig;
using namespace test_support;

namespace {

AnnotationRecord knife_record()
{
    AnnotationRecord r;
    r.segment_id = "P01_01_0_120";
    r.video_id = "P01_01";
    r.start_frame = 0;
    r.end_frame = 120;
    r.c_prev = {};
    r.c_next = {std::nullopt, 1u};
    r.therbligs = seq("Re:knife;G:knife;M:knife;R:knife;Re:bowl;G:bowl");
    return r;
}

} // namespace

TEST_CASE("records serialise to the canonical JSON shape", "[records]")
{
    const auto j = to_json(knife_record(), kitchen());
    CHECK(j["segment_id"] == "P01_01_0_120");
    CHECK(j["c_prev"] == json{{"right", nullptr}, {"left", nullptr}});
    CHECK(j["c_next"] == json{{"right", nullptr}, {"left", "bowl"}});
    CHECK(j["therbligs"][0] == json{{"verb", "Re"}, {"object", "knife"}});
    CHECK(j["therbligs"].size() == 6);
    CHECK(j["source"] == "human");
}

TEST_CASE("Null padding is dropped on output unless asked for", "[records]")
{
    const auto s = seq("G:knife;-;-");
    CHECK(to_json(s, kitchen()).size() == 1);
    auto with_null = to_json(s, kitchen(), true);
    REQUIRE(with_null.size() == 3);
    CHECK(with_null[2] == json{{"verb", "-"}, {"object", nullptr}});
    CHECK(sequence_from_json(with_null, kitchen()) == s);
}

TEST_CASE("tuples parse from objects or text", "[records]")
{
    const auto& v = kitchen();
    CHECK(tuple_from_json(json{{"verb", "G"}, {"object", "knife"}}, v) == tup("G:knife"));
    CHECK(tuple_from_json(json("O:tomato"), v) == tup("O:tomato"));
    CHECK(tuple_from_json(json{{"verb", "-"}}, v).is_null());
    CHECK_THROWS_AS(tuple_from_json(json{{"verb", "Z"}, {"object", "knife"}}, v), format_error);
    CHECK_THROWS_AS(tuple_from_json(json{{"verb", "G"}}, v), format_error);
    CHECK_THROWS_AS(tuple_from_json(json{{"verb", "G"}, {"object", nullptr}}, v), format_error);
    CHECK_THROWS_AS(tuple_from_json(json{{"verb", "G"}, {"object", "spoon"}}, v), format_error);
    CHECK_THROWS_AS(tuple_from_json(json{{"verb", "-"}, {"object", "knife"}}, v), format_error);
    CHECK_THROWS_AS(tuple_from_json(json("G knife"), v), format_error);
    CHECK_THROWS_AS(tuple_from_json(json(3), v), format_error);
}

TEST_CASE("hand contacts accept null, empty and none as an empty hand", "[records]")
{
    const auto& v = kitchen();
    CHECK(hand_contact_from_json(json{{"right", nullptr}, {"left", ""}}, v, "h") == HandContact{});
    CHECK(hand_contact_from_json(json{{"right", "none"}}, v, "h") == HandContact{});
    CHECK(hand_contact_from_json(json{{"right", "tomato"}}, v, "h").right == 2u);
    CHECK_THROWS_AS(hand_contact_from_json(json{{"right", 2}}, v, "h"), format_error);
    CHECK_THROWS_AS(hand_contact_from_json(json::array(), v, "h"), format_error);
}

TEST_CASE("sequences reject a step after Null", "[records]")
{
    CHECK_THROWS_AS(sequence_from_json(json{"-", "G:knife"}, kitchen()), format_error);
    CHECK_THROWS_AS(sequence_from_json(json("G:knife"), kitchen()), format_error);
}

TEST_CASE("record parsing checks required fields and frame order", "[records]")
{
    const auto& v = kitchen();
    auto j = to_json(knife_record(), v);
    CHECK(record_from_json(j, v) == knife_record());

    for (const char* key : {"segment_id", "video_id", "start_frame", "end_frame", "c_prev", "c_next", "therbligs"}) {
        auto broken = j;
        broken.erase(key);
        CHECK_THROWS_AS(record_from_json(broken, v), format_error);
    }
    auto swapped = j;
    swapped["start_frame"] = 200;
    CHECK_THROWS_AS(record_from_json(swapped, v), format_error);
    auto bad_source = j;
    bad_source["source"] = "robot";
    CHECK_THROWS_AS(record_from_json(bad_source, v), format_error);
    auto frac = j;
    frac["end_frame"] = 12.5;
    CHECK_THROWS_AS(record_from_json(frac, v), format_error);
}

TEST_CASE("validate_record uses both hands as contact sets", "[records]")
{
    CHECK(validate_record(knife_record(), kitchen()).consistent());
    auto r = knife_record();
    r.c_next = {};
    CHECK(validate_record(r, kitchen()).count(1) == 1);
}

TEST_CASE("JSONL writing starts with a header and reads back", "[records]")
{
    std::stringstream buf;
    write_jsonl(buf, {}, kitchen());
    CHECK(buf.str() == std::string(jsonl_header) + "\n");

    std::stringstream two;
    write_jsonl(two, {knife_record(), knife_record()}, kitchen());
    std::string first;
    std::getline(two, first);
    CHECK(first == jsonl_header);
    two.seekg(0);
    CHECK(read_jsonl(two, kitchen()).size() == 2);
}

TEST_CASE("JSONL reading reports the failing line", "[records]")
{
    std::istringstream in(std::string(jsonl_header) + "\n\n" + to_json(knife_record(), kitchen()).dump() +
                          "\n{not json}\n");
    try {
        read_jsonl(in, kitchen());
        FAIL("expected a format_error");
    } catch (const format_error& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
}

TEST_CASE("vocabularies load from JSON arrays or line lists", "[records]")
{
    std::istringstream a(R"(["knife", "bowl"])");
    CHECK(load_vocabulary(a).names() == std::vector<std::string>{"knife", "bowl"});
    std::istringstream b("# kitchen\nknife\n\n  bowl \n");
    CHECK(load_vocabulary(b).names() == std::vector<std::string>{"knife", "bowl"});
    std::istringstream c(R"(["knife", 3])");
    CHECK_THROWS_AS(load_vocabulary(c), format_error);
    std::istringstream d("");
    CHECK_THROWS_AS(load_vocabulary(d), std::invalid_argument);
    CHECK_THROWS_AS(load_vocabulary_file("/nonexistent/vocab.json"), std::runtime_error);
    CHECK(load_vocabulary_file(THERBLIG_FIXTURES "/kitchen_vocab.json") == kitchen());
}

TEST_CASE("vocabulary inference collects every mentioned object", "[records]")
{
    std::stringstream buf;
    write_jsonl(buf, {knife_record()}, kitchen());
    const auto v = infer_vocabulary(buf);
    CHECK(v.names() == std::vector<std::string>{"bowl", "knife"});
}

TEST_CASE("generated records survive a file round trip", "[records][property]")
{
    TempDir dir;
    const auto vocab = ObjectVocabulary::numbered(5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto records = gen_records(vocab, 3, 5, 6, seed);
        const auto path = dir.file("round_trip.jsonl");
        write_jsonl_file(path, records, vocab);
        REQUIRE(read_jsonl_file(path, vocab) == records);
    }
}
