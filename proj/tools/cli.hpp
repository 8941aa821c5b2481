#pragma once

// The `therblig` command line: JSON on stdout, diagnostics on stderr.
// Exit codes: 0 success, 1 operation error or rule violation, 2 usage error.

#include <therblig/datagen.hpp>
#include <therblig/gradcheck.hpp>
#include <therblig/http_api.hpp>
#include <therblig/losses.hpp>
#include <therblig/metrics.hpp>
#include <therblig/records.hpp>
#include <therblig/rules.hpp>
#include <therblig/service.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace therblig::cli {

struct Options {
    std::string vocab_path;
    std::size_t n = default_max_steps;
    bool strict_hold = true;
    std::string mode = "corrected";
    std::string norm = "l1";
    double tau = 1.0;
    std::uint64_t seed = 0;
    std::string addr = "127.0.0.1:8080";
    std::string store = "therblig_store.jsonl";

    // per-subcommand
    std::string input;
    std::string pred;
    std::string gt;
    bool frames = false;
    std::string state;
    std::optional<std::string> goal;
    std::optional<std::size_t> remaining;
    double h = 1e-5;
    std::size_t random_instances = 0;
    std::size_t objects = 4;
    std::size_t videos = 1;
    std::size_t chunks = 10;
    std::string out;
};

/// Usage and argument errors raised after parsing (exit code 2).
class usage_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline ObjectVocabulary vocabulary(const Options& o)
{
    if (o.vocab_path.empty())
        throw usage_error("--vocab is required");
    return load_vocabulary_file(o.vocab_path);
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw format_error(path + ": " + e.what());
    }
}

inline ContactVector<double> contact_vector(const json& j, const ObjectVocabulary& vocab, const char* key)
{
    if (!j.is_array())
        throw format_error(std::string(key) + ": expected an array");
    if (std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_string(); })) {
        ContactSet s;
        for (const auto& name : j)
            s.insert(vocab.index(name.get<std::string>()));
        return to_contact_vector<double>(s, vocab.size());
    }
    if (j.size() != vocab.size())
        throw format_error(std::string(key) + ": expected " + std::to_string(vocab.size()) + " entries");
    ContactVector<double> v;
    for (const auto& x : j) {
        if (!x.is_number())
            throw format_error(std::string(key) + ": entries must be numbers or object names");
        v.push_back(x.get<double>());
    }
    return v;
}

inline std::vector<std::vector<double>> matrix(const json& j, const char* key)
{
    try {
        return j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
        throw format_error(std::string(key) + ": expected an array of number arrays");
    }
}

} // namespace detail

/// Loss instance file: {"vocab": [names] | count, "c_start", "c_end" (names or
/// 0/1 vectors), "logits": [[...]], optional "noise" (zeros when absent),
/// "tau", "mode", "norm", "strict_hold"}. Flags given on the command line win.
inline LossInstance<double> load_loss_instance(const std::string& path, const Options& o, const CLI::App& root)
{
    const json j = detail::read_json_file(path);
    if (!j.is_object())
        throw format_error(path + ": expected a JSON object");
    const json& v = therblig::detail::require(j, "vocab", path);
    const auto vocab = v.is_number_unsigned() ? ObjectVocabulary::numbered(v.get<std::size_t>())
                                              : ObjectVocabulary(v.get<std::vector<std::string>>());

    LossInstance<double> inst;
    inst.objects = vocab.size();
    inst.c_start = detail::contact_vector(therblig::detail::require(j, "c_start", path), vocab, "c_start");
    inst.c_end = detail::contact_vector(therblig::detail::require(j, "c_end", path), vocab, "c_end");
    inst.logits = detail::matrix(therblig::detail::require(j, "logits", path), "logits");
    if (auto it = j.find("noise"); it != j.end())
        inst.noise = detail::matrix(*it, "noise");
    else
        for (const auto& row : inst.logits)
            inst.noise.emplace_back(row.size(), 0.0);

    auto pick = [&](const char* flag, const char* key, auto fallback, auto flag_value) {
        if (root.count(flag) > 0)
            return flag_value;
        return j.value(key, fallback);
    };
    inst.tau = pick("--tau", "tau", 1.0, o.tau);
    if (!(inst.tau > 0))
        throw std::invalid_argument("tau must be positive");
    inst.config.mode = parse_loss_mode(pick("--mode", "mode", std::string("corrected"), o.mode));
    inst.config.norm = parse_norm(pick("--norm", "norm", std::string("l1"), o.norm));
    inst.config.effects = EffectVectors<double>::for_hold_policy(pick("--strict-hold", "strict_hold", false, o.strict_hold));
    inst.check();
    return inst;
}

inline json loss_report_json(const LossReport<double>& r)
{
    return {{"L_C", r.contact},      {"L_EC", r.enforcement}, {"L_NC", r.non_contact},
            {"total", r.total},      {"mode", std::string(to_string(r.mode))},
            {"norm", std::string(to_string(r.norm))}};
}

inline int cmd_validate(const Options& o, std::ostream& out)
{
    ObjectVocabulary vocab;
    if (!o.vocab_path.empty()) {
        vocab = load_vocabulary_file(o.vocab_path);
    } else {
        std::ifstream in(o.input, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot open '" + o.input + "'");
        vocab = infer_vocabulary(in);
    }
    const auto records = read_jsonl_file(o.input, vocab);
    const RuleOptions rules{o.strict_hold, o.n};
    json reports = json::array();
    std::size_t violations = 0, inconsistent = 0;
    for (const auto& r : records) {
        const auto report = validate_record(r, vocab, rules);
        violations += report.violations.size();
        inconsistent += !report.consistent();
        json entry = to_json(report, vocab);
        entry["segment_id"] = r.segment_id;
        reports.push_back(std::move(entry));
    }
    out << json{{"records", records.size()},
                {"inconsistent_records", inconsistent},
                {"violations", violations},
                {"reports", reports}}
               .dump()
        << '\n';
    return violations == 0 ? 0 : 1;
}

inline int cmd_filter(const Options& o, std::ostream& out)
{
    const auto vocab = detail::vocabulary(o);
    const auto state = parse_contact_set(o.state, vocab);
    std::set<Tuple> candidates;
    json result = {{"state", to_text(state, vocab)}};
    if (o.goal) {
        const auto goal = parse_contact_set(*o.goal, vocab);
        const std::size_t remaining = o.remaining.value_or(o.n);
        candidates = candidate_tuples_with_goal(state, goal, remaining, vocab, o.strict_hold);
        result["goal"] = to_text(goal, vocab);
        result["remaining"] = remaining;
    } else {
        candidates = candidate_tuples(state, vocab, o.strict_hold);
    }
    json list = json::array();
    for (const auto& t : candidates)
        list.push_back(to_text(t, vocab));
    result["count"] = candidates.size();
    result["candidates"] = list;
    out << result.dump() << '\n';
    return 0;
}

inline json frame_metrics(const FrameLabeling& pred, const FrameLabeling& gt)
{
    return {{"frame_accuracy", frame_accuracy(pred, gt)},
            {"edit", segmental_edit_score(pred, gt)},
            {"f1@10", f1_at_k(pred, gt, 10).f1},
            {"f1@25", f1_at_k(pred, gt, 25).f1},
            {"f1@50", f1_at_k(pred, gt, 50).f1}};
}

inline int cmd_metrics(const Options& o, std::ostream& out)
{
    if (o.frames) {
        // {"video id": [label, ...], ...} in both files.
        const json pj = detail::read_json_file(o.pred);
        const json gj = detail::read_json_file(o.gt);
        if (!pj.is_object() || !gj.is_object())
            throw format_error("frame label files must map video ids to label arrays");
        json videos = json::object();
        std::map<std::string, double> sums;
        for (const auto& [video, labels] : gj.items()) {
            if (!pj.contains(video))
                throw format_error("prediction missing video '" + video + "'");
            const FrameLabeling g(labels.get<std::vector<Label>>());
            const FrameLabeling p(pj.at(video).get<std::vector<Label>>());
            json m = frame_metrics(p, g);
            for (const auto& [k, v] : m.items())
                sums[k] += v.get<double>();
            videos[video] = std::move(m);
        }
        json mean = json::object();
        for (const auto& [k, v] : sums)
            mean[k] = v / static_cast<double>(std::max<std::size_t>(1, gj.size()));
        out << json{{"videos", videos}, {"mean", mean}}.dump() << '\n';
        return 0;
    }

    ObjectVocabulary vocab;
    if (!o.vocab_path.empty()) {
        vocab = load_vocabulary_file(o.vocab_path);
    } else {
        std::ifstream a(o.pred, std::ios::binary), b(o.gt, std::ios::binary);
        if (!a || !b)
            throw std::runtime_error("cannot open prediction or ground-truth file");
        std::stringstream both;
        both << a.rdbuf() << '\n' << b.rdbuf();
        vocab = infer_vocabulary(both);
    }
    std::map<std::string, AnnotationRecord> predicted;
    for (auto& r : read_jsonl_file(o.pred, vocab))
        predicted.emplace(r.segment_id, std::move(r));
    const auto truth = read_jsonl_file(o.gt, vocab);
    const RuleOptions rules{o.strict_hold, o.n};
    double acc = 0, lev = 0, lc = 0;
    for (const auto& g : truth) {
        auto it = predicted.find(g.segment_id);
        if (it == predicted.end())
            throw format_error("prediction missing segment '" + g.segment_id + "'");
        const auto& p = it->second.therbligs;
        acc += elementwise_accuracy(p, g.therbligs, o.n);
        lev += static_cast<double>(levenshtein(p, g.therbligs));
        lc += logical_consistency(p, hand_to_set(g.c_prev, vocab), hand_to_set(g.c_next, vocab), rules);
    }
    const double count = static_cast<double>(std::max<std::size_t>(1, truth.size()));
    out << json{{"segments", truth.size()},
                {"elementwise_accuracy", acc / count},
                {"levenshtein", lev / count},
                {"logical_consistency", lc / count}}
               .dump()
        << '\n';
    return 0;
}

inline int cmd_loss(const Options& o, const CLI::App& root, std::ostream& out)
{
    const auto inst = load_loss_instance(o.input, o, root);
    out << loss_report_json(inst.evaluate()).dump() << '\n';
    return 0;
}

inline constexpr double gradcheck_tolerance = 1e-4;

inline int cmd_gradcheck(const Options& o, const CLI::App& root, std::ostream& out)
{
    std::vector<LossInstance<double>> instances;
    if (!o.input.empty()) {
        instances.push_back(load_loss_instance(o.input, o, root));
    } else if (o.random_instances > 0) {
        LossConfig<double> cfg;
        cfg.mode = parse_loss_mode(o.mode);
        cfg.norm = parse_norm(o.norm);
        cfg.effects = EffectVectors<double>::for_hold_policy(o.strict_hold);
        for (std::size_t i = 0; i < o.random_instances; ++i)
            instances.push_back(random_loss_instance(therblig::detail::mix_seed(o.seed + i), o.tau, cfg));
    } else {
        throw usage_error("gradcheck needs an instance file or --random K");
    }
    // The pass/fail verdict uses 64-bit differences. The extended-precision
    // figure separates gradient bugs from cancellation in the oracle.
    double worst = 0, extended_worst = 0;
    for (const auto& inst : instances) {
        worst = std::max(worst, finite_diff_check(inst, o.h));
        extended_worst = std::max(extended_worst, finite_diff_check_quad(inst, o.h));
    }
    const bool pass = worst <= gradcheck_tolerance;
    out << json{{"instances", instances.size()},
                {"h", o.h},
                {"max_rel_error", worst},
                {"max_rel_error_extended_oracle", extended_worst},
                {"tolerance", gradcheck_tolerance},
                {"pass", pass}}
               .dump()
        << '\n';
    return pass ? 0 : 1;
}

inline int cmd_gen(const Options& o, std::ostream& out)
{
    if (o.out.empty())
        throw usage_error("--out is required");
    const auto vocab = o.vocab_path.empty() ? ObjectVocabulary::numbered(o.objects) : load_vocabulary_file(o.vocab_path);
    const auto records = gen_records(vocab, o.videos, o.chunks, o.n, o.seed, o.strict_hold);
    write_jsonl_file(o.out, records, vocab);
    std::size_t violations = 0;
    for (const auto& r : records)
        violations += validate_record(r, vocab, {o.strict_hold, o.n}).violations.size();
    out << json{{"records", records.size()}, {"path", o.out}, {"seed", o.seed}, {"violations", violations}}.dump()
        << '\n';
    return violations == 0 ? 0 : 1;
}

inline std::string store_path(const Options& o)
{
    if (const char* env = std::getenv("THERBLIG_STORE"); env && *env)
        return env;
    return o.store;
}

inline int cmd_ingest(const Options& o, std::ostream& out)
{
    AnnotationService svc(detail::vocabulary(o), {store_path(o), o.n, o.strict_hold});
    const auto r = svc.ingest_segments(o.input);
    json errors = json::array();
    for (const auto& e : r.errors)
        errors.push_back({{"line", e.line}, {"message", e.message}});
    out << json{{"added", r.added}, {"duplicates", r.duplicates}, {"errors", errors}, {"store", store_path(o)}}.dump()
        << '\n';
    return r.errors.empty() ? 0 : 1;
}

inline int cmd_serve(const Options& o, std::ostream& out, std::ostream& err)
{
    const auto colon = o.addr.rfind(':');
    if (colon == std::string::npos)
        throw usage_error("--addr must be HOST:PORT");
    const std::string host = o.addr.substr(0, colon);
    const int port = std::stoi(o.addr.substr(colon + 1));
    AnnotationService svc(detail::vocabulary(o), {store_path(o), o.n, o.strict_hold});
    if (svc.skipped_on_load() > 0)
        err << "warning: skipped " << svc.skipped_on_load() << " unusable events in " << store_path(o) << '\n';
    httplib::Server server;
    register_routes(server, svc);
    if (!server.bind_to_port(host, port))
        throw std::runtime_error("cannot listen on " + o.addr);
    out << json{{"listening", o.addr}, {"store", store_path(o)}}.dump() << std::endl;
    server.listen_after_bind();
    return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    Options o;
    CLI::App app{"Therblig toolkit: rule validation, candidate filtering, losses, metrics, data generation and the "
                 "annotation service",
                 "therblig"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--vocab", o.vocab_path, "Object vocabulary (JSON array or one name per line)");
    app.add_option("--n", o.n, "Maximum Therblig steps per segment")->check(CLI::Range(1, 64));
    app.add_option("--strict-hold", o.strict_hold, "Hold requires contact (true|false)");
    app.add_option("--mode", o.mode, "Loss mode")->check(CLI::IsMember({"literal", "corrected"}));
    app.add_option("--norm", o.norm, "Loss norm")->check(CLI::IsMember({"l1", "l2"}));
    app.add_option("--tau", o.tau, "Gumbel-Softmax temperature")->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "Random seed");
    app.add_option("--addr", o.addr, "Listen address HOST:PORT");

    auto* validate = app.add_subcommand("validate", "Validate a JSONL annotation file");
    validate->add_option("file", o.input)->required();

    auto* filter = app.add_subcommand("filter", "List candidate tuples for a contact state");
    filter->add_option("--state", o.state, "Current contact set, e.g. \"[knife]\"")->required();
    filter->add_option("--goal", o.goal, "Goal contact set; enables the look-ahead filter");
    filter->add_option("--remaining", o.remaining, "Steps left before the goal (default --n)")->check(CLI::Range(1, 64));

    auto* metrics = app.add_subcommand("metrics", "Compare predictions against ground truth");
    metrics->add_option("--pred", o.pred)->required();
    metrics->add_option("--gt", o.gt)->required();
    metrics->add_flag("--frames", o.frames, "Inputs are per-frame label maps instead of annotation JSONL");

    auto* loss = app.add_subcommand("loss", "Evaluate the rule losses of a loss-instance file");
    loss->add_option("instance", o.input)->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradient of the rule losses");
    gradcheck->add_option("instance", o.input);
    gradcheck->add_option("--step", o.h, "Central-difference step")->check(CLI::Range(1e-12, 1e-2));
    gradcheck->add_option("--random", o.random_instances, "Check K seeded random instances instead of a file");

    auto* gen = app.add_subcommand("gen", "Generate a synthetic rule-consistent dataset");
    gen->add_option("--objects", o.objects, "Numbered object classes when --vocab is absent")->check(CLI::Range(1, 1000));
    gen->add_option("--videos", o.videos)->check(CLI::Range(1, 100000));
    gen->add_option("--chunks", o.chunks, "Chunks per video")->check(CLI::Range(1, 100000));
    gen->add_option("--out", o.out)->required();

    auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
    serve->add_option("--store", o.store, "Event log path (THERBLIG_STORE overrides)");

    auto* ingest = app.add_subcommand("ingest", "Load segment CSV rows into the store");
    ingest->add_option("csv", o.input)->required();
    ingest->add_option("--store", o.store, "Event log path (THERBLIG_STORE overrides)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << json{{"usage", app.help()}}.dump() << '\n';
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << json{{"usage", app.help("", CLI::AppFormatMode::All)}}.dump() << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n" << app.help();
        out << json{{"error", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        if (validate->parsed())
            return cmd_validate(o, out);
        if (filter->parsed())
            return cmd_filter(o, out);
        if (metrics->parsed())
            return cmd_metrics(o, out);
        if (loss->parsed())
            return cmd_loss(o, app, out);
        if (gradcheck->parsed())
            return cmd_gradcheck(o, app, out);
        if (gen->parsed())
            return cmd_gen(o, out);
        if (ingest->parsed())
            return cmd_ingest(o, out);
        if (serve->parsed())
            return cmd_serve(o, out, err);
    } catch (const usage_error& e) {
        err << "usage error: " << e.what() << '\n';
        out << json{{"error", e.what()}}.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        out << json{{"error", e.what()}}.dump() << '\n';
        return 1;
    }
    return 2;
}

} // namespace therblig::cli
