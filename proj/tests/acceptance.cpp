// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <therblig/datagen.hpp>
#include <therblig/gradcheck.hpp>
#include <therblig/http_api.hpp>
#include <therblig/losses.hpp>
#include <therblig/metrics.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <map>
#include <sstream>

#include <unistd.h>

using namespace therblig;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<Outcome()>& body)
{
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::ostringstream timing;
    timing.precision(2);
    timing << std::fixed << secs << "s";
    if (secs > budget_seconds) {
        o.pass = false;
        timing << " over " << budget_seconds << "s budget";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << timing.str() << "): " << o.detail << std::endl;
}

void info(const std::string& name, const std::string& detail)
{
    std::cout << "INFO " << name << ": " << detail << std::endl;
}

Outcome oracle_equivalence()
{
    std::size_t pairs = 0, sequences = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto vocab = ObjectVocabulary::numbered(n);
        for (std::size_t len = 1; len <= 4; ++len)
            for (std::uint64_t a = 0; a < (1ULL << n); ++a)
                for (std::uint64_t b = 0; b < (1ULL << n); ++b) {
                    const auto s = ContactSet::from_mask(a), e = ContactSet::from_mask(b);
                    const auto oracle = brute_force_consistent(s, e, vocab, len);
                    if (enumerate_with_goal_filter(s, e, vocab, len) != oracle)
                        return {false, "mismatch at |C|=" + std::to_string(n) + " len=" + std::to_string(len) +
                                           " start=" + to_text(s, vocab) + " end=" + to_text(e, vocab)};
                    ++pairs;
                    sequences += oracle.size();
                }
    }
    return {true, std::to_string(pairs) + " (start, end, length) cases, " + std::to_string(sequences) +
                      " consistent sequences matched"};
}

Outcome loss_rule_bridge()
{
    std::size_t checked = 0;
    for (bool strict : {false, true}) {
        LossConfig<double> cfg;
        cfg.mode = LossMode::corrected;
        cfg.norm = Norm::l1;
        cfg.effects = EffectVectors<double>::for_hold_policy(strict);
        for (std::size_t n = 1; n <= 3; ++n) {
            const std::size_t alphabet = n * verb_count + 1;
            for (std::size_t len = 1; len <= 3; ++len) {
                std::vector<std::size_t> digits(len, 0);
                for (;;) {
                    std::vector<Tuple> steps;
                    bool well_formed = true;
                    for (std::size_t k = 0; k < len; ++k) {
                        const auto t = Tuple::from_category(digits[k], n);
                        if (!steps.empty() && steps.back().is_null() && !t.is_null())
                            well_formed = false;
                        steps.push_back(t);
                    }
                    if (well_formed) {
                        const Sequence seq(steps);
                        std::vector<RelaxedStep<double>> relaxed;
                        for (const auto& t : seq)
                            relaxed.push_back(RelaxedStep<double>::one_hot(t, n));
                        for (std::uint64_t a = 0; a < (1ULL << n); ++a)
                            for (std::uint64_t b = 0; b < (1ULL << n); ++b) {
                                const auto s = ContactSet::from_mask(a), e = ContactSet::from_mask(b);
                                const auto rep = validate_sequence(s, seq, e, {strict, len});
                                const auto loss = combined_rule_loss<double>(to_contact_vector<double>(s, n),
                                                                             to_contact_vector<double>(e, n), relaxed, cfg);
                                if ((loss.contact == 0) != (rep.count(1) == 0) ||
                                    (loss.enforcement == 0) != (rep.count(2) == 0) ||
                                    (loss.non_contact == 0) != (rep.count(3) == 0))
                                    return {false, "disagreement on " + to_text(seq, ObjectVocabulary::numbered(n)) +
                                                       " strict_hold=" + (strict ? "true" : "false")};
                                ++checked;
                            }
                    }
                    std::size_t pos = 0;
                    while (pos < len && ++digits[pos] == alphabet)
                        digits[pos++] = 0;
                    if (pos == len)
                        break;
                }
            }
        }
    }
    return {true, std::to_string(checked) + " one-hot (sequence, start, end) cases, both Hold policies"};
}

struct GradSweep {
    double quad = 0, float64 = 0;
    std::size_t instances = 0, float64_failures = 0;
    std::map<double, std::size_t> failures_by_tau;
};

GradSweep gradient_sweep()
{
    GradSweep g;
    const double taus[] = {0.5, 1.0, 2.0};
    const LossMode modes[] = {LossMode::corrected, LossMode::literal};
    const Norm norms[] = {Norm::l1, Norm::l2};
    for (std::size_t i = 0; i < 100; ++i) {
        LossConfig<double> cfg;
        cfg.mode = modes[(i / 3) % 2];
        cfg.norm = norms[(i / 6) % 2];
        cfg.effects = EffectVectors<double>::for_hold_policy((i / 12) % 2 == 1);
        const auto inst = random_loss_instance(detail::mix_seed(0x6772616400ULL + i), taus[i % 3], cfg);
        const double err = finite_diff_check(inst);
        g.quad = std::max(g.quad, finite_diff_check_quad(inst));
        g.float64 = std::max(g.float64, err);
        if (err > 1e-4) {
            ++g.float64_failures;
            ++g.failures_by_tau[inst.tau];
        }
        ++g.instances;
    }
    return g;
}

Outcome gumbel_max_law()
{
    const std::vector<double> logits{1.5, 0.0, -0.5, 0.7, -2.0};
    std::vector<double> p(logits.size());
    double z = 0;
    for (double l : logits)
        z += std::exp(l);
    for (std::size_t i = 0; i < logits.size(); ++i)
        p[i] = std::exp(logits[i]) / z;

    GumbelNoise noise(777);
    const int draws = 100'000;
    std::vector<int> hits(logits.size(), 0);
    for (int d = 0; d < draws; ++d) {
        const auto e = noise.draw(logits.size());
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i)
            if (logits[i] + e[i] > logits[best] + e[best])
                best = i;
        ++hits[best];
    }
    double worst = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double sigma = std::sqrt(p[i] * (1 - p[i]) / draws);
        worst = std::max(worst, std::abs(hits[i] / double(draws) - p[i]) / sigma);
    }
    std::ostringstream d;
    d << draws << " draws over " << logits.size() << " classes, worst deviation " << worst << " sigma";
    return {worst <= 4.0, d.str()};
}

Outcome candidate_closed_form()
{
    std::size_t states = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto vocab = ObjectVocabulary::numbered(n);
        for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
            const auto s = ContactSet::from_mask(mask);
            const std::size_t h = s.size();
            if (candidate_tuples(s, vocab, true).size() != 5 * h + 2 * (n - h) + 1)
                return {false, "strict count wrong at |C|=" + std::to_string(n)};
            if (candidate_tuples(s, vocab, false).size() != 5 * h + 3 * (n - h) + 1)
                return {false, "lenient count wrong at |C|=" + std::to_string(n)};
            ++states;
        }
    }
    return {true, std::to_string(states) + " states, strict and lenient Hold"};
}

void report_filtering_scale()
{
    // How far the rules cut the tuple alphabet on generated data. Reported only.
    const auto vocab = ObjectVocabulary::numbered(152);
    const auto t = gen_trajectory(vocab, 200, 6, 11);
    double plain = 0, goal = 0;
    std::size_t steps = 0;
    for (std::size_t c = 0; c < t.chunks(); ++c) {
        ContactSet state = t.states[c];
        std::size_t remaining = 6;
        for (const auto& tuple : t.sequences[c]) {
            plain += static_cast<double>(candidate_tuples(state, vocab).size());
            goal += static_cast<double>(candidate_tuples_with_goal(state, t.states[c + 1], remaining, vocab).size());
            state = apply_tuple(state, tuple);
            --remaining;
            ++steps;
        }
    }
    std::ostringstream d;
    d << "|C|=152, alphabet " << 152 * verb_count + 1 << ", mean candidates per step " << plain / steps
      << " (rules only), " << goal / steps << " (with goal look-ahead) over " << steps << " steps";
    info("candidate filtering scale", d.str());
}

FrameLabeling runs(std::initializer_list<std::pair<Label, std::size_t>> pieces)
{
    std::vector<Label> out;
    for (auto [l, n] : pieces)
        out.insert(out.end(), n, l);
    return FrameLabeling(std::move(out));
}

Outcome metrics_fixtures()
{
    const auto& v = ObjectVocabulary{"knife", "bowl", "tomato"};
    auto seq = [&](const char* text) { return parse_sequence(text, v); };
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const char* what) {
        if (!ok)
            failed.emplace_back(what);
    };
    expect(f1_at_k(runs({{0, 40}, {1, 60}}), runs({{0, 50}, {1, 50}}), 25).f1 == 1.0, "F1@25");
    expect(std::abs(segmental_edit_score(runs({{0, 1}, {1, 1}, {0, 1}}), runs({{0, 1}, {1, 1}})) - 200.0 / 3) < 1e-9,
           "edit 66.67");
    expect(levenshtein(seq("Re:knife;G:knife;M:knife"), seq("Re:knife;G:knife;M:knife")) == 0, "levenshtein equal");
    expect(levenshtein(seq("G:knife;M:knife;R:knife"), seq("G:knife;R:knife")) == 1, "levenshtein deletion");
    expect(levenshtein(seq(""), seq("Re:knife;G:knife;M:knife")) == 3, "levenshtein empty");
    expect(elementwise_accuracy(seq("G:knife;M:knife"), seq("G:knife;R:knife")) == 5.0 / 6, "elementwise");

    std::mt19937_64 rng(1000);
    auto random_seq = [&] {
        std::vector<Tuple> steps(rng() % 7);
        for (auto& t : steps)
            t = Tuple(static_cast<Verb>(rng() % verb_count), static_cast<ObjectIndex>(rng() % 3));
        return Sequence(steps);
    };
    std::size_t axiom_failures = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto a = random_seq(), b = random_seq(), c = random_seq();
        const auto ab = levenshtein(a, b);
        axiom_failures += levenshtein(a, a) != 0 || (ab == 0) != (a == b) || ab != levenshtein(b, a) ||
                          levenshtein(a, c) > ab + levenshtein(b, c);
    }
    if (axiom_failures)
        failed.push_back(std::to_string(axiom_failures) + " axiom violations");
    std::string detail = failed.empty() ? "worked examples exact; metric axioms hold on 1000 random triples" : "";
    for (const auto& f : failed)
        detail += f + "; ";
    return {failed.empty(), detail};
}

Outcome datagen_safety(const std::filesystem::path& dir)
{
    const auto vocab = ObjectVocabulary::numbered(8);
    const auto records = gen_records(vocab, 100, 100, 6, 20241019);
    std::size_t bad = 0;
    for (const auto& r : records)
        bad += !validate_record(r, vocab).consistent();
    const auto path = (dir / "datagen.jsonl").string();
    write_jsonl_file(path, records, vocab);
    const bool round_trip = read_jsonl_file(path, vocab) == records;
    return {bad == 0 && round_trip && records.size() == 10'000,
            std::to_string(records.size()) + " chunks, " + std::to_string(bad) + " failing validation, round trip " +
                (round_trip ? "lossless" : "LOSSY")};
}

Outcome service_fuzz(const std::filesystem::path& dir)
{
    const auto vocab = ObjectVocabulary{"knife", "bowl", "tomato", "pan"};
    const auto store = (dir / "fuzz_store.jsonl").string();
    std::mt19937_64 rng(4242);
    std::map<int, std::size_t> statuses;
    {
        AnnotationService svc(vocab, {store});
        std::ostringstream csv;
        csv << "video_id,start_frame,stop_frame\n";
        for (int s = 0; s < 100; ++s)
            csv << "V" << s % 5 << ',' << s * 10 << ',' << s * 10 + 10 << '\n';
        api_ingest(svc, csv.str());
        auto hand_name = [&]() -> json {
            const auto r = rng() % 12;
            return r < 4 ? json(vocab.name(r)) : r < 11 ? json(nullptr) : json("spoon");
        };
        for (const auto& seg : svc.segments())
            for (int w = 0; w < 5; ++w)
                api_submit_contact(svc, seg.segment_id,
                                   json{{"worker", "c" + std::to_string(w)}, {"right", "knife"}}.dump());

        const auto segs = svc.segments();
        const std::vector<std::string> junk{"", "{", "[]", "null", R"({"worker":1})", R"({"therbligs":"G:knife"})"};
        for (int i = 0; i < 1000; ++i) {
            const std::string id = rng() % 20 == 0 ? "missing" : segs[rng() % segs.size()].segment_id;
            std::string body;
            const auto kind = rng() % 4;
            if (kind == 0) {
                body = junk[rng() % junk.size()];
            } else if (kind == 1) {
                // A rule-consistent sequence for the segment's consensus bracket.
                const auto task = svc.open_therblig_task(id == "missing" ? segs[0].segment_id : id);
                const auto start = hand_to_set(task.c_prev, vocab), goal = hand_to_set(task.c_next, vocab);
                json steps = json::array();
                ContactSet state = start;
                for (std::size_t left = 6; left > 0; --left) {
                    const auto options = candidate_tuples_with_goal(state, goal, left, vocab);
                    const Tuple t = *std::next(options.begin(), static_cast<long>(rng() % options.size()));
                    if (t.is_null())
                        break;
                    steps.push_back(to_json(t, vocab));
                    state = apply_tuple(state, t);
                }
                body = json{{"worker", "w"},
                            {"c_prev", to_json(task.c_prev, vocab)},
                            {"c_next", to_json(task.c_next, vocab)},
                            {"therbligs", steps}}
                           .dump();
            } else {
                json steps = json::array();
                // Mostly well-formed; one in eight steps is Null, which can land mid-sequence.
                for (std::size_t k = 0, n = rng() % 8; k < n; ++k) {
                    const auto verb = verb_code(rng() % 8 == 0 ? Verb::Null : static_cast<Verb>(rng() % verb_count));
                    const auto o = rng() % 20;
                    const json object = o < 18 ? json(vocab.name(o % 4)) : o == 18 ? json(nullptr) : json("spoon");
                    steps.push_back(json{{"verb", verb}, {"object", verb == "-" ? json(nullptr) : object}});
                }
                json b = {{"worker", "w"},
                          {"c_prev", {{"right", hand_name()}, {"left", hand_name()}}},
                          {"c_next", {{"right", hand_name()}, {"left", hand_name()}}},
                          {"therbligs", steps}};
                if (rng() % 10 == 0)
                    b["extra"] = 1;
                body = b.dump();
            }
            ++statuses[api_submit_therbligs(svc, id, body).status];
        }
        for (const auto& r : svc.accepted_records())
            if (!validate_record(r, vocab).consistent())
                return {false, "store holds an invalid record for " + r.segment_id};
    }
    AnnotationService reloaded(vocab, {store});
    for (const auto& r : reloaded.accepted_records())
        if (!validate_record(r, vocab).consistent())
            return {false, "replayed store holds an invalid record for " + r.segment_id};
    if (statuses.count(500))
        return {false, std::to_string(statuses[500]) + " submissions produced a 500"};

    // Consensus is a function of the response multiset, not its order.
    std::size_t permutations = 0;
    for (int i = 0; i < 500; ++i) {
        std::vector<HandContact> votes(5 + rng() % 5);
        for (auto& v : votes) {
            if (auto r = rng() % 4; r < 3)
                v.right = static_cast<ObjectIndex>(r);
            if (auto l = rng() % 4; l < 3)
                v.left = static_cast<ObjectIndex>(l);
        }
        const auto ref = compute_consensus("s", votes);
        for (int p = 0; p < 20; ++p, ++permutations) {
            std::shuffle(votes.begin(), votes.end(), rng);
            const auto c = compute_consensus("s", votes);
            if (c.status != ref.status || !(c.contact == ref.contact))
                return {false, "consensus changed under permutation"};
        }
    }
    std::ostringstream d;
    d << "1000 submissions (";
    for (auto [status, n] : statuses)
        d << status << ":" << n << " ";
    d << "), " << reloaded.accepted_records().size() << " stored records all validate after replay; " << permutations
      << " consensus permutations stable";
    return {true, d.str()};
}

} // namespace

int main()
{
    const auto dir = std::filesystem::temp_directory_path() / ("therblig_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);

    criterion("oracle equivalence", 60, oracle_equivalence);
    criterion("loss-rule bridge", 30, loss_rule_bridge);

    GradSweep sweep;
    criterion("gradient check", 60, [&] {
        sweep = gradient_sweep();
        std::ostringstream d;
        d << sweep.instances << " instances, 64-bit central differences (h=1e-5): max relative error "
          << sweep.float64 << ", " << sweep.float64_failures << " instances above 1e-4";
        for (auto [tau, n] : sweep.failures_by_tau)
            d << " [tau=" << tau << ": " << n << "]";
        return Outcome{sweep.float64 <= 1e-4, d.str()};
    });
    {
        std::ostringstream d;
        d << "same sweep with the finite differences evaluated in 128-bit floats: max relative error " << sweep.quad;
        info("gradient check, extended-precision oracle", d.str());
    }

    criterion("Gumbel-max law", 10, gumbel_max_law);
    criterion("candidate-count closed form", 10, candidate_closed_form);
    report_filtering_scale();
    criterion("metrics fixtures", 10, metrics_fixtures);
    criterion("datagen safety", 60, [&] { return datagen_safety(dir); });
    criterion("service fuzz", 60, [&] { return service_fuzz(dir); });

    std::filesystem::remove_all(dir);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
