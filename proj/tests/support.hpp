#pragma once

#include <therblig/rules.hpp>
#include <therblig/vocabulary.hpp>

#include <catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace test_support {

using namespace therblig;

// knife = 0, bowl = 1, tomato = 2
inline const ObjectVocabulary& kitchen()
{
    static const ObjectVocabulary v{"knife", "bowl", "tomato"};
    return v;
}

inline Sequence seq(std::string_view text, const ObjectVocabulary& vocab = kitchen())
{
    return parse_sequence(text, vocab);
}

inline ContactSet set(std::string_view text, const ObjectVocabulary& vocab = kitchen())
{
    return parse_contact_set(text, vocab);
}

inline Tuple tup(std::string_view text, const ObjectVocabulary& vocab = kitchen())
{
    return parse_tuple(text, vocab);
}

/// Uniform random well-formed sequence of 0..max_len object steps, optionally Null-padded.
inline Sequence random_sequence(std::mt19937_64& rng, std::size_t objects, std::size_t max_len)
{
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> cat(0, objects * verb_count - 1);
    const std::size_t n = len(rng);
    std::vector<Tuple> steps;
    for (std::size_t k = 0; k < n; ++k)
        steps.push_back(Tuple::from_category(cat(rng), objects));
    return Sequence(std::move(steps));
}

inline ContactSet random_set(std::mt19937_64& rng, std::size_t objects)
{
    return ContactSet::from_mask(std::uniform_int_distribution<std::uint64_t>(0, (1ULL << objects) - 1)(rng));
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        _path = std::filesystem::temp_directory_path() / ("therblig_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(_path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] std::string file(const std::string& name) const { return (_path / name).string(); }

private:
    std::filesystem::path _path;
};

} // namespace test_support
