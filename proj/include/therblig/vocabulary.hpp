#pragma once

// Symbolic vocabulary: verbs, object classes, (verb, object) tuples,
// sequences and contact states, plus their canonical text forms.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace therblig {

using ObjectIndex = std::uint32_t;

/// Default cap on the number of tuples in one annotated sequence.
inline constexpr std::size_t default_max_steps = 6;

enum class Verb : std::uint8_t {
    Reach = 0,
    Move,
    Grasp,
    Release,
    Use,
    Orient,
    Hold,
    Null, // ordered last; carries no object
};

/// Number of object-taking verbs (every verb except Null).
inline constexpr std::size_t verb_count = 7;

inline constexpr std::array<Verb, verb_count> object_verbs = {
    Verb::Reach, Verb::Move, Verb::Grasp, Verb::Release, Verb::Use, Verb::Orient, Verb::Hold};

inline constexpr std::array<Verb, verb_count + 1> all_verbs = {
    Verb::Reach, Verb::Move, Verb::Grasp, Verb::Release,
    Verb::Use,   Verb::Orient, Verb::Hold, Verb::Null};

constexpr std::size_t verb_index(Verb v) noexcept { return static_cast<std::size_t>(v); }

constexpr std::string_view verb_code(Verb v) noexcept
{
    switch (v) {
    case Verb::Reach: return "Re";
    case Verb::Move: return "M";
    case Verb::Grasp: return "G";
    case Verb::Release: return "R";
    case Verb::Use: return "U";
    case Verb::Orient: return "O";
    case Verb::Hold: return "H";
    case Verb::Null: return "-";
    }
    return "?";
}

constexpr std::string_view verb_name(Verb v) noexcept
{
    switch (v) {
    case Verb::Reach: return "reach";
    case Verb::Move: return "move";
    case Verb::Grasp: return "grasp";
    case Verb::Release: return "release";
    case Verb::Use: return "use";
    case Verb::Orient: return "orient";
    case Verb::Hold: return "hold";
    case Verb::Null: return "null";
    }
    return "?";
}

inline std::optional<Verb> parse_verb(std::string_view code) noexcept
{
    for (Verb v : all_verbs)
        if (verb_code(v) == code)
            return v;
    // Long names are accepted as a convenience for hand-written fixtures.
    for (Verb v : all_verbs)
        if (verb_name(v) == code)
            return v;
    return std::nullopt;
}

/// Ordered list of object class names with a name -> index lookup.
class ObjectVocabulary {
public:
    ObjectVocabulary() = default;

    explicit ObjectVocabulary(std::vector<std::string> names) : _names{std::move(names)}
    {
        if (_names.empty())
            throw std::invalid_argument("object vocabulary must contain at least one class");
        _index.reserve(_names.size());
        for (std::size_t i = 0; i < _names.size(); ++i) {
            const auto& n = _names[i];
            if (n.empty())
                throw std::invalid_argument("object class names must be non-empty");
            if (n.find_first_of(",;:[]\n\r") != std::string::npos)
                throw std::invalid_argument("object class name '" + n + "' contains a reserved character");
            if (n == "-" || n == "none") // "-" is Null, "none" an empty hand
                throw std::invalid_argument("object class name '" + n + "' is reserved");
            if (!_index.emplace(n, static_cast<ObjectIndex>(i)).second)
                throw std::invalid_argument("duplicate object class name '" + n + "'");
        }
    }

    ObjectVocabulary(std::initializer_list<std::string> names)
        : ObjectVocabulary(std::vector<std::string>(names))
    {
    }

    /// Vocabulary of `count` generated names: object_00, object_01, ...
    static ObjectVocabulary numbered(std::size_t count, std::string_view prefix = "object_")
    {
        std::vector<std::string> names;
        names.reserve(count);
        const int width = count > 100 ? 3 : 2;
        for (std::size_t i = 0; i < count; ++i) {
            std::string digits = std::to_string(i);
            if (static_cast<int>(digits.size()) < width)
                digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
            names.push_back(std::string(prefix) + digits);
        }
        return ObjectVocabulary(std::move(names));
    }

    [[nodiscard]] std::size_t size() const noexcept { return _names.size(); }
    [[nodiscard]] bool empty() const noexcept { return _names.empty(); }
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return _names; }

    [[nodiscard]] const std::string& name(ObjectIndex i) const
    {
        if (i >= _names.size())
            throw std::out_of_range("object index " + std::to_string(i) + " outside vocabulary of size " +
                                    std::to_string(_names.size()));
        return _names[i];
    }

    [[nodiscard]] std::optional<ObjectIndex> find(std::string_view name) const
    {
        auto it = _index.find(std::string(name));
        if (it == _index.end())
            return std::nullopt;
        return it->second;
    }

    [[nodiscard]] ObjectIndex index(std::string_view name) const
    {
        if (auto i = find(name))
            return *i;
        throw std::out_of_range("unknown object class '" + std::string(name) + "'");
    }

    [[nodiscard]] bool contains(ObjectIndex i) const noexcept { return i < _names.size(); }

    friend bool operator==(const ObjectVocabulary& a, const ObjectVocabulary& b) { return a._names == b._names; }

private:
    std::vector<std::string> _names;
    std::unordered_map<std::string, ObjectIndex> _index;
};

/// A (verb, object) atom. Null carries no object, every other verb exactly one.
class Tuple {
public:
    constexpr Tuple() noexcept = default;

    constexpr Tuple(Verb verb, ObjectIndex object) : _verb{verb}, _object{object}
    {
        if (verb == Verb::Null)
            throw std::invalid_argument("the null verb carries no object");
    }

    static constexpr Tuple null() noexcept { return Tuple{}; }

    [[nodiscard]] constexpr Verb verb() const noexcept { return _verb; }
    [[nodiscard]] constexpr bool is_null() const noexcept { return _verb == Verb::Null; }

    /// Object index; only meaningful when !is_null().
    [[nodiscard]] constexpr ObjectIndex object() const noexcept { return _object; }

    /// Position in the joint (object x verb) category layout; Null maps to objects * 7.
    [[nodiscard]] constexpr std::size_t category(std::size_t objects) const noexcept
    {
        return is_null() ? objects * verb_count : _object * verb_count + verb_index(_verb);
    }

    static constexpr Tuple from_category(std::size_t category, std::size_t objects)
    {
        if (category == objects * verb_count)
            return null();
        if (category > objects * verb_count)
            throw std::out_of_range("category index outside the joint layout");
        return Tuple{object_verbs[category % verb_count], static_cast<ObjectIndex>(category / verb_count)};
    }

    friend constexpr bool operator==(const Tuple&, const Tuple&) noexcept = default;
    friend constexpr auto operator<=>(const Tuple& a, const Tuple& b) noexcept
    {
        // Null sorts after every object tuple, object-major otherwise.
        if (a.is_null() || b.is_null())
            return a.is_null() <=> b.is_null();
        if (auto c = a._object <=> b._object; c != 0)
            return c;
        return a._verb <=> b._verb;
    }

private:
    Verb _verb = Verb::Null;
    ObjectIndex _object = 0;
};

/// Steps of a Therblig annotation. Null steps may only form a trailing suffix.
class Sequence {
public:
    Sequence() = default;

    explicit Sequence(std::vector<Tuple> steps) : _steps{std::move(steps)}
    {
        bool seen_null = false;
        for (std::size_t k = 0; k < _steps.size(); ++k) {
            if (_steps[k].is_null())
                seen_null = true;
            else if (seen_null)
                throw std::invalid_argument("null step at position " + std::to_string(k - 1) +
                                            " is followed by a non-null step");
        }
    }

    Sequence(std::initializer_list<Tuple> steps) : Sequence(std::vector<Tuple>(steps)) {}

    [[nodiscard]] std::size_t size() const noexcept { return _steps.size(); }
    [[nodiscard]] bool empty() const noexcept { return _steps.empty(); }
    [[nodiscard]] const Tuple& operator[](std::size_t k) const { return _steps.at(k); }
    [[nodiscard]] std::span<const Tuple> steps() const noexcept { return _steps; }
    [[nodiscard]] auto begin() const noexcept { return _steps.begin(); }
    [[nodiscard]] auto end() const noexcept { return _steps.end(); }

    [[nodiscard]] std::size_t non_null_size() const noexcept
    {
        return static_cast<std::size_t>(
            std::count_if(_steps.begin(), _steps.end(), [](const Tuple& t) { return !t.is_null(); }));
    }

    /// Copy with the Null padding removed.
    [[nodiscard]] Sequence stripped() const
    {
        Sequence s;
        s._steps.assign(_steps.begin(), _steps.begin() + static_cast<std::ptrdiff_t>(non_null_size()));
        return s;
    }

    /// Copy padded with Null to exactly `length` slots.
    [[nodiscard]] Sequence padded(std::size_t length) const
    {
        if (non_null_size() > length)
            throw std::invalid_argument("sequence has " + std::to_string(non_null_size()) +
                                        " steps, cannot pad to " + std::to_string(length));
        Sequence s = stripped();
        s._steps.resize(length, Tuple::null());
        return s;
    }

    /// Copy with `t` appended; appending non-null after null is rejected.
    [[nodiscard]] Sequence appended(Tuple t) const
    {
        if (!t.is_null() && !_steps.empty() && _steps.back().is_null())
            throw std::invalid_argument("cannot append a non-null step after null padding");
        Sequence s = *this;
        s._steps.push_back(t);
        return s;
    }

    friend bool operator==(const Sequence&, const Sequence&) = default;
    friend auto operator<=>(const Sequence& a, const Sequence& b)
    {
        return std::lexicographical_compare_three_way(a._steps.begin(), a._steps.end(), b._steps.begin(),
                                                      b._steps.end());
    }

private:
    std::vector<Tuple> _steps;
};

/// Set of object classes currently in contact with the hands.
class ContactSet {
public:
    ContactSet() = default;

    ContactSet(std::initializer_list<ObjectIndex> objects) : ContactSet(std::vector<ObjectIndex>(objects)) {}

    explicit ContactSet(std::vector<ObjectIndex> objects) : _objects{std::move(objects)}
    {
        std::sort(_objects.begin(), _objects.end());
        _objects.erase(std::unique(_objects.begin(), _objects.end()), _objects.end());
    }

    /// Set whose members are the bits of `mask` (bit i <=> object i).
    static ContactSet from_mask(std::uint64_t mask)
    {
        ContactSet s;
        for (ObjectIndex i = 0; mask != 0; ++i, mask >>= 1)
            if (mask & 1u)
                s._objects.push_back(i);
        return s;
    }

    [[nodiscard]] bool contains(ObjectIndex o) const noexcept
    {
        return std::binary_search(_objects.begin(), _objects.end(), o);
    }

    void insert(ObjectIndex o)
    {
        auto it = std::lower_bound(_objects.begin(), _objects.end(), o);
        if (it == _objects.end() || *it != o)
            _objects.insert(it, o);
    }

    void erase(ObjectIndex o)
    {
        auto it = std::lower_bound(_objects.begin(), _objects.end(), o);
        if (it != _objects.end() && *it == o)
            _objects.erase(it);
    }

    [[nodiscard]] std::size_t size() const noexcept { return _objects.size(); }
    [[nodiscard]] bool empty() const noexcept { return _objects.empty(); }
    [[nodiscard]] std::span<const ObjectIndex> objects() const noexcept { return _objects; }
    [[nodiscard]] auto begin() const noexcept { return _objects.begin(); }
    [[nodiscard]] auto end() const noexcept { return _objects.end(); }

    /// True when every member is a valid index for a vocabulary of `objects` classes.
    [[nodiscard]] bool within(std::size_t objects) const noexcept
    {
        return _objects.empty() || _objects.back() < objects;
    }

    /// Number of objects in exactly one of the two sets.
    [[nodiscard]] std::size_t symmetric_difference_size(const ContactSet& other) const noexcept
    {
        std::size_t i = 0, j = 0, n = 0;
        while (i < _objects.size() && j < other._objects.size()) {
            if (_objects[i] == other._objects[j]) {
                ++i;
                ++j;
            } else if (_objects[i] < other._objects[j]) {
                ++i;
                ++n;
            } else {
                ++j;
                ++n;
            }
        }
        return n + (_objects.size() - i) + (other._objects.size() - j);
    }

    friend bool operator==(const ContactSet&, const ContactSet&) = default;
    friend auto operator<=>(const ContactSet&, const ContactSet&) = default;

private:
    std::vector<ObjectIndex> _objects;
};

/// Per-hand contact: each hand holds at most one object class.
struct HandContact {
    std::optional<ObjectIndex> right;
    std::optional<ObjectIndex> left;

    friend bool operator==(const HandContact&, const HandContact&) = default;

    /// Splits a set of at most two objects across the hands, lower index to the right hand.
    static HandContact from_set(const ContactSet& s)
    {
        if (s.size() > 2)
            throw std::invalid_argument("a contact set of " + std::to_string(s.size()) +
                                        " objects cannot be held by two hands");
        HandContact h;
        auto objs = s.objects();
        if (!objs.empty())
            h.right = objs[0];
        if (objs.size() > 1)
            h.left = objs[1];
        return h;
    }
};

// ---------------------------------------------------------------------------
// Canonical text forms: "G:knife", "-" for Null, steps joined by ";",
// contact sets as "[knife,bowl]".

inline std::string to_text(const Tuple& t, const ObjectVocabulary& vocab)
{
    if (t.is_null())
        return "-";
    return std::string(verb_code(t.verb())) + ":" + vocab.name(t.object());
}

inline std::string to_text(const Sequence& s, const ObjectVocabulary& vocab)
{
    std::string out;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (k)
            out += ';';
        out += to_text(s[k], vocab);
    }
    return out;
}

inline std::string to_text(const ContactSet& c, const ObjectVocabulary& vocab)
{
    std::string out = "[";
    bool first = true;
    for (ObjectIndex o : c) {
        if (!first)
            out += ',';
        out += vocab.name(o);
        first = false;
    }
    return out + "]";
}

namespace detail {

inline std::string_view trim(std::string_view s) noexcept
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return parts;
}

} // namespace detail

inline Tuple parse_tuple(std::string_view text, const ObjectVocabulary& vocab)
{
    text = detail::trim(text);
    if (text == "-")
        return Tuple::null();
    auto colon = text.find(':');
    if (colon == std::string_view::npos)
        throw std::invalid_argument("tuple '" + std::string(text) + "' is not of the form VERB:object");
    auto verb = parse_verb(detail::trim(text.substr(0, colon)));
    if (!verb)
        throw std::invalid_argument("unknown verb code in '" + std::string(text) + "'");
    if (*verb == Verb::Null)
        throw std::invalid_argument("the null verb carries no object: '" + std::string(text) + "'");
    return Tuple{*verb, vocab.index(detail::trim(text.substr(colon + 1)))};
}

inline Sequence parse_sequence(std::string_view text, const ObjectVocabulary& vocab)
{
    text = detail::trim(text);
    std::vector<Tuple> steps;
    if (!text.empty())
        for (auto part : detail::split(text, ';'))
            steps.push_back(parse_tuple(part, vocab));
    return Sequence(std::move(steps));
}

inline ContactSet parse_contact_set(std::string_view text, const ObjectVocabulary& vocab)
{
    text = detail::trim(text);
    if (text.size() < 2 || text.front() != '[' || text.back() != ']')
        throw std::invalid_argument("contact set '" + std::string(text) + "' must be bracketed, e.g. [knife,bowl]");
    text = detail::trim(text.substr(1, text.size() - 2));
    std::vector<ObjectIndex> objects;
    if (!text.empty())
        for (auto part : detail::split(text, ','))
            objects.push_back(vocab.index(detail::trim(part)));
    return ContactSet(std::move(objects));
}

} // namespace therblig
