// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

namespace jointkb
{

/// Opaque string identifier tagged by the kind of symbol it names.
template <typename Tag>
struct Identifier
{
    std::string value;

    Identifier() = default;
    explicit Identifier(std::string v): value(std::move(v)) {}

    [[nodiscard]] bool empty() const noexcept { return value.empty(); }
    [[nodiscard]] std::string_view view() const noexcept { return value; }

    friend auto operator<=>(const Identifier&, const Identifier&) = default;
    friend bool operator==(const Identifier&, const Identifier&) = default;

    friend std::ostream& operator<<(std::ostream& os, const Identifier& id) { return os << id.value; }
};

struct EntityTag;
struct RelationTag;

using EntityId = Identifier<EntityTag>;
using RelationId = Identifier<RelationTag>;

struct Triple
{
    EntityId head;
    RelationId relation;
    EntityId tail;

    friend auto operator<=>(const Triple&, const Triple&) = default;
    friend bool operator==(const Triple&, const Triple&) = default;
};

} // namespace jointkb

template <typename Tag>
struct std::hash<jointkb::Identifier<Tag>>
{
    std::size_t operator()(const jointkb::Identifier<Tag>& id) const noexcept
    {
        return std::hash<std::string>{}(id.value);
    }
};

template <>
struct std::hash<jointkb::Triple>
{
    std::size_t operator()(const jointkb::Triple& t) const noexcept
    {
        auto h = std::hash<std::string>{};
        std::size_t seed = h(t.head.value);
        seed ^= h(t.relation.value) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
        seed ^= h(t.tail.value) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
        return seed;
    }
};
