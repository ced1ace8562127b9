// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace jointkb
{

/// Lowercases ASCII letters, trims, and collapses internal whitespace runs to one space.
/// Used wherever surface labels are compared (catalog lookup, answer matching).
std::string normalize_surface(std::string_view text);

std::string_view trim(std::string_view text);

std::vector<std::string> split(std::string_view text, char delimiter);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

} // namespace jointkb
