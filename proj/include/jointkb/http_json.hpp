// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace jointkb
{

/// A base URL split into the part httplib connects to and the path prefix
/// prepended to every request ("https://host:443" + "/v1").
struct EndpointAddress
{
    std::string origin;
    std::string path_prefix;

    static EndpointAddress parse(const std::string& url);
};

/// POSTs a JSON body and parses a JSON response. Any transport failure or
/// non-2xx status raises TransportError; `status` receives the HTTP status (0 on
/// connection failure) so callers can decide whether to retry.
nlohmann::json post_json(const EndpointAddress& endpoint, const std::string& path, const nlohmann::json& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         std::chrono::milliseconds timeout, int* status = nullptr);

} // namespace jointkb
