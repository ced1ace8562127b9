// SPDX-License-Identifier: Apache-2.0
#include "jointkb/http_json.hpp"

#include "jointkb/errors.hpp"

#include <fmt/format.h>
#include <httplib.h>

namespace jointkb
{

EndpointAddress EndpointAddress::parse(const std::string& url)
{
    auto const scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ArgumentError(fmt::format("endpoint '{}' lacks a scheme (http:// or https://)", url));
    auto const host_start = scheme_end + 3;
    auto const path_start = url.find('/', host_start);

    EndpointAddress address;
    address.origin = url.substr(0, path_start);
    if (path_start != std::string::npos)
        address.path_prefix = url.substr(path_start);
    while (!address.path_prefix.empty() && address.path_prefix.back() == '/')
        address.path_prefix.pop_back();
    if (address.origin.size() <= host_start)
        throw ArgumentError(fmt::format("endpoint '{}' lacks a host", url));
    return address;
}

nlohmann::json post_json(const EndpointAddress& endpoint, const std::string& path, const nlohmann::json& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         std::chrono::milliseconds timeout, int* status)
{
    if (status)
        *status = 0;

    httplib::Client client(endpoint.origin);
    auto const seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto const micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers request_headers;
    for (auto const& [k, v]: headers)
        request_headers.emplace(k, v);

    auto const target = endpoint.path_prefix + path;
    auto result = client.Post(target, request_headers, body.dump(), "application/json");
    if (!result)
        throw TransportError(
            fmt::format("POST {}{} failed: {}", endpoint.origin, target, httplib::to_string(result.error())));
    if (status)
        *status = result->status;
    if (result->status < 200 || result->status >= 300)
        throw TransportError(fmt::format("POST {}{} returned HTTP {}", endpoint.origin, target, result->status));

    try
    {
        return nlohmann::json::parse(result->body);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw TransportError(fmt::format("POST {}{} returned malformed JSON: {}", endpoint.origin, target, e.what()));
    }
}

} // namespace jointkb
