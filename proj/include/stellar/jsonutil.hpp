#ifndef STELLAR_JSONUTIL_HPP
#define STELLAR_JSONUTIL_HPP

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace stellar {

using Json = nlohmann::json;

// Rejects unknown keys so config typos fail loudly instead of being
// silently ignored.
inline void require_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                         std::string_view context) {
    if (!obj.is_object())
        throw std::runtime_error(std::string(context) + ": expected a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (auto a : allowed) {
            if (it.key() == a) {
                ok = true;
                break;
            }
        }
        if (!ok)
            throw std::runtime_error(std::string(context) + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T json_get(const Json& obj, const char* key, T dflt) {
    auto it = obj.find(key);
    if (it == obj.end()) return dflt;
    return it->get<T>();
}

}  // namespace stellar

#endif  // STELLAR_JSONUTIL_HPP
