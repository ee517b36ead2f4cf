#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace biaslens {

struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

// INI-style "key = value" lines; '#' starts a comment; keys may repeat.
std::vector<KeyValue> parse_key_values(const std::filesystem::path& path);

}  // namespace biaslens
