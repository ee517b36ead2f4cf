#include "biaslens/kvconfig.hpp"

#include <fstream>

#include "biaslens/errors.hpp"

namespace biaslens {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path.string());
    std::vector<KeyValue> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!trim(line).empty()) {
                throw DataError(path.string() + ":" + std::to_string(line_no) +
                                ": expected 'key = value'");
            }
            continue;
        }
        KeyValue kv;
        kv.key = trim(line.substr(0, eq));
        kv.value = trim(line.substr(eq + 1));
        kv.line = line_no;
        if (kv.key.empty()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty key");
        }
        out.push_back(std::move(kv));
    }
    return out;
}

}  // namespace biaslens
