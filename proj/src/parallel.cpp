#include "medlab/parallel.hpp"

#include "medlab/errors.hpp"

#include <cstdlib>
#include <string>

namespace medlab {

int resolve_workers(std::optional<int> requested) {
    if (requested) {
        if (*requested < 1) throw ConfigError("workers must be at least 1");
        return *requested;
    }
    if (const char* env = std::getenv("MEDLAB_WORKERS"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const int n = std::stoi(env, &used);
            if (used == std::string(env).size() && n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("MEDLAB_WORKERS must be a positive integer, got '") + env + "'");
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace medlab
