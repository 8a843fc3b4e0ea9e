#include "rmlab/common.hpp"

namespace rmlab {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t item) {
    std::uint64_t h = fnv1a(tag);
    h = splitmix64(h ^ splitmix64(master));
    h = splitmix64(h ^ splitmix64(item + 0x51ed2701ULL));
    return h;
}

}  // namespace rmlab
