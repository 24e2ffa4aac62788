#include "vfl/rng.hpp"

#include "vfl/encode.hpp"
#include "vfl/identity.hpp"

namespace vfl {

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t a,
                          std::uint64_t b) {
    Encoder enc;
    enc.put_string("vfl.substream.v1");
    enc.put_u64(master);
    enc.put_string(stream);
    enc.put_u64(a);
    enc.put_u64(b);
    const identity::Digest d = identity::digest(enc.bytes());
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) seed = (seed << 8) | d.bytes[static_cast<std::size_t>(i)];
    return seed;
}

}  // namespace vfl
