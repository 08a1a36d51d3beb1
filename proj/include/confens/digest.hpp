#ifndef CONFENS_DIGEST_HPP
#define CONFENS_DIGEST_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace confens {

// Incremental SHA-256. Numeric inputs are fed in little-endian byte order so
// digests agree across platforms.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::byte> bytes);
    Sha256& update(std::string_view text);
    Sha256& update_u64(std::uint64_t value);
    Sha256& update_f64(double value);

    // Lowercase hex. The object cannot be updated afterwards.
    std::string hex_digest();

private:
    void* ctx_;
};

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

}  // namespace confens

#endif  // CONFENS_DIGEST_HPP
