#include "confens/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <stdexcept>

namespace confens {

namespace {
EVP_MD_CTX* as_ctx(void* p) { return static_cast<EVP_MD_CTX*>(p); }
}  // namespace

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(as_ctx(ctx_), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 initialization failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(as_ctx(ctx_)); }

Sha256& Sha256::update(std::span<const std::byte> bytes) {
    EVP_DigestUpdate(as_ctx(ctx_), bytes.data(), bytes.size());
    return *this;
}

Sha256& Sha256::update(std::string_view text) {
    // Length prefix keeps concatenated fields unambiguous.
    update_u64(text.size());
    return update(std::as_bytes(std::span(text.data(), text.size())));
}

Sha256& Sha256::update_u64(std::uint64_t value) {
    std::array<std::byte, 8> le;
    for (std::size_t i = 0; i < 8; ++i) le[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffU);
    return update(le);
}

Sha256& Sha256::update_f64(double value) { return update_u64(std::bit_cast<std::uint64_t>(value)); }

std::string Sha256::hex_digest() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(as_ctx(ctx_), md.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::span<const std::byte> bytes) {
    Sha256 h;
    h.update(bytes);
    return h.hex_digest();
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace confens
