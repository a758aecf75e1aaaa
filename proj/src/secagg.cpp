#include "fedprop/secagg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>
#include <string>

#include "fedprop/rng.hpp"

namespace fedprop::secagg {

namespace {

void require_modulus(std::uint64_t p) {
    if (p < 2 || !is_power_of_two(p))
        throw std::invalid_argument("secagg: modulus must be a power of two >= 2");
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_u64(std::span<const std::uint8_t> bytes, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[off + i]) << (8 * i);
    return v;
}

}  // namespace

bool is_power_of_two(std::uint64_t p) { return p != 0 && (p & (p - 1)) == 0; }

std::uint64_t choose_modulus(double max_abs, std::uint64_t scale, std::size_t participants) {
    if (!(max_abs >= 0.0) || !std::isfinite(max_abs))
        throw std::invalid_argument("choose_modulus: max_abs must be finite and >= 0");
    if (scale == 0) throw std::invalid_argument("choose_modulus: zero scale");
    if (participants == 0) throw std::invalid_argument("choose_modulus: no participants");
    // one encoding: |round(scale x)| <= scale * max_abs + 1/2; the signed
    // embedding of a sum of k of them needs p/2 > k * (scale * max_abs + 1)
    const double bound =
        2.0 * static_cast<double>(participants) * (static_cast<double>(scale) * max_abs + 1.0);
    std::uint64_t p = 2;
    while (static_cast<double>(p) <= bound) {
        if (p > (std::uint64_t{1} << 62))
            throw std::invalid_argument("choose_modulus: required modulus exceeds 2^63");
        p <<= 1;
    }
    return p;
}

std::vector<std::uint64_t> encode_fixed_point(std::span<const double> update,
                                              std::uint64_t scale, std::uint64_t p,
                                              std::size_t summands) {
    require_modulus(p);
    if (scale == 0) throw std::invalid_argument("encode: zero scale");
    if (summands == 0) throw std::invalid_argument("encode: zero summands");
    double max_abs = 0.0;
    for (double x : update) {
        if (!std::isfinite(x)) throw std::invalid_argument("encode: non-finite entry");
        max_abs = std::max(max_abs, std::abs(x));
    }
    const std::uint64_t needed = choose_modulus(max_abs, scale, summands);
    if (needed > p)
        throw std::invalid_argument(
            "encode: values would overflow the aggregate; need modulus >= " +
            std::to_string(needed));

    std::vector<std::uint64_t> words(update.size());
    const std::uint64_t mask = p - 1;
    for (std::size_t i = 0; i < update.size(); ++i) {
        const long long q = std::llround(static_cast<double>(scale) * update[i]);
        words[i] = static_cast<std::uint64_t>(q) & mask;  // two's complement mod p
    }
    return words;
}

std::vector<double> decode_fixed_point(std::span<const std::uint64_t> words,
                                       std::uint64_t scale, std::uint64_t p) {
    require_modulus(p);
    if (scale == 0) throw std::invalid_argument("decode: zero scale");
    std::vector<double> out(words.size());
    const std::uint64_t half = p / 2;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::uint64_t w = words[i];
        if (w >= p) throw std::invalid_argument("decode: word outside modulus range");
        const double centered = w >= half
                                    ? -static_cast<double>(p - w)
                                    : static_cast<double>(w);
        out[i] = centered / static_cast<double>(scale);
    }
    return out;
}

MaskSet generate_masks(std::vector<std::size_t> participants, std::size_t width,
                       std::uint64_t p, std::uint64_t seed) {
    require_modulus(p);
    if (participants.empty()) throw std::invalid_argument("generate_masks: no participants");
    {
        std::set<std::size_t> uniq(participants.begin(), participants.end());
        if (uniq.size() != participants.size())
            throw std::invalid_argument("generate_masks: duplicate participant");
    }

    MaskSet set;
    set.modulus = p;
    set.participants = std::move(participants);
    const std::size_t k = set.participants.size();
    set.keys.assign(k, std::vector<std::uint64_t>(width, 0));
    if (k == 1) return set;  // nothing to hide from, and the sum must be zero

    Rng rng(seed);
    const std::uint64_t mask = p - 1;
    std::vector<std::uint64_t> total(width, 0);
    for (std::size_t c = 0; c + 1 < k; ++c) {
        for (std::size_t i = 0; i < width; ++i) {
            const std::uint64_t key = rng() & mask;  // uniform on [0, p)
            set.keys[c][i] = key;
            total[i] = (total[i] + key) & mask;
        }
    }
    for (std::size_t i = 0; i < width; ++i)
        set.keys[k - 1][i] = (p - total[i]) & mask;  // completes the zero sum
    return set;
}

MaskedUpdate mask_update(std::span<const std::uint64_t> encoded, const MaskSet& masks,
                         std::size_t client_id, std::size_t round) {
    const auto it =
        std::find(masks.participants.begin(), masks.participants.end(), client_id);
    if (it == masks.participants.end())
        throw std::invalid_argument("mask_update: client has no key in this mask set");
    const auto slot = static_cast<std::size_t>(it - masks.participants.begin());
    const std::vector<std::uint64_t>& key = masks.keys[slot];
    if (key.size() != encoded.size())
        throw std::invalid_argument("mask_update: width mismatch with mask set");

    MaskedUpdate out;
    out.client_id = client_id;
    out.round = round;
    out.modulus = masks.modulus;
    out.words.resize(encoded.size());
    const std::uint64_t mask = masks.modulus - 1;
    for (std::size_t i = 0; i < encoded.size(); ++i) {
        if (encoded[i] >= masks.modulus)
            throw std::invalid_argument("mask_update: encoding outside modulus range");
        out.words[i] = (encoded[i] + key[i]) & mask;
    }
    return out;
}

std::vector<std::uint64_t> aggregate_masked(const std::vector<MaskedUpdate>& updates,
                                            const MaskSet& masks) {
    require_modulus(masks.modulus);
    std::set<std::size_t> expected(masks.participants.begin(), masks.participants.end());
    std::set<std::size_t> seen;
    for (const MaskedUpdate& u : updates) {
        if (u.modulus != masks.modulus)
            throw std::invalid_argument("aggregate: modulus mismatch");
        if (!expected.count(u.client_id))
            throw std::invalid_argument("aggregate: update from client outside the mask set");
        if (!seen.insert(u.client_id).second)
            throw std::invalid_argument("aggregate: duplicate update for client");
    }
    if (seen != expected)
        throw std::runtime_error(
            "aggregate: incomplete mask set (a participant's masked update is missing, "
            "so the masks cannot cancel)");

    const std::size_t width = updates.empty() ? 0 : updates.front().words.size();
    for (const MaskedUpdate& u : updates)
        if (u.words.size() != width)
            throw std::invalid_argument("aggregate: width mismatch between updates");

    std::vector<std::uint64_t> sum(width, 0);
    const std::uint64_t mask = masks.modulus - 1;
    for (const MaskedUpdate& u : updates)
        for (std::size_t i = 0; i < width; ++i) sum[i] = (sum[i] + u.words[i]) & mask;
    return sum;
}

std::vector<std::uint8_t> to_bytes(const MaskedUpdate& update) {
    std::vector<std::uint8_t> out;
    out.reserve(40 + 8 * update.words.size());
    append_u64(out, 0x5550414d50444546ULL);  // tag
    append_u64(out, update.client_id);
    append_u64(out, update.round);
    append_u64(out, update.modulus);
    append_u64(out, update.words.size());
    for (std::uint64_t w : update.words) append_u64(out, w);
    return out;
}

MaskedUpdate masked_update_from_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 40 || read_u64(bytes, 0) != 0x5550414d50444546ULL)
        throw std::invalid_argument("masked update: bad header");
    MaskedUpdate out;
    out.client_id = read_u64(bytes, 8);
    out.round = read_u64(bytes, 16);
    out.modulus = read_u64(bytes, 24);
    const std::uint64_t count = read_u64(bytes, 32);
    if (bytes.size() != 40 + 8 * count)
        throw std::invalid_argument("masked update: truncated payload");
    out.words.resize(count);
    for (std::size_t i = 0; i < count; ++i) out.words[i] = read_u64(bytes, 40 + 8 * i);
    return out;
}

}  // namespace fedprop::secagg
