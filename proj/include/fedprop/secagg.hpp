#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedprop::secagg {

// The modulus is always a power of two so that reduction is a mask and the
// fixed-point embedding is plain two's complement.
bool is_power_of_two(std::uint64_t p);

// Smallest power-of-two modulus that can hold a sum of `participants`
// encodings of values bounded by max_abs, rounding headroom included.
std::uint64_t choose_modulus(double max_abs, std::uint64_t scale, std::size_t participants);

// round(scale * x) mod p per entry.  `summands` is how many such encodings
// will later be added together; the precondition check covers that sum.
std::vector<std::uint64_t> encode_fixed_point(std::span<const double> update,
                                              std::uint64_t scale, std::uint64_t p,
                                              std::size_t summands = 1);
std::vector<double> decode_fixed_point(std::span<const std::uint64_t> words,
                                       std::uint64_t scale, std::uint64_t p);

// Pairwise-free additive masking: one key per participant, keys sum to zero
// mod p entrywise, so the sum of masked updates equals the sum of encodings.
struct MaskSet {
    std::uint64_t modulus = 0;
    std::vector<std::size_t> participants;
    std::vector<std::vector<std::uint64_t>> keys;  // aligned with participants
};

MaskSet generate_masks(std::vector<std::size_t> participants, std::size_t width,
                       std::uint64_t p, std::uint64_t seed);

struct MaskedUpdate {
    std::size_t client_id = 0;
    std::size_t round = 0;
    std::uint64_t modulus = 0;
    std::vector<std::uint64_t> words;
    bool operator==(const MaskedUpdate&) const = default;
};

MaskedUpdate mask_update(std::span<const std::uint64_t> encoded, const MaskSet& masks,
                         std::size_t client_id, std::size_t round);

// Entrywise sum mod p.  Every participant in the mask set must be present
// exactly once, otherwise the masks cannot cancel and this throws.
std::vector<std::uint64_t> aggregate_masked(const std::vector<MaskedUpdate>& updates,
                                            const MaskSet& masks);

// Length-prefixed little-endian wire form for the run archive.
std::vector<std::uint8_t> to_bytes(const MaskedUpdate& update);
MaskedUpdate masked_update_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace fedprop::secagg
