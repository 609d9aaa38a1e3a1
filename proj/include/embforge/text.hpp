#pragma once
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace embforge {

// ---------------------------------------------------------------------------
// UTF-8 helpers. Lengths throughout the toolkit are measured in codepoints;
// malformed bytes decode as one U+FFFD each so no input can crash a stage.
// ---------------------------------------------------------------------------

std::vector<char32_t> decode_utf8(std::string_view text);
size_t count_codepoints(std::string_view text);

// Prefix truncation to at most max_chars codepoints, cutting only at
// codepoint boundaries.
std::string truncate_codepoints(std::string_view text, size_t max_chars);

// Majority Unicode script class of the letters in a text. Good enough to
// tell Latin from Han fixtures apart; not a language detector.
enum class ScriptClass { Latin, Han, Cyrillic, Greek, Arabic, Hangul, Kana, Other, None };

ScriptClass script_of_codepoint(char32_t cp);
ScriptClass majority_script(std::string_view text);

std::string_view trim(std::string_view s);
std::string ascii_lower(std::string_view s);

// Whitespace + punctuation tokenizer: a token is a maximal run of bytes that
// are neither ASCII whitespace nor ASCII punctuation.
std::vector<std::string_view> tokenize(std::string_view text);

// ---------------------------------------------------------------------------
// Deterministic hashing / RNG plumbing shared by every seeded stage.
// ---------------------------------------------------------------------------

uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t splitmix64(uint64_t& state);

// Derive an independent stream seed from (seed, tag); used so each stage of a
// run gets its own RNG stream.
uint64_t derive_seed(uint64_t seed, std::string_view tag);

// Minimal engine wrapper over splitmix64 for the uniform_* templates.
struct SplitMix {
    uint64_t state;
    explicit SplitMix(uint64_t seed) : state(seed) {}
    uint64_t operator()() { return splitmix64(state); }
};

// Uniform draw in [0, n) from a raw 64-bit generator step, by rejection.
// Kept out of <random> distributions so sequences are identical across
// standard library implementations.
template <class Engine>
uint64_t uniform_below(Engine& eng, uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
template <class Engine>
double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

} // namespace embforge
