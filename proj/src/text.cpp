#include "embforge/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace embforge {

namespace {

// Decodes one codepoint starting at text[i]; advances i past it.
char32_t decode_one(std::string_view text, size_t& i) {
    const auto byte = [&](size_t k) { return static_cast<unsigned char>(text[k]); };
    unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + len > text.size()) {
        ++i;
        return 0xFFFD;
    }
    for (size_t k = 1; k < len; ++k) {
        unsigned char bk = byte(i + k);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

} // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) out.push_back(decode_one(text, i));
    return out;
}

size_t count_codepoints(std::string_view text) {
    size_t i = 0, n = 0;
    while (i < text.size()) {
        decode_one(text, i);
        ++n;
    }
    return n;
}

std::string truncate_codepoints(std::string_view text, size_t max_chars) {
    size_t i = 0, n = 0;
    while (i < text.size() && n < max_chars) {
        decode_one(text, i);
        ++n;
    }
    return std::string(text.substr(0, i));
}

ScriptClass script_of_codepoint(char32_t cp) {
    if ((cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z')) return ScriptClass::Latin;
    if (cp >= 0x00C0 && cp <= 0x024F) return ScriptClass::Latin; // Latin-1 supplement + extended A/B
    if ((cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF)) return ScriptClass::Han;
    if (cp >= 0x0400 && cp <= 0x04FF) return ScriptClass::Cyrillic;
    if (cp >= 0x0370 && cp <= 0x03FF) return ScriptClass::Greek;
    if (cp >= 0x0600 && cp <= 0x06FF) return ScriptClass::Arabic;
    if (cp >= 0xAC00 && cp <= 0xD7AF) return ScriptClass::Hangul;
    if (cp >= 0x3040 && cp <= 0x30FF) return ScriptClass::Kana;
    if (cp < 0x80) return ScriptClass::None; // ASCII digits/punct/space: not letters
    return ScriptClass::Other;
}

ScriptClass majority_script(std::string_view text) {
    std::array<size_t, 9> counts{};
    size_t i = 0;
    while (i < text.size()) {
        ScriptClass sc = script_of_codepoint(decode_one(text, i));
        if (sc != ScriptClass::None) counts[static_cast<size_t>(sc)]++;
    }
    size_t best = static_cast<size_t>(ScriptClass::None);
    size_t best_count = 0;
    for (size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] > best_count) {
            best_count = counts[k];
            best = k;
        }
    }
    return static_cast<ScriptClass>(best);
}

std::string_view trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string_view> tokenize(std::string_view text) {
    std::vector<std::string_view> tokens;
    size_t i = 0;
    const auto is_sep = [](unsigned char c) {
        return std::isspace(c) || (c < 0x80 && std::ispunct(c));
    };
    while (i < text.size()) {
        while (i < text.size() && is_sep(static_cast<unsigned char>(text[i]))) ++i;
        size_t start = i;
        while (i < text.size() && !is_sep(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.push_back(text.substr(start, i - start));
    }
    return tokens;
}

uint64_t fnv1a64(std::string_view data, uint64_t seed) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97f4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t seed, std::string_view tag) {
    uint64_t state = seed ^ fnv1a64(tag);
    return splitmix64(state);
}

} // namespace embforge
