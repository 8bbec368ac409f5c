// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldla/text_encoder.hpp"

#include "ldla/errors.hpp"

#include <charconv>
#include <optional>
#include <sstream>
#include <vector>

namespace ldla {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_token(std::string_view token, std::uint64_t seed) {
    return fnv1a({reinterpret_cast<const unsigned char*>(token.data()), token.size()}, seed);
}

std::optional<double> parse_percent(std::string_view token) {
    if (token.size() < 2 || token.back() != '%') {
        return std::nullopt;
    }
    const std::string_view digits = token.substr(0, token.size() - 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        return std::nullopt;
    }
    return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) {
            ++i;
        }
        std::size_t j = i;
        while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) {
            ++j;
        }
        if (j > i) {
            out.push_back(s.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

}  // namespace

Tensor ConditionEmbedding::pooled() const {
    const int L = token_count(), D = dim();
    Tensor out({D});
    for (int i = 0; i < L; ++i) {
        for (int d = 0; d < D; ++d) {
            out[static_cast<std::size_t>(d)] += tokens[static_cast<std::size_t>(i) * D + d];
        }
    }
    return out;
}

HashingTextEncoder::HashingTextEncoder(int dim, int max_tokens) : dim_(dim), max_tokens_(max_tokens) {
    if (dim < 4 || max_tokens < 1) {
        throw ConfigError("HashingTextEncoder needs dim >= 4 and max_tokens >= 1");
    }
}

ConditionEmbedding HashingTextEncoder::embed(std::string_view prompt) const {
    const auto words = split_ws(prompt);
    Tensor tokens({max_tokens_, dim_}, 0.0);
    const int hashed_dims = dim_ - 2;

    auto fill_slot = [&](int slot, std::uint64_t h, std::optional<double> percent) {
        double* v = tokens.data() + static_cast<std::size_t>(slot) * dim_;
        std::uint64_t state = h;
        const double amp = percent ? 1e-3 : 0.25;
        for (int d = 0; d < hashed_dims; ++d) {
            const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
            v[d] = amp * (2.0 * u - 1.0);
        }
        v[hashed_dims] = percent ? *percent / 100.0 : 0.0;
        v[hashed_dims + 1] = percent ? 1.0 : 0.0;
    };

    const int last = max_tokens_ - 1;
    std::uint64_t overflow = 0;
    bool has_overflow = false;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const int slot = static_cast<int>(i);
        const std::uint64_t slot_seed = 0xcbf29ce484222325ULL ^ (0x9e3779b97f4a7c15ULL * (i + 1));
        if (slot < last) {
            fill_slot(slot, hash_token(words[i], slot_seed), parse_percent(words[i]));
        } else {
            overflow = hash_token(words[i], has_overflow ? overflow : slot_seed);
            has_overflow = true;
        }
    }
    if (has_overflow) {
        fill_slot(last, overflow, words.size() == static_cast<std::size_t>(max_tokens_)
                                      ? parse_percent(words.back())
                                      : std::nullopt);
    }
    return ConditionEmbedding{std::move(tokens), std::string(prompt)};
}

}  // namespace ldla
